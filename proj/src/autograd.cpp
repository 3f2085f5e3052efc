#include "fmkt/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace fmkt::autograd {

namespace {

thread_local bool g_grad_enabled = true;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor& Node::ensure_grad() {
    if (!has_grad) {
        grad = Tensor::zeros(value.shape);
        has_grad = true;
    }
    return grad;
}

Var::Var(Tensor value, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Var::zero_grad() {
    if (node_->has_grad)
        std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
}

Var constant(Tensor value) { return Var(std::move(value), false); }

namespace {

bool any_requires(const std::vector<Var>& parents) {
    for (const auto& p : parents)
        if (p.requires_grad()) return true;
    return false;
}

Var make_op(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> fn) {
    if (!g_grad_enabled || !any_requires(parents)) return Var(std::move(value), false);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(fn);
    return Var(std::move(n));
}

void accum(const NodePtr& p, size_t i, double g) {
    if (p->requires_grad) p->ensure_grad().data[i] += g;
}

}  // namespace

void backward(const Var& root) {
    if (root.value().size() != 1)
        throw shape_error("backward() requires a scalar root, got " + root.value().shape_str());
    // Post-order over the subgraph that requires grad.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    Node* r = root.node().get();
    if (!r->requires_grad) return;
    stack.push_back({r, 0});
    visited.insert(r);
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    r->ensure_grad().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    Tensor v = t_add(a.value(), b.value());
    return make_op(std::move(v), {a, b}, [](Node& self) {
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            accum(self.parents[0], i, self.grad.data[i]);
            accum(self.parents[1], i, self.grad.data[i]);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    Tensor v = t_sub(a.value(), b.value());
    return make_op(std::move(v), {a, b}, [](Node& self) {
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            accum(self.parents[0], i, self.grad.data[i]);
            accum(self.parents[1], i, -self.grad.data[i]);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    Tensor v = t_mul(a.value(), b.value());
    return make_op(std::move(v), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            accum(self.parents[0], i, self.grad.data[i] * bv.data[i]);
            accum(self.parents[1], i, self.grad.data[i] * av.data[i]);
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor v = a.value();
    for (double& x : v.data) x += s;
    return make_op(std::move(v), {a}, [](Node& self) {
        for (size_t i = 0; i < self.grad.data.size(); ++i) accum(self.parents[0], i, self.grad.data[i]);
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor v = t_scale(a.value(), s);
    return make_op(std::move(v), {a}, [s](Node& self) {
        for (size_t i = 0; i < self.grad.data.size(); ++i) accum(self.parents[0], i, s * self.grad.data[i]);
    });
}

Var relu(const Var& a) {
    Tensor v = a.value();
    for (double& x : v.data) x = x > 0.0 ? x : 0.0;
    return make_op(std::move(v), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            if (av.data[i] > 0.0) accum(self.parents[0], i, self.grad.data[i]);
    });
}

Var silu(const Var& a) {
    Tensor v = a.value();
    for (double& x : v.data) x = x * sigmoid(x);
    return make_op(std::move(v), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            double s = sigmoid(av.data[i]);
            accum(self.parents[0], i, self.grad.data[i] * s * (1.0 + av.data[i] * (1.0 - s)));
        }
    });
}

Var log_v(const Var& a) {
    Tensor v = a.value();
    for (double& x : v.data) x = std::log(x);
    return make_op(std::move(v), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            accum(self.parents[0], i, self.grad.data[i] / av.data[i]);
    });
}

Var sqrt_v(const Var& a) {
    Tensor v = a.value();
    for (double& x : v.data) x = std::sqrt(x);
    return make_op(std::move(v), {a}, [](Node& self) {
        const Tensor& out = self.value;
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            accum(self.parents[0], i, 0.5 * self.grad.data[i] / out.data[i]);
    });
}

// ---------------------------------------------------------------------------
// reductions / shape
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
    double s = 0.0;
    for (double x : a.value().data) s += x;
    return make_op(Tensor::scalar(s), {a}, [](Node& self) {
        double g = self.grad.data[0];
        auto& p = self.parents[0];
        for (size_t i = 0; i < p->value.data.size(); ++i) accum(p, i, g);
    });
}

Var mean_all(const Var& a) {
    int n = a.value().size();
    double s = 0.0;
    for (double x : a.value().data) s += x;
    return make_op(Tensor::scalar(s / n), {a}, [n](Node& self) {
        double g = self.grad.data[0] / n;
        auto& p = self.parents[0];
        for (size_t i = 0; i < p->value.data.size(); ++i) accum(p, i, g);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.value().size())
        throw shape_error("reshape: numel mismatch " + a.value().shape_str());
    Tensor v(std::move(shape), a.value().data);
    return make_op(std::move(v), {a}, [](Node& self) {
        for (size_t i = 0; i < self.grad.data.size(); ++i) accum(self.parents[0], i, self.grad.data[i]);
    });
}

Var detach(const Var& a) { return Var(a.value(), false); }

// ---------------------------------------------------------------------------
// linear / conv
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        throw shape_error("linear: x " + xv.shape_str() + " w " + wv.shape_str());
    int B = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    if (bv.size() != O) throw shape_error("linear: bias " + bv.shape_str());
    Tensor out = Tensor::zeros({B, O});
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < O; ++o) {
            double s = bv.data[o];
            const double* xr = &xv.data[static_cast<size_t>(b) * I];
            const double* wr = &wv.data[static_cast<size_t>(o) * I];
            for (int i = 0; i < I; ++i) s += xr[i] * wr[i];
            out.data[static_cast<size_t>(b) * O + o] = s;
        }
    return make_op(std::move(out), {x, w, bias}, [B, I, O](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const Tensor& xv2 = px->value;
        const Tensor& wv2 = pw->value;
        for (int b = 0; b < B; ++b)
            for (int o = 0; o < O; ++o) {
                double g = self.grad.data[static_cast<size_t>(b) * O + o];
                if (g == 0.0) continue;
                if (px->requires_grad) {
                    double* gx = &px->ensure_grad().data[static_cast<size_t>(b) * I];
                    const double* wr = &wv2.data[static_cast<size_t>(o) * I];
                    for (int i = 0; i < I; ++i) gx[i] += g * wr[i];
                }
                if (pw->requires_grad) {
                    double* gw = &pw->ensure_grad().data[static_cast<size_t>(o) * I];
                    const double* xr = &xv2.data[static_cast<size_t>(b) * I];
                    for (int i = 0; i < I; ++i) gw[i] += g * xr[i];
                }
                if (pb->requires_grad) pb->ensure_grad().data[o] += g;
            }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1))
        throw shape_error("conv2d: x " + xv.shape_str() + " w " + wv.shape_str());
    int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int O = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    int Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    if (Ho <= 0 || Wo <= 0) throw shape_error("conv2d: kernel larger than padded input");
    if (bv.size() != O) throw shape_error("conv2d: bias " + bv.shape_str());
    auto xi = [C, H, W](int b, int c, int h, int ww) {
        return ((static_cast<size_t>(b) * C + c) * H + h) * W + ww;
    };
    auto wi = [C, kh, kw](int o, int c, int i, int j) {
        return ((static_cast<size_t>(o) * C + c) * kh + i) * kw + j;
    };
    auto oi = [O, Ho, Wo](int b, int o, int h, int ww) {
        return ((static_cast<size_t>(b) * O + o) * Ho + h) * Wo + ww;
    };
    Tensor out = Tensor::zeros({B, O, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < O; ++o)
            for (int h = 0; h < Ho; ++h)
                for (int ww = 0; ww < Wo; ++ww) {
                    double s = bv.data[o];
                    for (int c = 0; c < C; ++c)
                        for (int i = 0; i < kh; ++i) {
                            int hh = h + i - pad;
                            if (hh < 0 || hh >= H) continue;
                            for (int j = 0; j < kw; ++j) {
                                int cc = ww + j - pad;
                                if (cc < 0 || cc >= W) continue;
                                s += xv.data[xi(b, c, hh, cc)] * wv.data[wi(o, c, i, j)];
                            }
                        }
                    out.data[oi(b, o, h, ww)] = s;
                }
    return make_op(std::move(out), {x, w, bias}, [=](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const Tensor& xv2 = px->value;
        const Tensor& wv2 = pw->value;
        for (int b = 0; b < B; ++b)
            for (int o = 0; o < O; ++o)
                for (int h = 0; h < Ho; ++h)
                    for (int ww = 0; ww < Wo; ++ww) {
                        double g = self.grad.data[oi(b, o, h, ww)];
                        if (g == 0.0) continue;
                        if (pb->requires_grad) pb->ensure_grad().data[o] += g;
                        for (int c = 0; c < C; ++c)
                            for (int i = 0; i < kh; ++i) {
                                int hh = h + i - pad;
                                if (hh < 0 || hh >= H) continue;
                                for (int j = 0; j < kw; ++j) {
                                    int cc = ww + j - pad;
                                    if (cc < 0 || cc >= W) continue;
                                    if (px->requires_grad)
                                        px->ensure_grad().data[xi(b, c, hh, cc)] += g * wv2.data[wi(o, c, i, j)];
                                    if (pw->requires_grad)
                                        pw->ensure_grad().data[wi(o, c, i, j)] += g * xv2.data[xi(b, c, hh, cc)];
                                }
                            }
                    }
    });
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

namespace {

void softmax_row(const double* x, double* y, int n) {
    double m = x[0];
    for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - m);
        s += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= s;
}

}  // namespace

Var softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw shape_error("softmax_rows: want [B,C], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1);
    Tensor out = Tensor::zeros({B, C});
    for (int b = 0; b < B; ++b)
        softmax_row(&xv.data[static_cast<size_t>(b) * C], &out.data[static_cast<size_t>(b) * C], C);
    return make_op(std::move(out), {x}, [B, C](Node& self) {
        auto& p = self.parents[0];
        for (int b = 0; b < B; ++b) {
            const double* y = &self.value.data[static_cast<size_t>(b) * C];
            const double* g = &self.grad.data[static_cast<size_t>(b) * C];
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += g[c] * y[c];
            for (int c = 0; c < C; ++c)
                accum(p, static_cast<size_t>(b) * C + c, y[c] * (g[c] - dot));
        }
    });
}

Var log_softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw shape_error("log_softmax_rows: want [B,C], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1);
    Tensor out = Tensor::zeros({B, C});
    for (int b = 0; b < B; ++b) {
        const double* xr = &xv.data[static_cast<size_t>(b) * C];
        double m = xr[0];
        for (int c = 1; c < C; ++c) m = std::max(m, xr[c]);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(xr[c] - m);
        double lse = m + std::log(s);
        for (int c = 0; c < C; ++c) out.data[static_cast<size_t>(b) * C + c] = xr[c] - lse;
    }
    return make_op(std::move(out), {x}, [B, C](Node& self) {
        auto& p = self.parents[0];
        for (int b = 0; b < B; ++b) {
            const double* y = &self.value.data[static_cast<size_t>(b) * C];
            const double* g = &self.grad.data[static_cast<size_t>(b) * C];
            double gs = 0.0;
            for (int c = 0; c < C; ++c) gs += g[c];
            for (int c = 0; c < C; ++c)
                accum(p, static_cast<size_t>(b) * C + c, g[c] - std::exp(y[c]) * gs);
        }
    });
}

Var select_class(const Var& x, const std::vector<int>& labels) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw shape_error("select_class: want [B,C], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1);
    if (static_cast<int>(labels.size()) != B) throw shape_error("select_class: labels size mismatch");
    Tensor out = Tensor::zeros({B});
    for (int b = 0; b < B; ++b) {
        if (labels[b] < 0 || labels[b] >= C) throw shape_error("select_class: label out of range");
        out.data[b] = xv.data[static_cast<size_t>(b) * C + labels[b]];
    }
    std::vector<int> ls = labels;
    return make_op(std::move(out), {x}, [C, ls](Node& self) {
        auto& p = self.parents[0];
        int B2 = static_cast<int>(ls.size());
        for (int b = 0; b < B2; ++b)
            accum(p, static_cast<size_t>(b) * C + ls[b], self.grad.data[b]);
    });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Tensor& xv = logits.value();
    if (xv.rank() != 2) throw shape_error("cross_entropy: want [B,C], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1);
    if (static_cast<int>(labels.size()) != B) throw shape_error("cross_entropy: labels size mismatch");
    Tensor probs = Tensor::zeros({B, C});
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const double* xr = &xv.data[static_cast<size_t>(b) * C];
        double* pr = &probs.data[static_cast<size_t>(b) * C];
        softmax_row(xr, pr, C);
        if (labels[b] < 0 || labels[b] >= C) throw shape_error("cross_entropy: label out of range");
        loss -= std::log(std::max(pr[labels[b]], 1e-300));
    }
    loss /= B;
    std::vector<int> ls = labels;
    return make_op(Tensor::scalar(loss), {logits}, [B, C, ls, probs](Node& self) {
        auto& p = self.parents[0];
        double g = self.grad.data[0] / B;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double d = probs.data[static_cast<size_t>(b) * C + c] - (c == ls[b] ? 1.0 : 0.0);
                accum(p, static_cast<size_t>(b) * C + c, g * d);
            }
    });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace {

// Shared slice-normalization backward. For y = gamma*(x-mu)/s + beta over a
// slice of m elements: dx = (h - mean(h) - xhat*mean(h*xhat))/s, h = gamma*g.
struct NormSlice {
    std::vector<size_t> idx;  // element offsets of the slice
    double mean = 0.0, inv_std = 1.0;
};

}  // namespace

static Var norm_op(const Var& x, const Var& gamma, const Var& beta, double eps,
                   const std::vector<NormSlice>& layout_proto,
                   const std::vector<int>& channel_of, const char* name) {
    // layout_proto carries index sets; stats are computed here.
    const Tensor& xv = x.value();
    std::vector<NormSlice> slices = layout_proto;
    Tensor out = Tensor::zeros(xv.shape);
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    for (auto& sl : slices) {
        double m = 0.0;
        for (size_t k : sl.idx) m += xv.data[k];
        m /= static_cast<double>(sl.idx.size());
        double var = 0.0;
        for (size_t k : sl.idx) {
            double d = xv.data[k] - m;
            var += d * d;
        }
        var /= static_cast<double>(sl.idx.size());
        sl.mean = m;
        sl.inv_std = 1.0 / std::sqrt(var + eps);
        for (size_t k : sl.idx) {
            double xh = (xv.data[k] - m) * sl.inv_std;
            out.data[k] = gv.data[static_cast<size_t>(channel_of[k])] * xh +
                          bv.data[static_cast<size_t>(channel_of[k])];
        }
    }
    (void)name;
    return make_op(std::move(out), {x, gamma, beta}, [slices, channel_of](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const Tensor& xv2 = px->value;
        const Tensor& gv2 = pg->value;
        for (const auto& sl : slices) {
            double mh = 0.0, mhx = 0.0;
            double m = static_cast<double>(sl.idx.size());
            for (size_t k : sl.idx) {
                double xh = (xv2.data[k] - sl.mean) * sl.inv_std;
                double h = gv2.data[static_cast<size_t>(channel_of[k])] * self.grad.data[k];
                mh += h;
                mhx += h * xh;
            }
            mh /= m;
            mhx /= m;
            for (size_t k : sl.idx) {
                double xh = (xv2.data[k] - sl.mean) * sl.inv_std;
                double h = gv2.data[static_cast<size_t>(channel_of[k])] * self.grad.data[k];
                if (px->requires_grad)
                    px->ensure_grad().data[k] += (h - mh - xh * mhx) * sl.inv_std;
                if (pg->requires_grad)
                    pg->ensure_grad().data[static_cast<size_t>(channel_of[k])] += self.grad.data[k] * xh;
                if (pb->requires_grad)
                    pb->ensure_grad().data[static_cast<size_t>(channel_of[k])] += self.grad.data[k];
            }
        }
    });
}

static void spatial_dims(const Tensor& x, int& B, int& C, int& H, int& W, const char* name) {
    if (x.rank() == 4) {
        B = x.dim(0);
        C = x.dim(1);
        H = x.dim(2);
        W = x.dim(3);
    } else if (x.rank() == 2) {
        B = x.dim(0);
        C = x.dim(1);
        H = W = 1;
    } else {
        throw shape_error(std::string(name) + ": want [B,C,H,W] or [B,C], got " + x.shape_str());
    }
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    int B, C, H, W;
    spatial_dims(x.value(), B, C, H, W, "group_norm");
    if (groups <= 0 || C % groups != 0) throw config_error("group_norm: groups must divide channels");
    if (gamma.value().size() != C || beta.value().size() != C)
        throw shape_error("group_norm: affine params must be [C]");
    int cpg = C / groups;
    std::vector<NormSlice> slices;
    std::vector<int> channel_of(static_cast<size_t>(B) * C * H * W);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            NormSlice sl;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        size_t k = ((static_cast<size_t>(b) * C + c) * H + h) * W + w;
                        sl.idx.push_back(k);
                        channel_of[k] = c;
                    }
            slices.push_back(std::move(sl));
        }
    return norm_op(x, gamma, beta, eps, slices, channel_of, "group_norm");
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
    int B, C, H, W;
    spatial_dims(x.value(), B, C, H, W, "layer_norm");
    if (gamma.value().size() != C || beta.value().size() != C)
        throw shape_error("layer_norm: affine params must be [C]");
    std::vector<NormSlice> slices;
    std::vector<int> channel_of(static_cast<size_t>(B) * C * H * W);
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                NormSlice sl;
                for (int c = 0; c < C; ++c) {
                    size_t k = ((static_cast<size_t>(b) * C + c) * H + h) * W + w;
                    sl.idx.push_back(k);
                    channel_of[k] = c;
                }
                slices.push_back(std::move(sl));
            }
    return norm_op(x, gamma, beta, eps, slices, channel_of, "layer_norm");
}

Var standardize_per_channel(const Var& x, double eps) {
    int B, C, H, W;
    spatial_dims(x.value(), B, C, H, W, "standardize_per_channel");
    std::vector<NormSlice> slices;
    std::vector<int> channel_of(static_cast<size_t>(B) * C * H * W, 0);
    for (int c = 0; c < C; ++c) {
        NormSlice sl;
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    sl.idx.push_back(((static_cast<size_t>(b) * C + c) * H + h) * W + w);
        slices.push_back(std::move(sl));
    }
    Var ones(Tensor::full({C}, 1.0), false);
    Var zeros(Tensor::zeros({C}), false);
    return norm_op(x, ones, zeros, eps, slices, channel_of, "standardize_per_channel");
}

// ---------------------------------------------------------------------------
// Pearson correlation means
// ---------------------------------------------------------------------------

namespace {

// slice extraction helpers: rows (stride 1) or cols (stride C) of [B,C]
struct SliceSpec {
    size_t start;
    size_t stride;
    int n;
};

Var pearson_mean_impl(const Var& u, const Var& v, double eps, bool rows) {
    const Tensor& uv = u.value();
    const Tensor& vv = v.value();
    require_same_shape(uv, vv, "pearson_mean");
    if (uv.rank() != 2) throw shape_error("pearson_mean: want [B,C], got " + uv.shape_str());
    int B = uv.dim(0), C = uv.dim(1);
    int slices = rows ? B : C;
    int n = rows ? C : B;
    std::vector<SliceSpec> spec(static_cast<size_t>(slices));
    for (int s = 0; s < slices; ++s)
        spec[s] = rows ? SliceSpec{static_cast<size_t>(s) * C, 1, n}
                       : SliceSpec{static_cast<size_t>(s), static_cast<size_t>(C), n};
    double total = 0.0;
    for (const auto& sp : spec) {
        double mu = 0.0, mv = 0.0;
        for (int i = 0; i < sp.n; ++i) {
            mu += uv.data[sp.start + i * sp.stride];
            mv += vv.data[sp.start + i * sp.stride];
        }
        mu /= sp.n;
        mv /= sp.n;
        double suv = 0.0, su = 0.0, sv = 0.0;
        for (int i = 0; i < sp.n; ++i) {
            double a = uv.data[sp.start + i * sp.stride] - mu;
            double b = vv.data[sp.start + i * sp.stride] - mv;
            suv += a * b;
            su += a * a;
            sv += b * b;
        }
        total += suv / std::sqrt(su * sv + eps);
    }
    double val = total / slices;
    return make_op(Tensor::scalar(val), {u, v}, [spec, eps, slices](Node& self) {
        auto& pu = self.parents[0];
        auto& pv = self.parents[1];
        const Tensor& uv2 = pu->value;
        const Tensor& vv2 = pv->value;
        double g = self.grad.data[0] / slices;
        for (const auto& sp : spec) {
            double mu = 0.0, mv = 0.0;
            for (int i = 0; i < sp.n; ++i) {
                mu += uv2.data[sp.start + i * sp.stride];
                mv += vv2.data[sp.start + i * sp.stride];
            }
            mu /= sp.n;
            mv /= sp.n;
            double suv = 0.0, su = 0.0, sv = 0.0;
            for (int i = 0; i < sp.n; ++i) {
                double a = uv2.data[sp.start + i * sp.stride] - mu;
                double b = vv2.data[sp.start + i * sp.stride] - mv;
                suv += a * b;
                su += a * a;
                sv += b * b;
            }
            double D = su * sv + eps;
            double R = 1.0 / std::sqrt(D);
            double R3 = R / D;
            for (int i = 0; i < sp.n; ++i) {
                size_t k = sp.start + i * sp.stride;
                double a = uv2.data[k] - mu;
                double b = vv2.data[k] - mv;
                if (pu->requires_grad)
                    pu->ensure_grad().data[k] += g * (R * b - suv * R3 * sv * a);
                if (pv->requires_grad)
                    pv->ensure_grad().data[k] += g * (R * a - suv * R3 * su * b);
            }
        }
    });
}

}  // namespace

Var pearson_mean_rows(const Var& u, const Var& v, double eps) { return pearson_mean_impl(u, v, eps, true); }
Var pearson_mean_cols(const Var& u, const Var& v, double eps) { return pearson_mean_impl(u, v, eps, false); }

// ---------------------------------------------------------------------------
// time embedding, pooling, attention
// ---------------------------------------------------------------------------

Var affine_time(const std::vector<double>& t, const Var& w, const Var& bias) {
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    if (wv.rank() != 1 || !wv.same_shape(bv)) throw shape_error("affine_time: w/bias must be [D]");
    int B = static_cast<int>(t.size()), D = wv.dim(0);
    Tensor out = Tensor::zeros({B, D});
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < D; ++j)
            out.data[static_cast<size_t>(b) * D + j] = t[static_cast<size_t>(b)] * wv.data[j] + bv.data[j];
    std::vector<double> tc = t;
    return make_op(std::move(out), {w, bias}, [tc, D](Node& self) {
        auto& pw = self.parents[0];
        auto& pb = self.parents[1];
        int B2 = static_cast<int>(tc.size());
        for (int b = 0; b < B2; ++b)
            for (int j = 0; j < D; ++j) {
                double g = self.grad.data[static_cast<size_t>(b) * D + j];
                if (pw->requires_grad) pw->ensure_grad().data[j] += g * tc[static_cast<size_t>(b)];
                if (pb->requires_grad) pb->ensure_grad().data[j] += g;
            }
    });
}

Var add_channel_bias(const Var& x, const Var& e) {
    const Tensor& xv = x.value();
    const Tensor& ev = e.value();
    if (xv.rank() == 2) return add(x, e);
    if (xv.rank() != 4 || ev.rank() != 2 || ev.dim(0) != xv.dim(0) || ev.dim(1) != xv.dim(1))
        throw shape_error("add_channel_bias: x " + xv.shape_str() + " e " + ev.shape_str());
    int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor out = xv;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double add_v = ev.data[static_cast<size_t>(b) * C + c];
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    out.data[((static_cast<size_t>(b) * C + c) * H + h) * W + w] += add_v;
        }
    return make_op(std::move(out), {x, e}, [B, C, H, W](Node& self) {
        auto& px = self.parents[0];
        auto& pe = self.parents[1];
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        size_t k = ((static_cast<size_t>(b) * C + c) * H + h) * W + w;
                        if (px->requires_grad) px->ensure_grad().data[k] += self.grad.data[k];
                        s += self.grad.data[k];
                    }
                if (pe->requires_grad) pe->ensure_grad().data[static_cast<size_t>(b) * C + c] += s;
            }
    });
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() == 2) {
        // already pooled; pass through so pool+linear transforms accept flat input
        return reshape(x, {xv.dim(0), xv.dim(1)});
    }
    if (xv.rank() != 4) throw shape_error("global_avg_pool: want [B,C,H,W], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor out = Tensor::zeros({B, C});
    double inv = 1.0 / (H * W);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    s += xv.data[((static_cast<size_t>(b) * C + c) * H + h) * W + w];
            out.data[static_cast<size_t>(b) * C + c] = s * inv;
        }
    return make_op(std::move(out), {x}, [B, C, H, W, inv](Node& self) {
        auto& px = self.parents[0];
        if (!px->requires_grad) return;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double g = self.grad.data[static_cast<size_t>(b) * C + c] * inv;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w)
                        px->ensure_grad().data[((static_cast<size_t>(b) * C + c) * H + h) * W + w] += g;
            }
    });
}

Var attention_full(const Var& x, const Var& wq, const Var& bq, const Var& wk, const Var& bk,
                   const Var& wv, const Var& bv, const Var& wo, const Var& bo,
                   const Var& pos_bias, int heads) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4) throw shape_error("attention_full: want [B,C,H,W], got " + xv.shape_str());
    int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int T = H * W;
    if (heads <= 0 || C % heads != 0) throw config_error("attention_full: heads must divide channels");
    int hd = C / heads;
    if (pos_bias.value().shape != std::vector<int>({heads, T, T}))
        throw shape_error("attention_full: pos_bias must be [heads,T,T]");
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // Per-sample intermediates saved for backward.
    std::vector<std::vector<double>> Xs(B), Qs(B), Ks(B), Vs(B), As(B), Os(B);
    const Tensor& wqv = wq.value();
    const Tensor& wkv = wk.value();
    const Tensor& wvv = wv.value();
    const Tensor& wov = wo.value();
    const Tensor& pv = pos_bias.value();
    Tensor out = Tensor::zeros({B, C, H, W});
    auto project = [&](const std::vector<double>& X, const Tensor& Wm, const Tensor& bias,
                       std::vector<double>& Y) {
        Y.assign(static_cast<size_t>(T) * C, 0.0);
        for (int t = 0; t < T; ++t)
            for (int o = 0; o < C; ++o) {
                double s = bias.data[o];
                for (int i = 0; i < C; ++i)
                    s += X[static_cast<size_t>(t) * C + i] * Wm.data[static_cast<size_t>(o) * C + i];
                Y[static_cast<size_t>(t) * C + o] = s;
            }
    };
    for (int b = 0; b < B; ++b) {
        auto& X = Xs[static_cast<size_t>(b)];
        X.resize(static_cast<size_t>(T) * C);
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c)
                X[static_cast<size_t>(t) * C + c] =
                    xv.data[((static_cast<size_t>(b) * C + c) * H + t / W) * W + t % W];
        project(X, wqv, bq.value(), Qs[static_cast<size_t>(b)]);
        project(X, wkv, bk.value(), Ks[static_cast<size_t>(b)]);
        project(X, wvv, bv.value(), Vs[static_cast<size_t>(b)]);
        auto& A = As[static_cast<size_t>(b)];
        A.assign(static_cast<size_t>(heads) * T * T, 0.0);
        auto& O = Os[static_cast<size_t>(b)];
        O.assign(static_cast<size_t>(T) * C, 0.0);
        for (int h = 0; h < heads; ++h) {
            for (int t = 0; t < T; ++t) {
                std::vector<double> row(static_cast<size_t>(T));
                for (int u = 0; u < T; ++u) {
                    double s = 0.0;
                    for (int d = 0; d < hd; ++d)
                        s += Qs[static_cast<size_t>(b)][static_cast<size_t>(t) * C + h * hd + d] *
                             Ks[static_cast<size_t>(b)][static_cast<size_t>(u) * C + h * hd + d];
                    row[static_cast<size_t>(u)] =
                        s * scale + pv.data[(static_cast<size_t>(h) * T + t) * T + u];
                }
                std::vector<double> arow(static_cast<size_t>(T));
                softmax_row(row.data(), arow.data(), T);
                for (int u = 0; u < T; ++u)
                    A[(static_cast<size_t>(h) * T + t) * T + u] = arow[static_cast<size_t>(u)];
                for (int d = 0; d < hd; ++d) {
                    double s = 0.0;
                    for (int u = 0; u < T; ++u)
                        s += arow[static_cast<size_t>(u)] *
                             Vs[static_cast<size_t>(b)][static_cast<size_t>(u) * C + h * hd + d];
                    O[static_cast<size_t>(t) * C + h * hd + d] = s;
                }
            }
        }
        for (int t = 0; t < T; ++t)
            for (int o = 0; o < C; ++o) {
                double s = bo.value().data[o];
                for (int i = 0; i < C; ++i)
                    s += O[static_cast<size_t>(t) * C + i] * wov.data[static_cast<size_t>(o) * C + i];
                out.data[((static_cast<size_t>(b) * C + o) * H + t / W) * W + t % W] = s;
            }
    }
    return make_op(std::move(out),
                   {x, wq, bq, wk, bk, wv, bv, wo, bo, pos_bias},
                   [=](Node& self) {
                       auto& px = self.parents[0];
                       auto& pwq = self.parents[1];
                       auto& pbq = self.parents[2];
                       auto& pwk = self.parents[3];
                       auto& pbk = self.parents[4];
                       auto& pwv = self.parents[5];
                       auto& pbv = self.parents[6];
                       auto& pwo = self.parents[7];
                       auto& pbo = self.parents[8];
                       auto& ppos = self.parents[9];
                       const Tensor& wqv2 = pwq->value;
                       const Tensor& wkv2 = pwk->value;
                       const Tensor& wvv2 = pwv->value;
                       const Tensor& wov2 = pwo->value;
                       for (int b = 0; b < B; ++b) {
                           const auto& X = Xs[static_cast<size_t>(b)];
                           const auto& Q = Qs[static_cast<size_t>(b)];
                           const auto& K = Ks[static_cast<size_t>(b)];
                           const auto& V = Vs[static_cast<size_t>(b)];
                           const auto& A = As[static_cast<size_t>(b)];
                           const auto& O = Os[static_cast<size_t>(b)];
                           std::vector<double> dY(static_cast<size_t>(T) * C);
                           for (int t = 0; t < T; ++t)
                               for (int c = 0; c < C; ++c)
                                   dY[static_cast<size_t>(t) * C + c] =
                                       self.grad.data[((static_cast<size_t>(b) * C + c) * H + t / W) * W + t % W];
                           // output projection
                           std::vector<double> dO(static_cast<size_t>(T) * C, 0.0);
                           for (int t = 0; t < T; ++t)
                               for (int o = 0; o < C; ++o) {
                                   double g = dY[static_cast<size_t>(t) * C + o];
                                   if (g == 0.0) continue;
                                   if (pbo->requires_grad) pbo->ensure_grad().data[o] += g;
                                   for (int i = 0; i < C; ++i) {
                                       dO[static_cast<size_t>(t) * C + i] +=
                                           g * wov2.data[static_cast<size_t>(o) * C + i];
                                       if (pwo->requires_grad)
                                           pwo->ensure_grad().data[static_cast<size_t>(o) * C + i] +=
                                               g * O[static_cast<size_t>(t) * C + i];
                                   }
                               }
                           std::vector<double> dQ(static_cast<size_t>(T) * C, 0.0),
                               dK(static_cast<size_t>(T) * C, 0.0), dV(static_cast<size_t>(T) * C, 0.0);
                           for (int h = 0; h < heads; ++h)
                               for (int t = 0; t < T; ++t) {
                                   // dA row then softmax backward
                                   std::vector<double> dArow(static_cast<size_t>(T), 0.0);
                                   for (int u = 0; u < T; ++u) {
                                       double s = 0.0;
                                       for (int d = 0; d < hd; ++d)
                                           s += dO[static_cast<size_t>(t) * C + h * hd + d] *
                                                V[static_cast<size_t>(u) * C + h * hd + d];
                                       dArow[static_cast<size_t>(u)] = s;
                                   }
                                   const double* arow = &A[(static_cast<size_t>(h) * T + t) * T];
                                   double dot = 0.0;
                                   for (int u = 0; u < T; ++u) dot += dArow[static_cast<size_t>(u)] * arow[u];
                                   for (int u = 0; u < T; ++u) {
                                       double dS = arow[u] * (dArow[static_cast<size_t>(u)] - dot);
                                       if (ppos->requires_grad)
                                           ppos->ensure_grad().data[(static_cast<size_t>(h) * T + t) * T + u] += dS;
                                       for (int d = 0; d < hd; ++d) {
                                           dQ[static_cast<size_t>(t) * C + h * hd + d] +=
                                               dS * scale * K[static_cast<size_t>(u) * C + h * hd + d];
                                           dK[static_cast<size_t>(u) * C + h * hd + d] +=
                                               dS * scale * Q[static_cast<size_t>(t) * C + h * hd + d];
                                       }
                                   }
                                   for (int d = 0; d < hd; ++d) {
                                       double g = dO[static_cast<size_t>(t) * C + h * hd + d];
                                       if (g == 0.0) continue;
                                       for (int u = 0; u < T; ++u)
                                           dV[static_cast<size_t>(u) * C + h * hd + d] += g * arow[u];
                                   }
                               }
                           // input projections
                           auto backproj = [&](const std::vector<double>& dP, const Tensor& Wm,
                                               const NodePtr& pw, const NodePtr& pb,
                                               std::vector<double>& dX) {
                               for (int t = 0; t < T; ++t)
                                   for (int o = 0; o < C; ++o) {
                                       double g = dP[static_cast<size_t>(t) * C + o];
                                       if (g == 0.0) continue;
                                       if (pb->requires_grad) pb->ensure_grad().data[o] += g;
                                       for (int i = 0; i < C; ++i) {
                                           dX[static_cast<size_t>(t) * C + i] +=
                                               g * Wm.data[static_cast<size_t>(o) * C + i];
                                           if (pw->requires_grad)
                                               pw->ensure_grad().data[static_cast<size_t>(o) * C + i] +=
                                                   g * X[static_cast<size_t>(t) * C + i];
                                       }
                                   }
                           };
                           std::vector<double> dX(static_cast<size_t>(T) * C, 0.0);
                           backproj(dQ, wqv2, pwq, pbq, dX);
                           backproj(dK, wkv2, pwk, pbk, dX);
                           backproj(dV, wvv2, pwv, pbv, dX);
                           if (px->requires_grad)
                               for (int t = 0; t < T; ++t)
                                   for (int c = 0; c < C; ++c)
                                       px->ensure_grad()
                                           .data[((static_cast<size_t>(b) * C + c) * H + t / W) * W + t % W] +=
                                           dX[static_cast<size_t>(t) * C + c];
                       }
                   });
}

}  // namespace fmkt::autograd
