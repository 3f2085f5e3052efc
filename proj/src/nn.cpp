#include "fmkt/nn.hpp"

#include <cmath>

namespace fmkt::nn {

Var init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    quantize_f32(t);
    return Var(std::move(t), true);
}

Var init_zeros(std::vector<int> shape) { return Var(Tensor::zeros(std::move(shape)), true); }

Linear::Linear(int in_, int out_, Rng& rng) : in(in_), out_dim(out_) {
    w = init_weight({out_, in_}, in_, rng);
    b = init_zeros({out_});
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "w", w});
    out.push_back({prefix + "b", b});
}

Conv2d::Conv2d(int in_ch, int out_ch, int k, int pad_, Rng& rng) : pad(pad_) {
    w = init_weight({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    b = init_zeros({out_ch});
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "w", w});
    out.push_back({prefix + "b", b});
}

GroupNorm::GroupNorm(int channels, int groups_) : groups(groups_) {
    gamma = Var(Tensor::full({channels}, 1.0), true);
    beta = init_zeros({channels});
}

void GroupNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "gamma", gamma});
    out.push_back({prefix + "beta", beta});
}

LayerNorm::LayerNorm(int channels) {
    gamma = Var(Tensor::full({channels}, 1.0), true);
    beta = init_zeros({channels});
}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "gamma", gamma});
    out.push_back({prefix + "beta", beta});
}

Sgd::Sgd(std::vector<Var> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    for (auto& p : params_) velocity_.push_back(Tensor::zeros(p.value().shape));
}

void Sgd::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& v = velocity_[i];
        const Tensor& g = params_[i].grad();
        Tensor& val = params_[i].mutable_value();
        for (size_t k = 0; k < v.data.size(); ++k) {
            v.data[k] = momentum_ * v.data[k] + g.data[k];
            val.data[k] -= lr_ * v.data[k];
        }
        quantize_f32(val);
    }
}

void Sgd::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<Tensor> finite_difference_grads(const std::function<double()>& f,
                                            std::vector<Var>& params, double h) {
    std::vector<Tensor> grads;
    for (auto& p : params) {
        Tensor g = Tensor::zeros(p.value().shape);
        Tensor& val = p.mutable_value();
        for (size_t k = 0; k < val.data.size(); ++k) {
            double orig = val.data[k];
            val.data[k] = orig + h;
            double fp = f();
            val.data[k] = orig - h;
            double fm = f();
            val.data[k] = orig;
            g.data[k] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

}  // namespace fmkt::nn
