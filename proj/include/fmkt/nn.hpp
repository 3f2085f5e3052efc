#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fmkt/autograd.hpp"
#include "fmkt/rng.hpp"

namespace fmkt::nn {

using autograd::Var;

struct NamedParam {
    std::string name;
    Var var;
};

class Module {
public:
    virtual ~Module() = default;
    virtual void collect(const std::string& prefix, std::vector<NamedParam>& out) const = 0;

    std::vector<NamedParam> named_parameters(const std::string& prefix = "") const {
        std::vector<NamedParam> out;
        collect(prefix, out);
        return out;
    }
    std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (auto& p : named_parameters()) out.push_back(p.var);
        return out;
    }
};

// Fan-in scaled uniform weights, zero biases; values snapped to the f32 grid.
Var init_weight(std::vector<int> shape, int fan_in, Rng& rng);
Var init_zeros(std::vector<int> shape);

class Linear : public Module {
public:
    Linear() = default;
    Linear(int in, int out, Rng& rng);
    Var forward(const Var& x) const { return autograd::linear(x, w, b); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const override;
    Var w, b;
    int in = 0, out_dim = 0;
};

class Conv2d : public Module {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int pad, Rng& rng);
    Var forward(const Var& x) const { return autograd::conv2d(x, w, b, pad); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const override;
    Var w, b;
    int pad = 0;
};

class GroupNorm : public Module {
public:
    GroupNorm() = default;
    GroupNorm(int channels, int groups);
    Var forward(const Var& x) const { return autograd::group_norm(x, gamma, beta, groups, 1e-5); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const override;
    Var gamma, beta;
    int groups = 1;
};

class LayerNorm : public Module {
public:
    LayerNorm() = default;
    explicit LayerNorm(int channels);
    Var forward(const Var& x) const { return autograd::layer_norm_channels(x, gamma, beta, 1e-5); }
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const override;
    Var gamma, beta;
};

// Plain momentum SGD with step decay handled by the caller via set_lr().
// Updated parameters are snapped back to the f32 grid so that checkpoints
// (which encode tensors as f32) round-trip bit-exactly.
class Sgd {
public:
    Sgd(std::vector<Var> params, double lr, double momentum);
    void step();
    void zero_grad();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> velocity_;
    double lr_;
    double momentum_;
};

// Central finite-difference gradient of f with respect to each parameter
// element; reference oracle for autodiff tests.
std::vector<Tensor> finite_difference_grads(const std::function<double()>& f,
                                            std::vector<Var>& params, double h);

}  // namespace fmkt::nn
