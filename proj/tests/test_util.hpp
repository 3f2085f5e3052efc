#pragma once

#include <functional>
#include <vector>

#include <doctest.h>

#include "fmkt/nn.hpp"

namespace fmkt_test {

using fmkt::Rng;
using fmkt::Tensor;
using fmkt::autograd::Var;

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

// Autodiff-vs-central-difference check for a scalar function of `leaves`.
// f() must rebuild the graph from the leaves' current values and return the
// loss value after running backward into the leaves' grads.
inline void gradcheck(const std::function<double()>& forward_backward,
                      const std::function<double()>& forward_only, std::vector<Var> leaves,
                      double h = 1e-6, double tol = 5e-6) {
    for (auto& leaf : leaves) leaf.zero_grad();
    forward_backward();
    std::vector<Tensor> analytic;
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());
    std::vector<Tensor> numeric = fmkt::nn::finite_difference_grads(forward_only, leaves, h);
    for (size_t i = 0; i < leaves.size(); ++i) {
        REQUIRE(analytic[i].same_shape(numeric[i]));
        for (size_t k = 0; k < analytic[i].data.size(); ++k) {
            double a = analytic[i].data[k], n = numeric[i].data[k];
            INFO("leaf ", i, " element ", k, ": analytic ", a, " numeric ", n);
            CHECK(std::fabs(a - n) <= tol * std::max(1.0, std::fabs(n)));
        }
    }
}

}  // namespace fmkt_test
