#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmkt/autograd.hpp"

namespace fmkt::losses {

using autograd::Var;

enum class Kind { squared_error, vanilla_kd, dkd, dist, pkd };

Kind parse_kind(const std::string& s);
std::string to_string(Kind k);

// Pluggable metric-based distillation loss L(prediction, target).
//   squared_error  mean squared error (oracle tests)
//   vanilla_kd     tau^2 * KL(softmax(target/tau) || softmax(prediction/tau)), batch mean
//   dkd            dkd_alpha*TCKD + dkd_beta*NCKD (target/non-target decomposition)
//   dist           dist_beta*(1 - mean row Pearson) + dist_gamma*(1 - mean column Pearson)
//                  over the softmaxed probability matrices
//   pkd            MSE between per-channel standardized feature maps
struct MetricLoss {
    Kind kind = Kind::vanilla_kd;
    double temperature = 4.0;
    double dkd_alpha = 1.0;
    double dkd_beta = 8.0;
    double dist_beta = 2.0;
    double dist_gamma = 2.0;

    static MetricLoss squared_error();
    static MetricLoss vanilla_kd(double tau = 4.0);
    static MetricLoss dkd(double tau = 4.0, double alpha = 1.0, double beta = 8.0);
    static MetricLoss dist(double beta = 2.0, double gamma = 2.0, double tau = 4.0);
    static MetricLoss pkd();
};

// Returns a non-negative scalar. `labels` are required for dkd only.
Var compute(const MetricLoss& loss, const Var& prediction, const Var& target,
            const std::optional<std::vector<int>>& labels = std::nullopt);

}  // namespace fmkt::losses
