#pragma once

#include <functional>
#include <vector>

#include "fmkt/schedules.hpp"
#include "fmkt/tensor.hpp"

namespace fmkt::analysis {

// Analytic velocity field with a closed-form flow endpoint, used to exercise
// the Euler sampler's truncation-error behaviour. The sampler integrates
// z' = -v(z, t) from t = 1 down to 0 (descending time, step 1/K).
struct AnalyticField {
    std::function<double(double z, double t)> velocity;
    // exact state at integration time tau in [0,1] given the initial state
    std::function<double(double z1, double tau)> exact_state;
    // psi(t) = dv/dz along the exact trajectory (propagation factor)
    std::function<double(double z, double t)> velocity_dz;
};

AnalyticField constant_field(double c);
AnalyticField linear_field();  // v(z,t) = z, endpoint z1 * e^-1

struct ErrorStudyReport {
    std::vector<int> k_values;
    std::vector<double> endpoint_errors;  // |Z_0 - exact endpoint| per K
    double fitted_order = 0.0;            // slope of -log(err) vs log(K)
    // signed per-step velocity defects per K (first-order term of the
    // truncation recursion), and the recursion's endpoint-error estimate
    std::vector<std::vector<double>> per_step_errors;
    std::vector<double> first_order_estimates;
};

// Runs the Euler sampler for every K against the exact endpoint and fits the
// log-log convergence order. When with_per_step is set, also evaluates the
// truncation recursion numerically: the signed one-step defects along the
// exact trajectory, propagated by the (1 - psi/K) damping factors.
ErrorStudyReport truncation_error_study(const AnalyticField& field,
                                        const schedules::NoiseSchedule& schedule, double z_start,
                                        const std::vector<int>& k_values, bool with_per_step = false);

struct ReliabilityHistogram {
    std::vector<double> bin_edges;       // bins+1 edges partitioning [0,1]
    std::vector<double> bin_confidence;  // mean max-probability per bin
    std::vector<double> bin_accuracy;    // fraction correct per bin
    std::vector<int> bin_counts;
    int step_index = 0;
    double ece = 0.0;  // expected calibration error (count-weighted gap)
};

// Standard confidence-vs-accuracy binning of max-probability predictions.
// Rows of `probabilities` must sum to 1 within 1e-4.
ReliabilityHistogram reliability_histogram(const Tensor& probabilities,
                                           const std::vector<int>& labels, int bins,
                                           int step_index);

}  // namespace fmkt::analysis
