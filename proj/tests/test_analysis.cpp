#include <cmath>
#include <doctest.h>

#include "fmkt/analysis.hpp"
#include "fmkt/rng.hpp"
#include "test_util.hpp"

using namespace fmkt;
using namespace fmkt::analysis;

TEST_CASE("constant field: Euler is exact for every K") {
    auto report = truncation_error_study(constant_field(1.0), schedules::NoiseSchedule::rectified(),
                                         1.0, {1, 2, 4, 8, 16});
    for (double e : report.endpoint_errors) CHECK(e <= 1e-14);
}

TEST_CASE("linear field: first-order convergence over K in 4..256") {
    std::vector<int> ks;
    for (int k = 4; k <= 256; k *= 2) ks.push_back(k);
    auto report = truncation_error_study(linear_field(), schedules::NoiseSchedule::rectified(), 1.0, ks);
    CHECK(report.fitted_order >= 0.9);
    CHECK(report.fitted_order <= 1.1);
    // spot-check the endpoint error against the closed form |(1-1/K)^K - e^-1|
    for (size_t i = 0; i < ks.size(); ++i) {
        double k = ks[i];
        double expected = std::fabs(std::pow(1.0 - 1.0 / k, k) - std::exp(-1.0));
        CHECK(report.endpoint_errors[i] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("per-step defects propagated through the recursion reproduce the endpoint error") {
    std::vector<int> ks = {32, 64, 128, 256};
    auto report = truncation_error_study(linear_field(), schedules::NoiseSchedule::rectified(), 1.0,
                                         ks, /*with_per_step=*/true);
    REQUIRE(report.first_order_estimates.size() == ks.size());
    for (size_t i = 0; i < ks.size(); ++i) {
        // independent signed-error oracle: rerun Euler by hand
        int k = ks[i];
        double z = 1.0;
        for (int s = 0; s < k; ++s) z -= (1.0 / k) * z;
        double signed_err = z - std::exp(-1.0);
        double est = report.first_order_estimates[i];
        CHECK(std::fabs(est - signed_err) <= 0.25 * std::fabs(signed_err));
        CHECK(static_cast<int>(report.per_step_errors[i].size()) == k);
    }
}

TEST_CASE("error study validates its K grid") {
    CHECK_THROWS_AS(truncation_error_study(linear_field(), schedules::NoiseSchedule::rectified(), 1.0,
                                           {8, 4}),
                    config_error);
    CHECK_THROWS_AS(truncation_error_study(linear_field(), schedules::NoiseSchedule::rectified(), 1.0,
                                           {0, 4}),
                    config_error);
    CHECK_THROWS_AS(truncation_error_study(linear_field(), schedules::NoiseSchedule::rectified(), 1.0,
                                           {4, 2048}),
                    config_error);
}

TEST_CASE("reliability histogram: calibrated synthetic data lands near the diagonal") {
    Rng rng(987);
    int n = 20000, bins = 10;
    Tensor probs = Tensor::zeros({n, 2});
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double c = rng.uniform(0.5, 1.0);
        probs.data[static_cast<size_t>(i) * 2] = c;
        probs.data[static_cast<size_t>(i) * 2 + 1] = 1.0 - c;
        labels[static_cast<size_t>(i)] = rng.uniform() < c ? 0 : 1;
    }
    auto hist = reliability_histogram(probs, labels, bins, 3);
    CHECK(hist.step_index == 3);
    int total = 0;
    for (size_t b = 0; b < hist.bin_counts.size(); ++b) {
        total += hist.bin_counts[b];
        if (hist.bin_counts[b] > 50) {
            double tol = 2.0 / std::sqrt(static_cast<double>(hist.bin_counts[b]));
            CHECK(std::fabs(hist.bin_accuracy[b] - hist.bin_confidence[b]) <= tol);
        }
    }
    CHECK(total == n);
}

TEST_CASE("reliability histogram: degenerate and error cases") {
    Tensor perfect = Tensor::zeros({5, 3});
    std::vector<int> labels = {1, 1, 1, 1, 1};
    for (int i = 0; i < 5; ++i) perfect.data[static_cast<size_t>(i) * 3 + 1] = 1.0;
    auto hist = reliability_histogram(perfect, labels, 10, 0);
    for (size_t b = 0; b + 1 < hist.bin_counts.size(); ++b) CHECK(hist.bin_counts[b] == 0);
    CHECK(hist.bin_counts.back() == 5);
    CHECK(hist.bin_accuracy.back() == 1.0);
    CHECK(hist.bin_confidence.back() == 1.0);

    // permutation invariance of the bin statistics
    Rng rng(55);
    int n = 64;
    Tensor probs = Tensor::zeros({n, 4});
    std::vector<int> ls(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double raw[4], z = 0.0;
        for (double& v : raw) {
            v = std::exp(rng.normal());
            z += v;
        }
        for (int c = 0; c < 4; ++c) probs.data[static_cast<size_t>(i) * 4 + c] = raw[c] / z;
        ls[static_cast<size_t>(i)] = static_cast<int>(rng.below(4));
    }
    auto base = reliability_histogram(probs, ls, 8, 0);
    std::vector<size_t> perm = Rng(77).permutation(static_cast<size_t>(n));
    Tensor probs_p = Tensor::zeros({n, 4});
    std::vector<int> ls_p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 4; ++c)
            probs_p.data[static_cast<size_t>(i) * 4 + c] = probs.data[perm[static_cast<size_t>(i)] * 4 + c];
        ls_p[static_cast<size_t>(i)] = ls[perm[static_cast<size_t>(i)]];
    }
    auto permuted = reliability_histogram(probs_p, ls_p, 8, 0);
    for (size_t b = 0; b < base.bin_counts.size(); ++b) {
        CHECK(base.bin_counts[b] == permuted.bin_counts[b]);
        CHECK(base.bin_accuracy[b] == doctest::Approx(permuted.bin_accuracy[b]).epsilon(1e-12));
    }

    Tensor bad = Tensor::full({2, 2}, 0.4);  // rows sum to 0.8
    CHECK_THROWS_AS(reliability_histogram(bad, {0, 1}, 4, 0), std::invalid_argument);
    Tensor empty = Tensor::zeros({0, 2});
    CHECK_THROWS_AS(reliability_histogram(empty, {}, 4, 0), std::invalid_argument);
}
