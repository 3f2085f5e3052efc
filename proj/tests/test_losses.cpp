#include <cmath>
#include <doctest.h>

#include "fmkt/losses.hpp"
#include "test_util.hpp"

using namespace fmkt;
using namespace fmkt_test;
namespace ag = fmkt::autograd;
using losses::compute;
using losses::MetricLoss;

namespace {

std::vector<MetricLoss> all_kinds() {
    return {MetricLoss::squared_error(), MetricLoss::vanilla_kd(), MetricLoss::dkd(),
            MetricLoss::dist(), MetricLoss::pkd()};
}

Tensor permute_rows(const Tensor& x, const std::vector<size_t>& perm) {
    Tensor out = x;
    size_t row = static_cast<size_t>(x.size() / x.dim(0));
    for (size_t i = 0; i < perm.size(); ++i)
        for (size_t k = 0; k < row; ++k) out.data[i * row + k] = x.data[perm[i] * row + k];
    return out;
}

}  // namespace

TEST_CASE("every kind reports zero self-distance") {
    Rng rng(5);
    Tensor logits = random_tensor({6, 5}, rng);
    std::vector<int> labels = {0, 1, 2, 3, 4, 0};
    for (const auto& kind : all_kinds()) {
        ag::Var p(logits), t(logits);
        double v = compute(kind, p, t, labels).value().item();
        CHECK(std::fabs(v) < 1e-6);
    }
}

TEST_CASE("vanilla_kd with tau=1 matches the closed-form KL oracle") {
    // target logits [ln 2, 0] give probabilities (2/3, 1/3); prediction [0, 0]
    // gives (1/2, 1/2). Oracle: KL = 2/3 ln(4/3) + 1/3 ln(2/3).
    double oracle = (2.0 / 3.0) * std::log(4.0 / 3.0) + (1.0 / 3.0) * std::log(2.0 / 3.0);
    CHECK(oracle == doctest::Approx(0.0566).epsilon(1e-2));
    ag::Var pred(Tensor({1, 2}, {0.0, 0.0}));
    ag::Var target(Tensor({1, 2}, {std::log(2.0), 0.0}));
    double v = compute(MetricLoss::vanilla_kd(1.0), pred, target).value().item();
    CHECK(v == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("vanilla_kd with tau=1 equals plain KL of the softmaxed tensors") {
    Rng rng(21);
    Tensor p = random_tensor({4, 6}, rng), t = random_tensor({4, 6}, rng);
    double v = compute(MetricLoss::vanilla_kd(1.0), ag::Var(p), ag::Var(t)).value().item();
    // independent oracle: softmax and KL by hand
    double oracle = 0.0;
    for (int b = 0; b < 4; ++b) {
        double zp = 0.0, zt = 0.0;
        for (int c = 0; c < 6; ++c) {
            zp += std::exp(p.data[static_cast<size_t>(b) * 6 + c]);
            zt += std::exp(t.data[static_cast<size_t>(b) * 6 + c]);
        }
        for (int c = 0; c < 6; ++c) {
            double qp = std::exp(p.data[static_cast<size_t>(b) * 6 + c]) / zp;
            double qt = std::exp(t.data[static_cast<size_t>(b) * 6 + c]) / zt;
            oracle += qt * std::log(qt / qp);
        }
    }
    oracle /= 4.0;
    CHECK(v == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("dkd needs labels and decomposes to zero at equality") {
    Rng rng(31);
    Tensor logits = random_tensor({3, 4}, rng);
    CHECK_THROWS_AS(compute(MetricLoss::dkd(), ag::Var(logits), ag::Var(logits)), config_error);
    std::vector<int> labels = {2, 0, 3};
    CHECK(compute(MetricLoss::dkd(), ag::Var(logits), ag::Var(logits), labels).value().item() ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dist ignores per-row logit shifts (Pearson shift invariance)") {
    Rng rng(33);
    Tensor t = random_tensor({4, 5}, rng);
    Tensor p = t;
    for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 5; ++c) p.data[static_cast<size_t>(b) * 5 + c] += 3.0 * (b + 1);
    // shifting logits leaves softmax rows identical, so both terms vanish
    double v = compute(MetricLoss::dist(), ag::Var(p), ag::Var(t)).value().item();
    CHECK(std::fabs(v) < 1e-6);
}

TEST_CASE("losses are non-negative on random inputs") {
    Rng rng(37);
    Tensor p = random_tensor({5, 7}, rng), t = random_tensor({5, 7}, rng);
    std::vector<int> labels = {0, 1, 2, 3, 4};
    for (const auto& kind : all_kinds())
        CHECK(compute(kind, ag::Var(p), ag::Var(t), labels).value().item() >= 0.0);
}

TEST_CASE("permuting the batch leaves every loss unchanged") {
    Rng rng(41);
    Tensor p = random_tensor({6, 4}, rng), t = random_tensor({6, 4}, rng);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1};
    std::vector<size_t> perm = {3, 0, 5, 1, 4, 2};
    Tensor pp = permute_rows(p, perm), tp = permute_rows(t, perm);
    std::vector<int> lp(labels.size());
    for (size_t i = 0; i < perm.size(); ++i) lp[i] = labels[perm[i]];
    for (const auto& kind : all_kinds()) {
        double a = compute(kind, ag::Var(p), ag::Var(t), labels).value().item();
        double b = compute(kind, ag::Var(pp), ag::Var(tp), lp).value().item();
        CHECK(std::fabs(a - b) < 1e-6);
    }
}

TEST_CASE("pkd standardizes zero-variance channels via epsilon instead of erroring") {
    Tensor p = Tensor::full({3, 2}, 1.0);  // channel 0 and 1 constant
    Rng rng(43);
    Tensor t = random_tensor({3, 2}, rng);
    CHECK_NOTHROW(compute(MetricLoss::pkd(), ag::Var(p), ag::Var(t)));
    double v = compute(MetricLoss::pkd(), ag::Var(p), ag::Var(t)).value().item();
    CHECK(std::isfinite(v));
}

TEST_CASE("all losses differentiate within 1e-4 of central differences") {
    Rng rng(47);
    std::vector<int> labels = {1, 0, 3, 2};
    for (const auto& kind : all_kinds()) {
        ag::Var p(random_tensor({4, 4}, rng), true);  // 16 elements <= 32
        ag::Var t(random_tensor({4, 4}, rng), true);
        auto loss_of = [&] { return compute(kind, p, t, labels); };
        auto forward_only = [&] { return loss_of().value().item(); };
        auto forward_backward = [&] {
            ag::Var l = loss_of();
            ag::backward(l);
            return l.value().item();
        };
        gradcheck(forward_backward, forward_only, {p, t}, 1e-6, 1e-4);
    }
}

TEST_CASE("shape and configuration errors") {
    Rng rng(53);
    Tensor p = random_tensor({3, 4}, rng);
    Tensor t = random_tensor({3, 5}, rng);
    CHECK_THROWS_AS(compute(MetricLoss::vanilla_kd(), ag::Var(p), ag::Var(t)), shape_error);
    CHECK_THROWS_AS(losses::parse_kind("contrastive"), config_error);
    MetricLoss bad = MetricLoss::vanilla_kd(-1.0);
    CHECK_THROWS_AS(compute(bad, ag::Var(p), ag::Var(p)), config_error);
}
