#include <cmath>
#include <doctest.h>

#include "fmkt/variants.hpp"
#include "test_util.hpp"

using namespace fmkt;
using namespace fmkt_test;
using namespace fmkt::variants;
namespace ag = fmkt::autograd;

namespace {

std::unique_ptr<encoders::MetaEncoder> mlp_encoder(int dim, uint64_t seed) {
    encoders::EncoderSpec spec;
    spec.arch = encoders::Arch::mlp;
    spec.depth = 2;
    spec.width = 8;
    Rng rng(seed);
    return encoders::build_encoder(spec, {dim}, rng);
}

class ZeroEncoder : public encoders::MetaEncoder {
protected:
    ag::Var forward(const ag::Var& z, const std::vector<double>&) override {
        return ag::Var(Tensor::zeros(z.value().shape));
    }
};

struct ThetaSetup {
    Tensor xs, xt;
    std::vector<int> y;
    encoders::ShapeTransform transform, head;
    flow::FlowBatch batch;
};

ThetaSetup make_theta_setup(uint64_t seed) {
    ThetaSetup s;
    Rng rng(seed);
    s.xs = random_tensor({4, 6}, rng);
    s.xt = random_tensor({4, 3}, rng);  // teacher logits, 3 classes
    s.y = {0, 1, 2, 1};
    Rng trng(seed + 1);
    s.transform = encoders::ShapeTransform::pool_linear(6, 3, trng);
    Rng hrng(seed + 2);
    s.head = encoders::ShapeTransform::pool_linear(6, 3, hrng);
    s.batch = flow::FlowBatch{ag::Var(s.xs), ag::Var(s.xt), s.y, flow::Mode::logit_based};
    return s;
}

}  // namespace

TEST_CASE("theta_loss: balance weight zero drops the label term, total dominates the flow loss") {
    ThetaSetup s = make_theta_setup(101);
    losses::MetricLoss metric = losses::MetricLoss::vanilla_kd();

    auto run = [&](double balance) {
        auto enc = mlp_encoder(6, 202);
        ThetaConfig cfg;
        cfg.balance_weight = balance;
        cfg.vanilla_head = &s.head;
        return theta_loss(s.batch, *enc, schedules::NoiseSchedule::rectified(), metric, 4,
                          s.transform, cfg);
    };
    auto serial_only = [&] {
        auto enc = mlp_encoder(6, 202);
        return flow::serial_loss(s.batch, *enc, schedules::NoiseSchedule::rectified(), metric, 4,
                                 s.transform, /*match_label=*/true, {});
    };

    double with_label = run(1.0).loss.value().item();
    double without_label = run(0.0).loss.value().item();
    double flow_only = serial_only().loss.value().item();
    CHECK(with_label > without_label);            // the CE term is strictly positive here
    CHECK(without_label >= flow_only - 1e-12);    // remaining terms are non-negative
    CHECK(std::isfinite(with_label));
}

TEST_CASE("theta_loss: first term vanishes when the vanilla head already matches the flow output") {
    ThetaSetup s = make_theta_setup(303);
    // zero velocity + identical transform/head parameters => T_vanilla(x_s) == T(Z_0)
    ZeroEncoder zero;
    Rng trng(7);
    s.transform = encoders::ShapeTransform::pool_linear(6, 3, trng);
    Rng hrng(7);  // same seed: identical weights
    s.head = encoders::ShapeTransform::pool_linear(6, 3, hrng);
    ThetaConfig cfg;
    cfg.balance_weight = 0.0;
    cfg.vanilla_head = &s.head;
    losses::MetricLoss metric = losses::MetricLoss::vanilla_kd();
    auto result = theta_loss(s.batch, zero, schedules::NoiseSchedule::rectified(), metric, 4,
                             s.transform, cfg);
    // zero velocity keeps Z_0 = x_s, so T(Z_0) equals the head output exactly
    auto serial = flow::serial_loss(s.batch, zero, schedules::NoiseSchedule::rectified(), metric, 4,
                                    s.transform, true, {});
    CHECK(result.loss.value().item() ==
          doctest::Approx(serial.loss.value().item()).epsilon(1e-12));
}

TEST_CASE("theta_loss validates mode, labels and head") {
    ThetaSetup s = make_theta_setup(404);
    auto enc = mlp_encoder(6, 505);
    ThetaConfig cfg;
    cfg.vanilla_head = &s.head;
    losses::MetricLoss metric = losses::MetricLoss::vanilla_kd();

    flow::FlowBatch no_labels = s.batch;
    no_labels.y = std::nullopt;
    CHECK_THROWS_AS(theta_loss(no_labels, *enc, schedules::NoiseSchedule::rectified(), metric, 4,
                               s.transform, cfg),
                    config_error);
    flow::FlowBatch feature = s.batch;
    feature.mode = flow::Mode::feature_based;
    CHECK_THROWS_AS(theta_loss(feature, *enc, schedules::NoiseSchedule::rectified(), metric, 4,
                               s.transform, cfg),
                    config_error);
    ThetaConfig no_head;
    CHECK_THROWS_AS(theta_loss(s.batch, *enc, schedules::NoiseSchedule::rectified(), metric, 4,
                               s.transform, no_head),
                    config_error);
}

TEST_CASE("online_loss: no teacher parameter exists; boundary N = 1 works") {
    Rng rng(606);
    Tensor xs = random_tensor({4, 6}, rng);
    std::vector<int> y = {0, 2, 1, 0};
    Rng trng(8);
    encoders::ShapeTransform transform = encoders::ShapeTransform::pool_linear(6, 3, trng);
    auto enc = mlp_encoder(6, 707);
    OnlineConfig cfg;
    cfg.n_steps = 1;
    cfg.loss = losses::MetricLoss::vanilla_kd();
    auto result = online_loss(ag::Var(xs), y, *enc, schedules::NoiseSchedule::rectified(),
                              transform, cfg);
    CHECK(std::isfinite(result.loss.value().item()));
    CHECK(result.trajectory.step_count == 1);
    CHECK(result.trajectory.states.size() == 2);
}

TEST_CASE("online_loss: converged encoder leaves only the label terms") {
    Rng rng(808);
    Tensor xs = random_tensor({4, 6}, rng);
    std::vector<int> y = {1, 0, 2, 1};
    Rng trng(9);
    encoders::ShapeTransform transform = encoders::ShapeTransform::pool_linear(6, 3, trng);
    // zero velocity: every per-step prediction equals T(x_s) = T(Z_0)
    ZeroEncoder zero;
    OnlineConfig cfg;
    cfg.n_steps = 4;
    cfg.loss = losses::MetricLoss::vanilla_kd();
    for (OnlineTarget target : {OnlineTarget::final_state_prediction, OnlineTarget::ensemble_prediction}) {
        cfg.target = target;
        auto result = online_loss(ag::Var(xs), y, zero, schedules::NoiseSchedule::rectified(),
                                  transform, cfg);
        // online-KD term vanishes: loss equals the pure CE of T(x_s)
        ag::NoGradGuard guard;
        double ce = ag::cross_entropy(transform.apply(ag::Var(xs)), y).value().item();
        CHECK(result.loss.value().item() == doctest::Approx(ce).epsilon(1e-9));
    }
}

TEST_CASE("online_loss back-propagates finite gradients") {
    Rng rng(909);
    Tensor xs = random_tensor({3, 5}, rng);
    std::vector<int> y = {0, 1, 2};
    Rng trng(10);
    encoders::ShapeTransform transform = encoders::ShapeTransform::pool_linear(5, 3, trng);
    auto enc = mlp_encoder(5, 111);
    OnlineConfig cfg;
    cfg.n_steps = 4;
    cfg.loss = losses::MetricLoss::dist();
    auto result = online_loss(ag::Var(xs), y, *enc, schedules::NoiseSchedule::rectified(),
                              transform, cfg);
    ag::backward(result.loss);
    for (const auto& p : enc->parameters()) {
        CHECK(p.grad().all_finite());
    }
    CHECK_THROWS_AS(([&] {
                        OnlineConfig bad = cfg;
                        bad.n_steps = 12;
                        online_loss(ag::Var(xs), y, *enc, schedules::NoiseSchedule::rectified(),
                                    transform, bad);
                    }()),
                    config_error);
}

TEST_CASE("theta_loss back-propagates finite gradients through head, encoder and transform") {
    ThetaSetup s = make_theta_setup(121);
    auto enc = mlp_encoder(6, 131);
    ThetaConfig cfg;
    cfg.balance_weight = 1.0;
    cfg.vanilla_head = &s.head;
    auto result = theta_loss(s.batch, *enc, schedules::NoiseSchedule::rectified(),
                             losses::MetricLoss::vanilla_kd(), 4, s.transform, cfg);
    ag::backward(result.loss);
    for (const auto& p : enc->parameters()) CHECK(p.grad().all_finite());
    for (const auto& p : s.head.parameters()) CHECK(p.grad().all_finite());
    for (const auto& p : s.transform.parameters()) CHECK(p.grad().all_finite());
}
