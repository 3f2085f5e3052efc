#include "fmkt/variants.hpp"

namespace fmkt::variants {

namespace ag = fmkt::autograd;

ThetaResult theta_loss(const flow::FlowBatch& batch, encoders::MetaEncoder& encoder,
                       const schedules::NoiseSchedule& schedule, const losses::MetricLoss& loss,
                       int n_steps, const encoders::ShapeTransform& transform, const ThetaConfig& cfg,
                       const flow::PairDecoupleConfig& pd, const flow::SerialLossOptions& opts) {
    if (batch.mode != flow::Mode::logit_based)
        throw config_error("theta_loss: FM-KT^Theta is a logit-based variant");
    if (!batch.y) throw config_error("theta_loss: ground-truth labels required");
    if (cfg.vanilla_head == nullptr) throw config_error("theta_loss: vanilla head not set");
    if (cfg.balance_weight < 0.0) throw config_error("theta_loss: balance weight must be >= 0");

    auto serial = flow::serial_loss(batch, encoder, schedule, loss, n_steps, transform,
                                    /*match_label=*/true, pd, opts);

    // The flow output acting as progressive teacher: fully detached, including
    // the transform parameters on the target side.
    Var flow_target;
    {
        ag::NoGradGuard guard;
        flow_target = transform.apply(ag::constant(serial.trajectory.states.back()));
    }
    Var student_logits = cfg.vanilla_head->apply(batch.x_s);
    Var progressive = losses::compute(loss, student_logits, flow_target, batch.y);
    Var total = ag::add(progressive, serial.loss);
    if (cfg.balance_weight != 0.0)
        total = ag::add(total, ag::mul_scalar(ag::cross_entropy(student_logits, *batch.y),
                                              cfg.balance_weight));
    return {total, std::move(serial.trajectory), student_logits};
}

OnlineTarget parse_online_target(const std::string& s) {
    if (s == "final_state_prediction") return OnlineTarget::final_state_prediction;
    if (s == "ensemble_prediction") return OnlineTarget::ensemble_prediction;
    throw config_error("unknown online target: " + s);
}

OnlineResult online_loss(const Var& x_s, const std::vector<int>& y, encoders::MetaEncoder& encoder,
                         const schedules::NoiseSchedule& schedule,
                         const encoders::ShapeTransform& transform, const OnlineConfig& cfg) {
    if (cfg.n_steps < 1 || (cfg.n_steps > 8 && !cfg.allow_large_n))
        throw config_error("online_loss: N must be in [1,8] (set allow_large_n to override)");
    if (static_cast<int>(y.size()) != x_s.value().dim(0))
        throw shape_error("online_loss: labels length mismatch");
    if (encoder.uses_batch_statistics())
        throw config_error("online_loss: encoder computes batch statistics");

    flow::Rollout r = flow::rollout(x_s, encoder, schedule, cfg.n_steps, transform);

    // Self-teacher from the completed sample, gradient-detached.
    Var target;
    if (cfg.target == OnlineTarget::final_state_prediction) {
        ag::NoGradGuard guard;
        target = transform.apply(ag::constant(r.trajectory.states.back()));
    } else {
        target = ag::constant(r.trajectory.ensemble);
    }

    Var acc;
    for (int i = 0; i < cfg.n_steps; ++i) {
        const Var& pred = r.predictions[static_cast<size_t>(i)];
        Var term = losses::compute(cfg.loss, pred, target, y);
        if (cfg.label_weight != 0.0)
            term = ag::add(term, ag::mul_scalar(ag::cross_entropy(pred, y), cfg.label_weight));
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    Var total = ag::mul_scalar(acc, cfg.loss_weight / cfg.n_steps);
    return {total, std::move(r.trajectory)};
}

}  // namespace fmkt::variants
