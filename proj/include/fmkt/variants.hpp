#pragma once

#include "fmkt/flow.hpp"

namespace fmkt::variants {

using autograd::Var;

// FM-KT^Theta: distills the flow's final state into the student's own
// classification head so inference runs the vanilla head only.
struct ThetaConfig {
    double balance_weight = 1.0;                            // alpha^Theta >= 0
    const encoders::ShapeTransform* vanilla_head = nullptr; // student-owned T_vanilla
};

struct ThetaResult {
    Var loss;
    flow::FlowTrajectory trajectory;
    Var student_logits;  // vanilla-head output used for the progressive terms
};

// L(T_vanilla(x_s), T(Z_0).detach) + balance_weight * CE(T_vanilla(x_s), y) + L_FM-KT
ThetaResult theta_loss(const flow::FlowBatch& batch, encoders::MetaEncoder& encoder,
                       const schedules::NoiseSchedule& schedule, const losses::MetricLoss& loss,
                       int n_steps, const encoders::ShapeTransform& transform, const ThetaConfig& cfg,
                       const flow::PairDecoupleConfig& pd = {},
                       const flow::SerialLossOptions& opts = {});

// Which object the online-KD term compares against: the transform of the
// final Euler state (literal reading of the loss) or the ensemble mean of the
// per-step predictions.
enum class OnlineTarget { final_state_prediction, ensemble_prediction };

OnlineTarget parse_online_target(const std::string& s);

struct OnlineConfig {
    int n_steps = 8;
    losses::MetricLoss loss;
    double label_weight = 1.0;  // the ground-truth term is part of the loss structure
    OnlineTarget target = OnlineTarget::final_state_prediction;
    double loss_weight = 1.0;
    bool allow_large_n = false;
};

struct OnlineResult {
    Var loss;
    flow::FlowTrajectory trajectory;
};

// OFM-KT: no teacher input exists. The flow's own completed sample acts as
// the (gradient-detached) target for every per-step prediction, plus the
// ground-truth cross-entropy term, averaged over the N steps.
OnlineResult online_loss(const Var& x_s, const std::vector<int>& y, encoders::MetaEncoder& encoder,
                         const schedules::NoiseSchedule& schedule,
                         const encoders::ShapeTransform& transform, const OnlineConfig& cfg);

}  // namespace fmkt::variants
