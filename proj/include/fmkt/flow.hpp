#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fmkt/encoders.hpp"
#include "fmkt/losses.hpp"
#include "fmkt/schedules.hpp"

namespace fmkt::flow {

using autograd::Var;

enum class Mode { feature_based, logit_based };

// One training batch. x_s and x_t only need to agree on the batch dimension:
// in logit-based mode x_s is the student's pre-pooling feature while x_t
// holds teacher logits, and the shape transform bridges the two spaces.
struct FlowBatch {
    Var x_s;
    Var x_t;
    std::optional<std::vector<int>> y;
    Mode mode = Mode::logit_based;
};

struct PairDecoupleConfig {
    double dirac_ratio = 1.0;  // beta_d in [0,1]; 1 disables the shuffle
    uint64_t seed = 0;
};

struct FlowTrajectory {
    std::vector<Tensor> states;                // Z_{1-i/N}, i = 0..N
    std::vector<Tensor> per_step_predictions;  // transform output at each step
    Tensor ensemble;                           // elementwise mean of the predictions
    int step_count = 0;
};

// Z_t = alpha_t x_s + sigma_t x_t
Tensor interpolate(const Tensor& x_s, const Tensor& x_t, double t,
                   const schedules::NoiseSchedule& schedule);

// d alpha_t * x_s + d sigma_t * x_t; reduces to x_s - x_t for rectified flow
Tensor velocity_target(const Tensor& x_s, const Tensor& x_t, double t,
                       const schedules::NoiseSchedule& schedule);

struct EulerStep {
    Var z_next;    // z - step_size * velocity
    Var velocity;  // encoder(z, t)
};

// Throws numerical_failure carrying (t, step_index) if the encoder emits a
// non-finite velocity.
EulerStep euler_step(const Var& z, double t, double step_size, encoders::MetaEncoder& encoder,
                     int step_index = -1);

// transform((d_alpha * z1 - velocity) / -d_sigma); the per-step estimate of
// the target. For rectified flow this is transform(z1 - velocity).
Var predict_target(const Var& z1, const Var& velocity, double t,
                   const schedules::NoiseSchedule& schedule, const encoders::ShapeTransform& transform);

// descending-time Euler rollout shared by training and inference; states are
// computed from x_s and encoder outputs only
struct Rollout {
    std::vector<Var> predictions;
    Var z_final;
    FlowTrajectory trajectory;
};

Rollout rollout(const Var& x_s, encoders::MetaEncoder& encoder,
                const schedules::NoiseSchedule& schedule, int steps,
                const encoders::ShapeTransform& transform);

struct SerialLossOptions {
    bool allow_large_n = false;  // lifts the 1 <= N <= 8 guard
    double loss_weight = 1.0;    // applied as loss_weight / N
};

struct SerialLossResult {
    Var loss;
    FlowTrajectory trajectory;
};

// Serial training loss. The state sequence is computed exclusively from x_s
// and encoder outputs; x_t and y enter only as loss targets. Pair decoupling
// is applied to x_t before any loss term.
SerialLossResult serial_loss(const FlowBatch& batch, encoders::MetaEncoder& encoder,
                             const schedules::NoiseSchedule& schedule, const losses::MetricLoss& loss,
                             int n_steps, const encoders::ShapeTransform& transform, bool match_label,
                             const PairDecoupleConfig& pd, const SerialLossOptions& opts = {});

// Skip-step inference: K Euler steps of size 1/K on the uniform grid
// {1, 1-1/K, ..., 1/K}. The ensemble mean of the per-step predictions is the
// model output; K need not equal the training N.
FlowTrajectory sample(const Tensor& x_s, encoders::MetaEncoder& encoder,
                      const schedules::NoiseSchedule& schedule, int k_steps,
                      const encoders::ShapeTransform& transform);

// With l = floor(dirac_ratio * B), rows [0, l) are untouched and rows [l, B)
// are permuted uniformly at random among themselves (seeded).
Tensor pair_decouple(const Tensor& x_t, const PairDecoupleConfig& pd);

// t_j = (steps - j) / steps for j = 0..steps-1; shared by training and inference
std::vector<double> time_grid(int steps);

}  // namespace fmkt::flow
