#include "fmkt/flow.hpp"

#include <cmath>

#include "fmkt/rng.hpp"

namespace fmkt::flow {

namespace ag = fmkt::autograd;

Tensor interpolate(const Tensor& x_s, const Tensor& x_t, double t,
                   const schedules::NoiseSchedule& schedule) {
    require_same_shape(x_s, x_t, "interpolate");
    auto e = schedules::evaluate(schedule, t);
    return t_axpy(e.alpha, x_s, e.sigma, x_t);
}

Tensor velocity_target(const Tensor& x_s, const Tensor& x_t, double t,
                       const schedules::NoiseSchedule& schedule) {
    require_same_shape(x_s, x_t, "velocity_target");
    auto e = schedules::evaluate(schedule, t);
    return t_axpy(e.d_alpha, x_s, e.d_sigma, x_t);
}

EulerStep euler_step(const Var& z, double t, double step_size, encoders::MetaEncoder& encoder,
                     int step_index) {
    if (step_size <= 0.0) throw std::domain_error("euler_step: step_size must be positive");
    if (t - step_size < -1e-9)
        throw std::domain_error("euler_step: step crosses below t = 0");
    Var velocity = encoder(z, std::vector<double>(static_cast<size_t>(z.value().dim(0)), t));
    if (!velocity.value().all_finite())
        throw numerical_failure("euler_step: non-finite velocity", t, step_index);
    Var z_next = ag::sub(z, ag::mul_scalar(velocity, step_size));
    return {z_next, velocity};
}

Var predict_target(const Var& z1, const Var& velocity, double t,
                   const schedules::NoiseSchedule& schedule,
                   const encoders::ShapeTransform& transform) {
    auto e = schedules::evaluate(schedule, t);
    if (e.d_sigma == 0.0)
        throw std::domain_error("predict_target: d_sigma is zero at t = " + std::to_string(t));
    Var estimate = ag::mul_scalar(ag::sub(ag::mul_scalar(z1, e.d_alpha), velocity), 1.0 / -e.d_sigma);
    return transform.apply(estimate);
}

std::vector<double> time_grid(int steps) {
    std::vector<double> grid(static_cast<size_t>(steps));
    for (int j = 0; j < steps; ++j)
        grid[static_cast<size_t>(j)] = static_cast<double>(steps - j) / steps;
    return grid;
}

Rollout rollout(const Var& x_s, encoders::MetaEncoder& encoder,
                const schedules::NoiseSchedule& schedule, int steps,
                const encoders::ShapeTransform& transform) {
    if (steps < 1) throw config_error("rollout: steps must be >= 1");
    double alpha1 = schedules::evaluate(schedule, 1.0).alpha;
    Var z1 = ag::mul_scalar(x_s, alpha1);
    Rollout r;
    r.trajectory.step_count = steps;
    r.trajectory.states.push_back(z1.value());
    Var z = z1;
    double step_size = 1.0 / steps;
    std::vector<double> grid = time_grid(steps);
    for (int i = 0; i < steps; ++i) {
        double t = grid[static_cast<size_t>(i)];
        EulerStep es = euler_step(z, t, step_size, encoder, i);
        Var pred = predict_target(z1, es.velocity, t, schedule, transform);
        r.predictions.push_back(pred);
        r.trajectory.per_step_predictions.push_back(pred.value());
        z = es.z_next;
        r.trajectory.states.push_back(z.value());
    }
    r.z_final = z;
    Tensor mean = Tensor::zeros(r.trajectory.per_step_predictions[0].shape);
    for (const Tensor& p : r.trajectory.per_step_predictions) mean = t_add(mean, p);
    r.trajectory.ensemble = t_scale(mean, 1.0 / steps);
    return r;
}

SerialLossResult serial_loss(const FlowBatch& batch, encoders::MetaEncoder& encoder,
                             const schedules::NoiseSchedule& schedule, const losses::MetricLoss& loss,
                             int n_steps, const encoders::ShapeTransform& transform, bool match_label,
                             const PairDecoupleConfig& pd, const SerialLossOptions& opts) {
    if (n_steps < 1 || (n_steps > 8 && !opts.allow_large_n))
        throw config_error("serial_loss: N must be in [1,8] (set allow_large_n to override)");
    if (encoder.uses_batch_statistics())
        throw config_error("serial_loss: encoder computes batch statistics, which collapses "
                           "multi-step inference");
    if (batch.x_s.value().dim(0) != batch.x_t.value().dim(0))
        throw shape_error("serial_loss: x_s and x_t batch sizes differ");
    if (match_label && !batch.y)
        throw config_error("serial_loss: match_label requires ground-truth labels");

    // training-only regularization; targets only, never states
    Var target = ag::constant(pair_decouple(batch.x_t.value(), pd));

    Rollout r = rollout(batch.x_s, encoder, schedule, n_steps, transform);
    Var acc;
    for (int i = 0; i < n_steps; ++i) {
        const Var& pred = r.predictions[static_cast<size_t>(i)];
        Var term = losses::compute(loss, pred, target, batch.y);
        if (match_label) term = ag::add(term, ag::cross_entropy(pred, *batch.y));
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    Var total = ag::mul_scalar(acc, opts.loss_weight / n_steps);
    return {total, std::move(r.trajectory)};
}

FlowTrajectory sample(const Tensor& x_s, encoders::MetaEncoder& encoder,
                      const schedules::NoiseSchedule& schedule, int k_steps,
                      const encoders::ShapeTransform& transform) {
    ag::NoGradGuard guard;
    Rollout r = rollout(ag::constant(x_s), encoder, schedule, k_steps, transform);
    return std::move(r.trajectory);
}

Tensor pair_decouple(const Tensor& x_t, const PairDecoupleConfig& pd) {
    if (pd.dirac_ratio < 0.0 || pd.dirac_ratio > 1.0)
        throw config_error("pair_decouple: dirac_ratio must be in [0,1]");
    int b = x_t.dim(0);
    if (b < 1) throw shape_error("pair_decouple: empty batch");
    int fixed = static_cast<int>(std::floor(pd.dirac_ratio * b));
    if (fixed >= b) return x_t;
    int moving = b - fixed;
    Rng rng(pd.seed);
    std::vector<size_t> perm = rng.permutation(static_cast<size_t>(moving));
    size_t row = static_cast<size_t>(x_t.size() / b);
    Tensor out = x_t;
    for (int j = 0; j < moving; ++j) {
        size_t dst = (static_cast<size_t>(fixed) + static_cast<size_t>(j)) * row;
        size_t src = (static_cast<size_t>(fixed) + perm[static_cast<size_t>(j)]) * row;
        for (size_t k = 0; k < row; ++k) out.data[dst + k] = x_t.data[src + k];
    }
    return out;
}

}  // namespace fmkt::flow
