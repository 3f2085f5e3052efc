#include "fmkt/losses.hpp"

#include <cmath>

namespace fmkt::losses {

namespace ag = fmkt::autograd;

Kind parse_kind(const std::string& s) {
    if (s == "squared_error") return Kind::squared_error;
    if (s == "vanilla_kd") return Kind::vanilla_kd;
    if (s == "dkd") return Kind::dkd;
    if (s == "dist") return Kind::dist;
    if (s == "pkd") return Kind::pkd;
    throw config_error("unknown loss kind: " + s);
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::squared_error: return "squared_error";
        case Kind::vanilla_kd: return "vanilla_kd";
        case Kind::dkd: return "dkd";
        case Kind::dist: return "dist";
        case Kind::pkd: return "pkd";
    }
    return "?";
}

MetricLoss MetricLoss::squared_error() { return MetricLoss{Kind::squared_error}; }

MetricLoss MetricLoss::vanilla_kd(double tau) {
    MetricLoss l;
    l.kind = Kind::vanilla_kd;
    l.temperature = tau;
    return l;
}

MetricLoss MetricLoss::dkd(double tau, double alpha, double beta) {
    MetricLoss l;
    l.kind = Kind::dkd;
    l.temperature = tau;
    l.dkd_alpha = alpha;
    l.dkd_beta = beta;
    return l;
}

MetricLoss MetricLoss::dist(double beta, double gamma, double tau) {
    MetricLoss l;
    l.kind = Kind::dist;
    l.temperature = tau;
    l.dist_beta = beta;
    l.dist_gamma = gamma;
    return l;
}

MetricLoss MetricLoss::pkd() { return MetricLoss{Kind::pkd}; }

namespace {

void check_logit_shapes(const Var& p, const Var& t, const char* kind) {
    if (p.value().rank() != 2 || !p.value().same_shape(t.value()))
        throw shape_error(std::string(kind) + ": want matching [B,C] logits, got " +
                          p.value().shape_str() + " vs " + t.value().shape_str());
}

Var mse(const Var& a, const Var& b) {
    Var d = ag::sub(a, b);
    return ag::mean_all(ag::mul(d, d));
}

// tau^2 * mean_b KL(q_b || p_b) with q = softmax(target/tau), p = softmax(pred/tau)
Var kl_kd(const Var& prediction, const Var& target, double tau) {
    int batch = prediction.value().dim(0);
    Var logp = ag::log_softmax_rows(ag::mul_scalar(prediction, 1.0 / tau));
    Var logq = ag::log_softmax_rows(ag::mul_scalar(target, 1.0 / tau));
    Var q = ag::softmax_rows(ag::mul_scalar(target, 1.0 / tau));
    Var kl = ag::sum_all(ag::mul(q, ag::sub(logq, logp)));
    return ag::mul_scalar(kl, tau * tau / batch);
}

// binary KL over ([B] target-class probs, their complements), batch mean
Var binary_kl(const Var& pt, const Var& ps) {
    const double eps = 1e-12;
    Var qt = ag::add_scalar(ag::mul_scalar(pt, -1.0), 1.0);  // 1 - pt
    Var qs = ag::add_scalar(ag::mul_scalar(ps, -1.0), 1.0);
    Var lt = ag::log_v(ag::add_scalar(pt, eps));
    Var ls = ag::log_v(ag::add_scalar(ps, eps));
    Var lqt = ag::log_v(ag::add_scalar(qt, eps));
    Var lqs = ag::log_v(ag::add_scalar(qs, eps));
    Var kl = ag::add(ag::mul(pt, ag::sub(lt, ls)), ag::mul(qt, ag::sub(lqt, lqs)));
    return ag::mean_all(kl);
}

Var dkd_loss(const MetricLoss& cfg, const Var& prediction, const Var& target,
             const std::vector<int>& labels) {
    double tau = cfg.temperature;
    int batch = prediction.value().dim(0);
    int classes = prediction.value().dim(1);
    Var ps = ag::softmax_rows(ag::mul_scalar(prediction, 1.0 / tau));
    Var pt = ag::softmax_rows(ag::mul_scalar(target, 1.0 / tau));
    Var tckd = binary_kl(ag::select_class(pt, labels), ag::select_class(ps, labels));

    // mask the target class out; the remaining softmax renormalizes over
    // non-target classes only
    Tensor mask = Tensor::zeros({batch, classes});
    for (int b = 0; b < batch; ++b)
        mask.data[static_cast<size_t>(b) * classes + labels[static_cast<size_t>(b)]] = -1e30;
    Var masked_s = ag::add(ag::mul_scalar(prediction, 1.0 / tau), ag::constant(mask));
    Var masked_t = ag::add(ag::mul_scalar(target, 1.0 / tau), ag::constant(mask));
    Var logp_hat = ag::log_softmax_rows(masked_s);
    Var logq_hat = ag::log_softmax_rows(masked_t);
    Var q_hat = ag::softmax_rows(masked_t);
    Var nckd = ag::mul_scalar(ag::sum_all(ag::mul(q_hat, ag::sub(logq_hat, logp_hat))), 1.0 / batch);

    Var total = ag::add(ag::mul_scalar(tckd, cfg.dkd_alpha * tau * tau),
                        ag::mul_scalar(nckd, cfg.dkd_beta * tau * tau));
    return total;
}

Var dist_loss(const MetricLoss& cfg, const Var& prediction, const Var& target) {
    const double eps = 1e-12;
    double tau = cfg.temperature;
    Var p = ag::softmax_rows(ag::mul_scalar(prediction, 1.0 / tau));
    Var q = ag::softmax_rows(ag::mul_scalar(target, 1.0 / tau));
    // inter-relation over sample rows, intra-relation over class columns
    Var inter = ag::add_scalar(ag::mul_scalar(ag::pearson_mean_rows(p, q, eps), -1.0), 1.0);
    Var intra = ag::add_scalar(ag::mul_scalar(ag::pearson_mean_cols(p, q, eps), -1.0), 1.0);
    return ag::add(ag::mul_scalar(inter, cfg.dist_beta), ag::mul_scalar(intra, cfg.dist_gamma));
}

Var pkd_loss(const Var& prediction, const Var& target) {
    const double eps = 1e-6;
    Var ps = ag::standardize_per_channel(prediction, eps);
    Var ts = ag::standardize_per_channel(target, eps);
    return mse(ps, ts);
}

}  // namespace

Var compute(const MetricLoss& loss, const Var& prediction, const Var& target,
            const std::optional<std::vector<int>>& labels) {
    if (loss.temperature <= 0.0) throw config_error("loss temperature must be positive");
    switch (loss.kind) {
        case Kind::squared_error: {
            require_same_shape(prediction.value(), target.value(), "squared_error");
            return mse(prediction, target);
        }
        case Kind::vanilla_kd: {
            check_logit_shapes(prediction, target, "vanilla_kd");
            return kl_kd(prediction, target, loss.temperature);
        }
        case Kind::dkd: {
            check_logit_shapes(prediction, target, "dkd");
            if (!labels)
                throw config_error("dkd requires ground-truth labels");
            if (static_cast<int>(labels->size()) != prediction.value().dim(0))
                throw shape_error("dkd: labels length mismatch");
            return dkd_loss(loss, prediction, target, *labels);
        }
        case Kind::dist: {
            check_logit_shapes(prediction, target, "dist");
            return dist_loss(loss, prediction, target);
        }
        case Kind::pkd: {
            require_same_shape(prediction.value(), target.value(), "pkd");
            return pkd_loss(prediction, target);
        }
    }
    throw config_error("unreachable loss kind");
}

}  // namespace fmkt::losses
