#include "fmkt/schedules.hpp"

#include <cmath>
#include <sstream>

namespace fmkt::schedules {

Kind parse_kind(const std::string& s) {
    if (s == "rectified_flow") return Kind::rectified_flow;
    if (s == "vp_ode") return Kind::vp_ode;
    if (s == "ve_ode") return Kind::ve_ode;
    throw config_error("unknown schedule kind: " + s);
}

DerivativeMode parse_derivative_mode(const std::string& s) {
    if (s == "analytic") return DerivativeMode::analytic;
    if (s == "finite_difference") return DerivativeMode::finite_difference;
    throw config_error("unknown derivative mode: " + s);
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::rectified_flow: return "rectified_flow";
        case Kind::vp_ode: return "vp_ode";
        case Kind::ve_ode: return "ve_ode";
    }
    return "?";
}

NoiseSchedule NoiseSchedule::rectified() {
    NoiseSchedule s;
    s.kind = Kind::rectified_flow;
    s.derivative_mode = DerivativeMode::analytic;
    return s;
}

NoiseSchedule NoiseSchedule::vp(double a, double b, double fd_delta) {
    NoiseSchedule s;
    s.kind = Kind::vp_ode;
    s.a = a;
    s.b = b;
    s.derivative_mode = DerivativeMode::finite_difference;
    s.fd_delta = fd_delta;
    return s;
}

NoiseSchedule NoiseSchedule::ve(double a, double b, double fd_delta, double sigma_slope) {
    NoiseSchedule s;
    s.kind = Kind::ve_ode;
    s.a = a;
    s.b = b;
    s.derivative_mode = DerivativeMode::finite_difference;
    s.fd_delta = fd_delta;
    s.ve_sigma_slope = sigma_slope;
    return s;
}

namespace {

double vp_alpha(const NoiseSchedule& s, double t) {
    double u = 1.0 - t;
    return std::exp(-0.25 * s.a * u * u - 0.5 * s.b * u);
}

double vp_sigma(const NoiseSchedule& s, double t) {
    double a = vp_alpha(s, t);
    double v = 1.0 - a * a;
    return v > 0.0 ? std::sqrt(v) : 0.0;
}

double ve_alpha(const NoiseSchedule& s, double t) { return s.a * std::pow(s.b / s.a, t); }

}  // namespace

Eval evaluate(const NoiseSchedule& s, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error("schedule evaluate: t = " + std::to_string(t) + " outside [0,1]");
    switch (s.kind) {
        case Kind::rectified_flow:
            // derivatives are exact constants regardless of derivative_mode
            return {t, 1.0 - t, 1.0, -1.0};
        case Kind::vp_ode: {
            if (s.derivative_mode == DerivativeMode::analytic)
                throw config_error("analytic derivatives are not supported for vp_ode");
            if (s.fd_delta <= 0.0) throw config_error("fd_delta must be positive");
            double alpha = vp_alpha(s, t);
            double sigma = vp_sigma(s, t);
            double d = s.fd_delta;
            double da, ds;
            if (t - d >= 0.0) {
                da = (alpha - vp_alpha(s, t - d)) / d;
                ds = (sigma - vp_sigma(s, t - d)) / d;
            } else {
                da = (vp_alpha(s, t + d) - alpha) / d;
                ds = (vp_sigma(s, t + d) - sigma) / d;
            }
            return {alpha, sigma, da, ds};
        }
        case Kind::ve_ode: {
            if (s.derivative_mode == DerivativeMode::analytic)
                throw config_error("analytic derivatives are not supported for ve_ode");
            if (s.fd_delta <= 0.0) throw config_error("fd_delta must be positive");
            double alpha = ve_alpha(s, t);
            double sigma = 1.0 - s.ve_sigma_slope * t;
            double d = s.fd_delta;
            double da = (t - d >= 0.0) ? (alpha - ve_alpha(s, t - d)) / d
                                       : (ve_alpha(s, t + d) - alpha) / d;
            return {alpha, sigma, da, -s.ve_sigma_slope};
        }
    }
    throw config_error("unreachable schedule kind");
}

BoundaryReport boundary_report(const NoiseSchedule& s) {
    Eval e0 = evaluate(s, 0.0);
    Eval e1 = evaluate(s, 1.0);
    BoundaryReport r;
    r.alpha0 = e0.alpha;
    r.sigma0 = e0.sigma;
    r.alpha1 = e1.alpha;
    r.sigma1 = e1.sigma;
    r.alpha0_zero = std::fabs(r.alpha0) < 5e-2;
    r.sigma0_one = std::fabs(r.sigma0 - 1.0) < 1e-3;
    r.sigma1_zero = r.sigma1 == 0.0;
    r.ve_sigma1_deviation = s.kind == Kind::ve_ode && !r.sigma1_zero;
    return r;
}

std::string format(const BoundaryReport& r) {
    std::ostringstream os;
    os << "alpha0=" << r.alpha0 << (r.alpha0_zero ? " (~0)" : " (VIOLATES ~0)")
       << " sigma0=" << r.sigma0 << (r.sigma0_one ? " (~1)" : " (VIOLATES ~1)")
       << " alpha1=" << r.alpha1 << " sigma1=" << r.sigma1;
    if (r.sigma1_zero)
        os << " (=0)";
    else if (r.ve_sigma1_deviation)
        os << " (intentional VE deviation: sloped sigma)";
    else
        os << " (VIOLATES =0)";
    return os.str();
}

}  // namespace fmkt::schedules
