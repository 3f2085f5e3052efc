#pragma once

#include <string>

#include "fmkt/common.hpp"

namespace fmkt::schedules {

enum class Kind { rectified_flow, vp_ode, ve_ode };
enum class DerivativeMode { analytic, finite_difference };

Kind parse_kind(const std::string& s);
DerivativeMode parse_derivative_mode(const std::string& s);
std::string to_string(Kind k);

// Interpolant coefficients (alpha_t, sigma_t) and their time derivatives.
//   rectified_flow: alpha = t, sigma = 1 - t
//   vp_ode:         alpha = exp(-a(1-t)^2/4 - b(1-t)/2), sigma = sqrt(1-alpha^2)
//   ve_ode:         alpha = a (b/a)^t, sigma = 1 - ve_sigma_slope * t
// The VE sigma is the sloped form (slope 0.1 by default) so its derivative is
// a usable nonzero constant; sigma_1 = 0.9 is an intentional deviation from
// the sigma_1 -> 0 boundary constraint and is flagged by boundary_report.
struct NoiseSchedule {
    Kind kind = Kind::rectified_flow;
    double a = 0.0;
    double b = 0.0;
    DerivativeMode derivative_mode = DerivativeMode::analytic;
    double fd_delta = 0.125;  // 1/N for the default N = 8
    double ve_sigma_slope = 0.1;

    static NoiseSchedule rectified();
    static NoiseSchedule vp(double a = 19.9, double b = 0.1, double fd_delta = 0.125);
    static NoiseSchedule ve(double a = 0.02, double b = 100.0, double fd_delta = 0.125,
                            double sigma_slope = 0.1);
};

struct Eval {
    double alpha;
    double sigma;
    double d_alpha;
    double d_sigma;
};

// Pure and deterministic. Derivatives are analytic for rectified_flow and
// backward differences (alpha_t - alpha_{t-dt})/dt for vp/ve (forward
// difference when t < fd_delta). Requesting analytic mode for vp/ve throws.
Eval evaluate(const NoiseSchedule& s, double t);

struct BoundaryReport {
    double alpha0, sigma0, alpha1, sigma1;
    bool alpha0_zero;           // |alpha_0| < 5e-2 (exactly 0 for rectified_flow)
    bool sigma0_one;            // |sigma_0 - 1| < 1e-3
    bool sigma1_zero;           // sigma_1 == 0 (false for the sloped VE sigma)
    bool ve_sigma1_deviation;   // VE: sigma_1 = 1 - slope by design, flagged
    bool all_pass() const { return alpha0_zero && sigma0_one && (sigma1_zero || ve_sigma1_deviation); }
};

BoundaryReport boundary_report(const NoiseSchedule& s);

std::string format(const BoundaryReport& r);

}  // namespace fmkt::schedules
