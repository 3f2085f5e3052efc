#include <cmath>
#include <doctest.h>

#include "fmkt/schedules.hpp"

using namespace fmkt;
using namespace fmkt::schedules;

namespace {

// closed-form derivatives of the VP schedule, used as the oracle
double vp_alpha(double a, double b, double t) {
    double u = 1.0 - t;
    return std::exp(-0.25 * a * u * u - 0.5 * b * u);
}
double vp_dalpha(double a, double b, double t) {
    return vp_alpha(a, b, t) * (0.5 * a * (1.0 - t) + 0.5 * b);
}

}  // namespace

TEST_CASE("rectified flow evaluates exactly") {
    NoiseSchedule s = NoiseSchedule::rectified();
    Eval e = evaluate(s, 0.5);
    CHECK(e.alpha == 0.5);
    CHECK(e.sigma == 0.5);
    CHECK(e.d_alpha == 1.0);
    CHECK(e.d_sigma == -1.0);
}

TEST_CASE("rectified flow: alpha + sigma = 1 and unit derivatives on a 1001-point grid") {
    NoiseSchedule s = NoiseSchedule::rectified();
    for (int i = 0; i <= 1000; ++i) {
        double t = static_cast<double>(i) / 1000.0;
        Eval e = evaluate(s, t);
        CHECK(e.alpha + e.sigma == 1.0);  // exact
        CHECK(e.d_alpha == 1.0);
        CHECK(e.d_sigma == -1.0);
    }
}

TEST_CASE("vp boundary values") {
    NoiseSchedule s = NoiseSchedule::vp();
    Eval e1 = evaluate(s, 1.0);
    CHECK(e1.alpha == 1.0);  // exponent vanishes exactly
    CHECK(e1.sigma == 0.0);
    Eval e0 = evaluate(s, 0.0);
    CHECK(e0.alpha == doctest::Approx(std::exp(-0.25 * 19.9 - 0.05)).epsilon(1e-12));
    CHECK(e0.alpha < 1e-2);
}

TEST_CASE("ve uses a = 0.02 at t = 0 and the sloped sigma") {
    NoiseSchedule s = NoiseSchedule::ve();
    Eval e0 = evaluate(s, 0.0);
    CHECK(e0.alpha == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(e0.sigma == 1.0);
    CHECK(e0.d_sigma == -0.1);
    Eval e1 = evaluate(s, 1.0);
    CHECK(e1.alpha == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(e1.sigma == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(e1.d_sigma == -0.1);  // never zero
}

TEST_CASE("vp finite differences approach the symbolic derivative") {
    // Backward differencing is first-order: at fd_delta = 1e-3 the gap to the
    // symbolic derivative is ~ (delta/2) * alpha'' (about 1.5e-3 relative
    // here); at 1e-5 it passes a 1e-4 relative bound.
    double sym = vp_dalpha(19.9, 0.1, 0.5);
    {
        NoiseSchedule s = NoiseSchedule::vp(19.9, 0.1, 1e-3);
        double fd = evaluate(s, 0.5).d_alpha;
        CHECK(std::fabs(fd - sym) / std::fabs(sym) < 2e-3);
    }
    {
        NoiseSchedule s = NoiseSchedule::vp(19.9, 0.1, 1e-5);
        double fd = evaluate(s, 0.5).d_alpha;
        CHECK(std::fabs(fd - sym) / std::fabs(sym) < 1e-4);
    }
}

TEST_CASE("halving fd_delta halves the vp derivative error (first-order consistency)") {
    double sym = vp_dalpha(19.9, 0.1, 0.5);
    double prev_err = -1.0;
    for (double delta : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
        NoiseSchedule s = NoiseSchedule::vp(19.9, 0.1, delta);
        double err = std::fabs(evaluate(s, 0.5).d_alpha - sym);
        if (prev_err > 0.0) CHECK(prev_err / err >= 1.9);
        prev_err = err;
    }
}

TEST_CASE("evaluate is pure: repeated calls are bit-identical") {
    NoiseSchedule s = NoiseSchedule::vp();
    for (double t : {0.0, 0.125, 0.5, 0.875, 1.0}) {
        Eval a = evaluate(s, t);
        Eval b = evaluate(s, t);
        CHECK(a.alpha == b.alpha);
        CHECK(a.sigma == b.sigma);
        CHECK(a.d_alpha == b.d_alpha);
        CHECK(a.d_sigma == b.d_sigma);
    }
}

TEST_CASE("domain and configuration errors") {
    NoiseSchedule s = NoiseSchedule::vp();
    CHECK_THROWS_AS(evaluate(s, -0.01), std::domain_error);
    CHECK_THROWS_AS(evaluate(s, 1.01), std::domain_error);
    s.derivative_mode = DerivativeMode::analytic;
    CHECK_THROWS_AS(evaluate(s, 0.5), config_error);
    NoiseSchedule ve = NoiseSchedule::ve();
    ve.derivative_mode = DerivativeMode::analytic;
    CHECK_THROWS_AS(evaluate(ve, 0.5), config_error);
    CHECK_THROWS_AS(parse_kind("edm"), config_error);
}

TEST_CASE("boundary reports match the interpolant constraints") {
    BoundaryReport rect = boundary_report(NoiseSchedule::rectified());
    CHECK(rect.alpha0 == 0.0);
    CHECK(rect.sigma0 == 1.0);
    CHECK(rect.alpha1 == 1.0);
    CHECK(rect.sigma1 == 0.0);
    CHECK(rect.all_pass());
    CHECK_FALSE(rect.ve_sigma1_deviation);

    BoundaryReport vp = boundary_report(NoiseSchedule::vp());
    CHECK(vp.alpha0 == doctest::Approx(6.5e-3).epsilon(0.02));  // reported approximate zero
    CHECK(vp.alpha0_zero);
    CHECK(vp.alpha1 == 1.0);
    CHECK(vp.all_pass());

    BoundaryReport ve = boundary_report(NoiseSchedule::ve());
    CHECK(ve.sigma1 == doctest::Approx(0.9).epsilon(1e-12));
    CHECK_FALSE(ve.sigma1_zero);
    CHECK(ve.ve_sigma1_deviation);  // intentional, flagged
    CHECK(ve.all_pass());
}
