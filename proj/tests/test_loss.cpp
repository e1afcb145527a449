#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nlqmm/loss.hpp"

using namespace nlqmm;

namespace {
double kappa_sum(const QuantileLevel& tau, double omega, const Vector& r) {
    double s = 0.0;
    for (Index j = 0; j < r.size(); ++j) s += kappa(tau, omega, r(j));
    return s;
}
}  // namespace

TEST_CASE("rho examples") {
    CHECK(rho(QuantileLevel(0.5), 1.0) == doctest::Approx(0.5));
    CHECK(rho(QuantileLevel(0.1), -1.0) == doctest::Approx(0.9));
    CHECK(rho(QuantileLevel(0.9), 2.0) == doctest::Approx(1.8));
    CHECK(rho(QuantileLevel(0.3), 0.0) == 0.0);
}

TEST_CASE("kappa examples") {
    CHECK(kappa(QuantileLevel(0.5), 1.0, 0.0) == 0.0);
    CHECK(kappa(QuantileLevel(0.5), 2.0, 0.5) == doctest::Approx(0.0625));
    // Third branch: r tau - tau^2 omega / 2.
    CHECK(kappa(QuantileLevel(0.25), 0.1, 1.0) == doctest::Approx(0.246875));
}

TEST_CASE("sign vector branches and boundaries") {
    Vector r(1);
    r << 0.0;
    CHECK(sign_vector(QuantileLevel(0.5), 1.0, r)(0) == 0);
    r << -0.5;  // boundary (tau-1) omega = -0.5, inclusive
    CHECK(sign_vector(QuantileLevel(0.5), 1.0, r)(0) == -1);
    r << 1.5;  // boundary tau omega = 0.75 * 2 = 1.5, inclusive
    CHECK(sign_vector(QuantileLevel(0.75), 2.0, r)(0) == 1);
}

TEST_CASE("quad_coeffs worked examples") {
    {
        Vector r(1);
        r << 1.0;
        const QuantileLevel tau(0.5);
        const QuadCoeffs qc = quad_coeffs(tau, 0.1, r);
        CHECK(qc.s(0) == 1);
        CHECK(qc.a_diag(0) == 0.0);
        CHECK(qc.b(0) == doctest::Approx(1.0));
        CHECK(qc.c(0) == doctest::Approx(-0.025));
        CHECK(quad_half_form(qc, r, 0.1) == doctest::Approx(0.4875));
        CHECK(quad_half_form(qc, r, 0.1) == doctest::Approx(kappa(tau, 0.1, 1.0)));
    }
    {
        Vector r(1);
        r << 0.0;
        const QuadCoeffs qc = quad_coeffs(QuantileLevel(0.37), 0.8, r);
        CHECK(qc.s(0) == 0);
        CHECK(qc.a_diag(0) == 1.0);
        CHECK(qc.b(0) == 0.0);
        CHECK(qc.c(0) == 0.0);
        CHECK(quad_half_form(qc, r, 0.8) == 0.0);
    }
    {
        Vector r(1);
        r << -1.0;
        const QuantileLevel tau(0.25);
        const QuadCoeffs qc = quad_coeffs(tau, 0.1, r);
        CHECK(qc.s(0) == -1);
        CHECK(qc.b(0) == doctest::Approx(2.0 * 0.25 - 2.0));
        CHECK(qc.c(0) == doctest::Approx(-(1.0 - 0.25) * (1.0 - 0.25) * 0.1));
        CHECK(quad_half_form(qc, r, 0.1) == doctest::Approx(0.721875));
        CHECK(quad_half_form(qc, r, 0.1) == doctest::Approx(kappa(tau, 0.1, -1.0)));
    }
}

TEST_CASE("decomposition identity over random draws") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> utau(0.01, 0.99);
    std::uniform_real_distribution<double> uomega(0.001, 2.0);
    std::normal_distribution<double> norm(0.0, 2.0);
    for (int rep = 0; rep < 10000; ++rep) {
        const QuantileLevel tau(utau(rng));
        const double omega = uomega(rng);
        Vector r(1 + static_cast<Index>(rng() % 8));
        for (Index j = 0; j < r.size(); ++j) r(j) = norm(rng);
        const QuadCoeffs qc = quad_coeffs(tau, omega, r);
        const double lhs = quad_half_form(qc, r, omega);
        const double rhs = kappa_sum(tau, omega, r);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("uniform approximation bound sup|kappa - rho| = (omega/2) max(tau^2,(1-tau)^2)") {
    for (double omega : {1.0, 0.1, 0.01}) {
        for (double t : {0.1, 0.5, 0.9}) {
            const QuantileLevel tau(t);
            double sup = 0.0;
            for (int k = -4000; k <= 4000; ++k) {
                const double r = k * (4.0 * omega / 4000.0);
                sup = std::max(sup, std::abs(kappa(tau, omega, r) - rho(tau, r)));
            }
            const double bound = 0.5 * omega * std::max(t * t, (1.0 - t) * (1.0 - t));
            CHECK(std::abs(sup - bound) < 1e-10);
        }
    }
}

TEST_CASE("kappa is convex (second differences)") {
    const QuantileLevel tau(0.3);
    const double omega = 0.2;
    const double step = 0.01;
    for (int k = -300; k <= 300; ++k) {
        const double r = k * step;
        const double d2 = kappa(tau, omega, r - step) - 2.0 * kappa(tau, omega, r) +
                          kappa(tau, omega, r + step);
        CHECK(d2 >= -1e-12);
    }
}

TEST_CASE("kappa is C1 at the knots") {
    for (double t : {0.2, 0.5, 0.8}) {
        const QuantileLevel tau(t);
        const double omega = 0.37;
        const double eps = 1e-9;
        for (double knot : {(t - 1.0) * omega, t * omega}) {
            const double left = (kappa(tau, omega, knot) - kappa(tau, omega, knot - eps)) / eps;
            const double right = (kappa(tau, omega, knot + eps) - kappa(tau, omega, knot)) / eps;
            CHECK(std::abs(left - right) < 1e-6);  // one-sided FD limited accuracy
        }
        // Exact slopes: derivative at the knots equals the outer slopes.
        CHECK(std::abs(((t - 1.0) * omega) / omega - (t - 1.0)) < 1e-12);
        CHECK(std::abs((t * omega) / omega - t) < 1e-12);
    }
}

TEST_CASE("median kappa is symmetric") {
    const QuantileLevel tau(0.5);
    for (double r = 0.0; r < 3.0; r += 0.017)
        CHECK(kappa(tau, 0.4, r) == doctest::Approx(kappa(tau, 0.4, -r)).epsilon(1e-12));
}

TEST_CASE("smoothing parameter bounds") {
    CHECK_THROWS_AS(SmoothingParam(0.0, 0.5), invalid_parameter);
    CHECK_THROWS_AS(SmoothingParam(1.0, 1.0), invalid_parameter);
    CHECK_NOTHROW(SmoothingParam(0.5, 0.2));
}

TEST_CASE("QuadCoeffs invariants") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        Vector r(6);
        for (Index j = 0; j < 6; ++j) r(j) = norm(rng);
        const QuadCoeffs qc = quad_coeffs(QuantileLevel(0.25), 0.5, r);
        for (Index j = 0; j < 6; ++j) {
            CHECK(qc.a_diag(j) == 1.0 - qc.s(j) * qc.s(j));
            if (qc.s(j) == 0) {
                CHECK(qc.b(j) == 0.0);
                CHECK(qc.c(j) == 0.0);
            }
        }
    }
}
