#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nlqmm/model.hpp"
#include "nlqmm/simulate.hpp"

using namespace nlqmm;

namespace {

// Independent finite-difference oracle in phi.
Vector fd_dphi(const ModelSpec& m, const Vector& phi, const Vector& x) {
    Vector g(phi.size());
    for (Index k = 0; k < phi.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(phi(k)));
        Vector pp = phi, pm = phi;
        pp(k) += h;
        pm(k) -= h;
        g(k) = (m.eval_f(pp, x) - m.eval_f(pm, x)) / (2.0 * h);
    }
    return g;
}

Vector one(double v) {
    Vector x(1);
    x << v;
    return x;
}

}  // namespace

TEST_CASE("eval_phi with identity designs") {
    const DesignMap d = DesignMap::identity(4, {0, 1, 2, 3});
    Vector beta(4);
    beta << 2.0, 0.8, 0.4, -1.5;
    CHECK(eval_phi(d, beta, Vector::Zero(4), one(1.0)).isApprox(beta));
}

TEST_CASE("eval_phi with the scenario-1 design") {
    const DesignMap d = scenario_design(1);
    Vector beta(4);
    beta << 70.0, 10.0, 3.0, 10.0;
    Vector u(2);
    u << 1.0, -1.0;
    const Vector phi = eval_phi(d, beta, u, one(5.0));
    Vector expect(4);
    expect << 61.0, 9.0, 3.0, 10.0;
    CHECK(phi.isApprox(expect));

    // F rows are (1,0,0,-1),(0,1,0,0),(0,0,1,0),(0,0,0,1); G stacks I2 over zeros.
    Matrix F = d.F(one(5.0));
    Matrix Fexpect(4, 4);
    Fexpect << 1, 0, 0, -1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
    CHECK(F.isApprox(Fexpect));
    Matrix G = d.G(one(5.0));
    Matrix Gexpect = Matrix::Zero(4, 2);
    Gexpect(0, 0) = 1.0;
    Gexpect(1, 1) = 1.0;
    CHECK(G.isApprox(Gexpect));
}

TEST_CASE("scenario-3 G adds to phi2 only") {
    const DesignMap d = scenario_design(3);
    Vector beta(4);
    beta << 1.0, 4.0, 1.0, 0.0;
    Vector u(1);
    u << 0.5;
    const Vector phi = eval_phi(d, beta, u, one(2.0));
    CHECK(phi(0) == doctest::Approx(1.0));
    CHECK(phi(1) == doctest::Approx(4.5));
    CHECK(phi(2) == doctest::Approx(1.0));
    CHECK(phi(3) == doctest::Approx(0.0));
    CHECK(d.G(one(2.0)).isApprox((Matrix(4, 1) << 0, 1, 0, 0).finished()));
}

TEST_CASE("eval_phi is linear in beta") {
    const DesignMap d = scenario_design(1);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Vector b1(4), b2(4), u(2);
        for (int k = 0; k < 4; ++k) {
            b1(k) = norm(rng);
            b2(k) = norm(rng);
        }
        u << norm(rng), norm(rng);
        const Vector x = one(norm(rng));
        const Vector lhs = eval_phi(d, b1 + b2, u, x);
        const Vector rhs = eval_phi(d, b1, u, x) + eval_phi(d, b2, Vector::Zero(2), x);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("logistic4 values and limits") {
    const ModelSpec m = builtin_logistic4();
    // phi1 is the asymptote gap; phi4 the lower asymptote.
    Vector phi(4);
    phi << 60.0, 10.0, 3.0, 10.0;
    CHECK(m.eval_f(phi, one(10.0)) == doctest::Approx(40.0));
    CHECK(m.eval_f(phi, one(1e6)) == doctest::Approx(70.0));
    CHECK(m.eval_f(phi, one(-1e6)) == doctest::Approx(10.0));
    Vector bad = phi;
    bad(2) = 0.0;
    CHECK_THROWS_AS(m.eval_f(bad, one(1.0)), numerical_error);
}

TEST_CASE("logistic3 values") {
    const ModelSpec m = builtin_logistic3();
    Vector phi(3);
    phi << 20.0, 50.0, 8.0;
    CHECK(m.eval_f(phi, one(50.0)) == doctest::Approx(10.0));
    CHECK(m.eval_f(phi, one(1e6)) == doctest::Approx(20.0));
    // Finite-difference oracle near published soybean magnitudes.
    Vector p2(3);
    p2 << 17.49, 56.16, 8.11;
    const Vector g = m.dphi(p2, one(60.0));
    const Vector gfd = fd_dphi(m, p2, one(60.0));
    CHECK((g - gfd).cwiseAbs().maxCoeff() / std::max(1.0, gfd.cwiseAbs().maxCoeff()) < 1e-5);
}

TEST_CASE("biexp values and guards") {
    const ModelSpec m = builtin_biexp();
    Vector phi(4);
    phi << 2.0, 0.8, 0.4, -1.5;
    CHECK(m.eval_f(phi, one(0.0)) == doctest::Approx(2.4));
    Vector single = phi;
    single(2) = 0.0;
    CHECK(m.eval_f(single, one(1.3)) ==
          doctest::Approx(2.0 * std::exp(-std::exp(0.8) * 1.3)));
    // Overflow guard: extreme rate still evaluates finite.
    Vector extreme = phi;
    extreme(1) = 900.0;
    CHECK(std::isfinite(m.eval_f(extreme, one(5.0))));

    Vector p2(4);
    p2 << 2.55, 0.58, 0.44, -1.33;
    const Vector g = m.dphi(p2, one(1.0));
    const Vector gfd = fd_dphi(m, p2, one(1.0));
    CHECK((g - gfd).cwiseAbs().maxCoeff() / std::max(1.0, gfd.cwiseAbs().maxCoeff()) < 1e-5);
}

TEST_CASE("analytic dphi agrees with finite differences at random interior points") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (const auto& name : {"logistic4", "logistic3", "biexp"}) {
        const ModelSpec m = builtin_model(name);
        for (int rep = 0; rep < 100; ++rep) {
            Vector phi(m.s);
            if (m.name == "biexp") {
                phi << 1.0 + 2.0 * u01(rng), -0.5 + 1.5 * u01(rng), 0.2 + u01(rng),
                    -2.0 + u01(rng);
            } else if (m.name == "logistic4") {
                phi << 50.0 + 40.0 * u01(rng), 5.0 + 10.0 * u01(rng), 1.0 + 4.0 * u01(rng),
                    5.0 + 10.0 * u01(rng);
            } else {
                phi << 10.0 + 20.0 * u01(rng), 40.0 + 30.0 * u01(rng), 4.0 + 8.0 * u01(rng);
            }
            const Vector x = one(20.0 * u01(rng));
            const Vector g = m.dphi(phi, x);
            const Vector gfd = fd_dphi(m, phi, x);
            const double denom = std::max(1.0, gfd.cwiseAbs().maxCoeff());
            CHECK((g - gfd).cwiseAbs().maxCoeff() / denom < 1e-5);
        }
    }
}

TEST_CASE("custom ModelSpec without analytic dphi falls back to finite differences") {
    ModelSpec m;
    m.name = "cubic";
    m.s = 2;
    m.eval_f = [](const Vector& phi, const Vector& x) {
        return phi(0) * x(0) + phi(1) * phi(1) * phi(1);
    };
    Vector phi(2);
    phi << 2.0, 1.5;
    const Vector g = model_dphi(m, phi, one(3.0));
    CHECK(g(0) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(g(1) == doctest::Approx(3.0 * 1.5 * 1.5).epsilon(1e-6));
}

TEST_CASE("jac_u matches finite differences in u") {
    const ModelSpec m = builtin_logistic4();
    const DesignMap d = scenario_design(1);
    Vector beta(4);
    beta << 70.0, 10.0, 3.0, 10.0;
    Vector u(2);
    u << 0.7, -0.4;
    Matrix x(3, 1);
    x << 4.0, 9.0, 15.0;
    const Matrix J = jac_u(m, d, beta, u, x);
    for (Index j = 0; j < 3; ++j) {
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-6;
            Vector up = u, um = u;
            up(k) += h;
            um(k) -= h;
            const Vector xr = x.row(j);
            const double fd = (m.eval_f(d.phi(beta, up, xr), xr) -
                               m.eval_f(d.phi(beta, um, xr), xr)) /
                              (2.0 * h);
            CHECK(J(j, k) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("jac_u with identity G equals dphi rows") {
    const ModelSpec m = builtin_biexp();
    const DesignMap d = DesignMap::identity(4, {0, 1, 2, 3});
    Vector beta(4);
    beta << 2.0, 0.8, 0.4, -1.5;
    Vector u(4);
    u << 0.1, -0.2, 0.05, 0.3;
    Matrix x(2, 1);
    x << 0.5, 2.0;
    const Matrix J = jac_u(m, d, beta, u, x);
    for (Index j = 0; j < 2; ++j) {
        const Vector xr = x.row(j);
        CHECK(J.row(j).transpose().isApprox(m.dphi(d.phi(beta, u, xr), xr), 1e-12));
    }
}

TEST_CASE("jac_u with no random effects is a column of model-in-u derivative zero") {
    // f linear in phi1 with G = (1): column of ones.
    ModelSpec m;
    m.name = "linear";
    m.s = 1;
    m.eval_f = [](const Vector& phi, const Vector&) { return phi(0); };
    m.dphi = [](const Vector&, const Vector&) { return Vector::Ones(1); };
    const DesignMap d = DesignMap::identity(1, {0});
    Matrix x(5, 1);
    x.setZero();
    const Matrix J = jac_u(m, d, Vector::Zero(1), Vector::Zero(1), x);
    CHECK(J.isApprox(Matrix::Ones(5, 1)));
}
