#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nlqmm/likelihood.hpp"

using namespace nlqmm;

namespace {

ClusteredDataset logistic_dataset(int m, int n, const Vector& beta, const Matrix& psi,
                                  double noise_sd, unsigned seed) {
    const ModelSpec model = builtin_logistic4();
    const DesignMap design = DesignMap::identity(4, {0, 1});
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_real_distribution<double> xs(0.0, 20.0);
    const Eigen::LLT<Matrix> llt(psi);
    ClusteredDataset data;
    for (int i = 0; i < m; ++i) {
        Vector z(psi.rows());
        for (Index k = 0; k < z.size(); ++k) z(k) = norm(gen);
        const Vector u = llt.matrixL() * z;
        Cluster c;
        c.id = "c" + std::to_string(i);
        c.y = Vector(n);
        c.x = Matrix(n, 1);
        for (int j = 0; j < n; ++j) {
            c.x(j, 0) = xs(gen);
            Vector row = c.x.row(j);
            c.y(j) = model.eval_f(eval_phi(design, beta, u, row), row) + noise_sd * norm(gen);
        }
        data.clusters.push_back(std::move(c));
    }
    data.validate();
    return data;
}

struct Scalar1D {
    ModelSpec model;
    DesignMap design{1, 1, {}};
    ClusteredDataset data;

    Scalar1D() {
        model.name = "scalar";
        model.s = 1;
        model.eval_f = [](const Vector& phi, const Vector&) { return phi(0); };
        model.dphi = [](const Vector&, const Vector&) {
            Vector g(1);
            g << 1.0;
            return g;
        };
        design = DesignMap::identity(1, {0});
        Cluster c;
        c.id = "only";
        c.y = Vector(8);
        c.y << 0.3, -0.4, 1.1, 0.2, -0.9, 0.5, 0.1, -0.2;
        c.x = Matrix::Zero(8, 1);
        data.clusters.push_back(c);
        data.validate();
    }
};

}  // namespace

TEST_CASE("log-determinant term matches a direct dense computation") {
    const ClusteredDataset data = logistic_dataset(1, 10, [] {
        Vector b(4);
        b << 70.0, 10.0, 3.0, 10.0;
        return b;
    }(), Matrix::Identity(2, 2) * 2.0, 1.0, 4);
    const ModelSpec model = builtin_logistic4();
    const DesignMap design = DesignMap::identity(4, {0, 1});
    Vector beta(4);
    beta << 70.0, 10.0, 3.0, 10.0;
    Matrix psi(2, 2);
    psi << 4.0, -2.0, -2.0, 5.0;
    const PsiOps ops(psi);
    const double omega = 0.3;
    const ClusterState st = solve_mode(model, design, beta, ops, data.clusters[0], omega,
                                       QuantileLevel(0.4), Vector::Zero(2));
    const Vector a_diag = st.coeffs.a_diag;
    const double got = psi_hess_logdet(ops, st.jac, a_diag, omega);
    const Matrix hdd =
        st.jac.transpose() * a_diag.asDiagonal() * st.jac / omega + ops.inv;
    const double expected = std::log(psi.determinant() * hdd.determinant());
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
    CHECK(got >= 0.0);
}

TEST_CASE("breakdown terms add up and match their definitions") {
    const Vector beta = [] {
        Vector b(4);
        b << 70.0, 10.0, 3.0, 10.0;
        return b;
    }();
    Matrix psi(2, 2);
    psi << 4.0, -2.0, -2.0, 5.0;
    const ClusteredDataset data = logistic_dataset(12, 10, beta, psi, 1.0, 9);
    const ModelSpec model = builtin_logistic4();
    const DesignMap design = DesignMap::identity(4, {0, 1});
    const QuantileLevel tau(0.5);
    const double sigma = 0.8, omega = 0.2;
    const LoglikBreakdown bd =
        laplace_loglik(model, design, data, beta, psi, omega, tau, sigma);
    const double N = 120.0;
    CHECK(bd.sigma_used == sigma);
    CHECK(bd.kernel_term == doctest::Approx(N * std::log(0.25 / sigma)).epsilon(1e-12));
    CHECK(bd.logdet_term == doctest::Approx(-0.5 * bd.logdet_sum).epsilon(1e-12));
    CHECK(bd.h_term ==
          doctest::Approx(-bd.per_cluster_h.sum() / (2.0 * sigma)).epsilon(1e-12));
    CHECK(bd.total ==
          doctest::Approx(bd.kernel_term + bd.logdet_term + bd.h_term).epsilon(1e-12));
    CHECK(bd.per_cluster_h.size() == 12);
    CHECK(bd.per_cluster_h.minCoeff() > 0.0);
    CHECK(bd.modes.rows() == 12);
    CHECK(bd.modes.cols() == 2);
    CHECK(bd.all_modes_converged);
    CHECK(bd.logdet_sum >= 0.0);
}

TEST_CASE("Laplace value tracks one-dimensional numerical integration") {
    // Exact single-cluster marginal log-likelihood:
    //   n log(tau(1-tau)/sigma) - (1/2) log(2 pi sigma) - (1/2) log psi
    //     + log integral exp(-h(u)/(2 sigma)) du
    const Scalar1D s;
    Matrix psi(1, 1);
    psi << 0.5;
    const PsiOps ops(psi);
    Vector beta(1);
    beta << 0.0;
    const QuantileLevel tau(0.5);
    // Accuracy needs the smoothing band to be comparable to the residual
    // spread (the fitter starts omega at the residual scale); far below it
    // the kinks of the loss break the quadratic shape the approximation
    // assumes.
    for (const double sigma : {0.1, 0.3, 0.6}) {
        for (const double omega : {0.8, 1.2}) {
            auto h1 = [&](double u) {
                Vector uv(1);
                uv << u;
                return h_eval(s.model, s.design, beta, ops, s.data.clusters[0], uv, omega,
                              tau);
            };
            // Simpson's rule over a wide bracket.
            const double lo = -6.0, hi = 6.0;
            const int K = 20000;
            const double step = (hi - lo) / K;
            double integral = 0.0;
            for (int k = 0; k <= K; ++k) {
                const double u = lo + k * step;
                const double w = (k == 0 || k == K) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
                integral += w * std::exp(-h1(u) / (2.0 * sigma));
            }
            integral *= step / 3.0;
            const double exact = 8.0 * std::log(0.25 / sigma) -
                                 0.5 * std::log(2.0 * M_PI * sigma) -
                                 0.5 * std::log(0.5) + std::log(integral);
            const LoglikBreakdown bd = laplace_loglik(s.model, s.design, s.data, beta, psi,
                                                      omega, tau, sigma);
            CHECK(std::abs(bd.total - exact) < 0.05);
        }
    }
}

TEST_CASE("profiled scale is the h average over twice the sample size") {
    Vector h(3);
    h << 2.0, 4.0, 6.0;
    CHECK(sigma_hat(h, 30) == doctest::Approx(0.2).epsilon(1e-14));
    Vector bad(2);
    bad << 0.0, 0.0;
    CHECK_THROWS_AS((void)sigma_hat(bad, 10), numerical_error);
}

TEST_CASE("profiled value equals the fixed-scale value at the profiled scale") {
    const Vector beta = [] {
        Vector b(4);
        b << 69.0, 10.5, 3.1, 9.5;
        return b;
    }();
    Matrix psi(2, 2);
    psi << 4.0, -2.0, -2.0, 5.0;
    const ClusteredDataset data = logistic_dataset(10, 10, beta, psi, 1.0, 17);
    const ModelSpec model = builtin_logistic4();
    const DesignMap design = DesignMap::identity(4, {0, 1});
    const QuantileLevel tau(0.5);
    const double omega = 0.15;
    const LoglikBreakdown prof =
        profiled_loglik(model, design, data, beta, psi, omega, tau, nullptr, true);
    const LoglikBreakdown fixed = laplace_loglik(model, design, data, beta, psi, omega,
                                                 tau, prof.sigma_used);
    CHECK(prof.total == doctest::Approx(fixed.total).epsilon(1e-10));
    CHECK(prof.sigma_used ==
          doctest::Approx(sigma_hat(fixed.per_cluster_h, 100)).epsilon(1e-8));

    // The profiled scale maximizes the fixed-scale value over sigma.
    for (double f = 0.25; f <= 4.01; f *= 1.5) {
        if (std::abs(f - 1.0) < 1e-12) continue;
        const LoglikBreakdown other = laplace_loglik(model, design, data, beta, psi, omega,
                                                     tau, prof.sigma_used * f);
        CHECK(prof.total >= other.total - 1e-10);
    }
}

TEST_CASE("warm-started mode recomputation reproduces the cold evaluation") {
    const Vector beta = [] {
        Vector b(4);
        b << 70.0, 10.0, 3.0, 10.0;
        return b;
    }();
    Matrix psi(2, 2);
    psi << 4.0, -2.0, -2.0, 5.0;
    const ClusteredDataset data = logistic_dataset(8, 10, beta, psi, 1.0, 23);
    const ModelSpec model = builtin_logistic4();
    const DesignMap design = DesignMap::identity(4, {0, 1});
    const QuantileLevel tau(0.3);
    const LoglikBreakdown cold =
        laplace_loglik(model, design, data, beta, psi, 0.25, tau, 0.7);
    const LoglikBreakdown warm =
        laplace_loglik(model, design, data, beta, psi, 0.25, tau, 0.7, &cold.modes);
    CHECK(warm.total == doctest::Approx(cold.total).epsilon(1e-8));
    CHECK((warm.modes - cold.modes).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(warm.mode_iterations <= cold.mode_iterations);
}

TEST_CASE("invalid inputs are rejected") {
    const Scalar1D s;
    Vector beta(1);
    beta << 0.0;
    Matrix psi(1, 1);
    psi << 0.5;
    CHECK_THROWS_AS((void)laplace_loglik(s.model, s.design, s.data, beta, psi, 0.1,
                                         QuantileLevel(0.5), 0.0),
                    invalid_parameter);
    CHECK_THROWS_AS((void)laplace_loglik(s.model, s.design, s.data, beta, psi, 0.0,
                                         QuantileLevel(0.5), 1.0),
                    invalid_parameter);
}
