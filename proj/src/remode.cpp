#include "nlqmm/remode.hpp"

#include <cmath>

namespace nlqmm {

PsiOps::PsiOps(const Matrix& psi_in) : psi(psi_in) {
    Eigen::LLT<Matrix> llt(psi);
    if (llt.info() != Eigen::Success)
        throw numerical_error("Psi is not positive definite");
    chol_lower = llt.matrixL();
    inv = llt.solve(Matrix::Identity(psi.rows(), psi.cols()));
}

namespace {

double h_from_parts(const QuadCoeffs& qc, const Vector& r, double omega, const PsiOps& psi,
                    const Vector& u) {
    return 2.0 * quad_half_form(qc, r, omega) + u.dot(psi.inv * u);
}

}  // namespace

double h_eval(const ModelSpec& model, const DesignMap& design, const Vector& beta,
              const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
              const QuantileLevel& tau) {
    const Vector r = residuals(model, design, beta, u, cluster);
    return h_from_parts(quad_coeffs(tau, omega, r), r, omega, psi, u);
}

Vector h_grad(const ModelSpec& model, const DesignMap& design, const Vector& beta,
              const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
              const QuantileLevel& tau) {
    const Vector r = residuals(model, design, beta, u, cluster);
    const QuadCoeffs qc = quad_coeffs(tau, omega, r);
    const Matrix J = jac_u(model, design, beta, u, cluster.x);
    const Vector w = (2.0 / omega) * (qc.a_diag.array() * r.array()).matrix() + qc.b;
    return -J.transpose() * w + 2.0 * (psi.inv * u);
}

Matrix h_hess_gn(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                 const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
                 const QuantileLevel& tau) {
    const Vector r = residuals(model, design, beta, u, cluster);
    const QuadCoeffs qc = quad_coeffs(tau, omega, r);
    const Matrix J = jac_u(model, design, beta, u, cluster.x);
    return (2.0 / omega) * (J.transpose() * qc.a_diag.asDiagonal() * J) + 2.0 * psi.inv;
}

ClusterState solve_mode(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                        const PsiOps& psi, const Cluster& cluster, double omega,
                        const QuantileLevel& tau, const Vector& u_start,
                        const ModeOptions& opts) {
    ClusterState st;
    st.u = u_start;
    st.r = residuals(model, design, beta, st.u, cluster);
    st.coeffs = quad_coeffs(tau, omega, st.r);
    st.h_value = h_from_parts(st.coeffs, st.r, omega, psi, st.u);

    double lambda = 0.0;
    for (st.iterations = 0; st.iterations < opts.max_iter; ++st.iterations) {
        st.jac = jac_u(model, design, beta, st.u, cluster.x);
        const Vector w =
            (2.0 / omega) * (st.coeffs.a_diag.array() * st.r.array()).matrix() + st.coeffs.b;
        const Vector grad = -st.jac.transpose() * w + 2.0 * (psi.inv * st.u);

        if (grad.lpNorm<Eigen::Infinity>() <=
            opts.grad_tol * std::max(1.0, std::abs(st.h_value))) {
            st.converged = true;
            break;
        }

        st.hess_gn = (2.0 / omega) *
                         (st.jac.transpose() * st.coeffs.a_diag.asDiagonal() * st.jac) +
                     2.0 * psi.inv;

        // Levenberg-Marquardt: when the band indicator empties out, the
        // curvature collapses to 2 Psi^{-1} and the raw step can be
        // arbitrarily long; damping bounds it by ~|grad|/lambda, which step
        // halvings alone cannot achieve.
        bool accepted = false;
        for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
            Matrix damped = st.hess_gn;
            if (lambda > 0.0)
                damped.diagonal().array() += lambda;
            Eigen::LLT<Matrix> llt(damped);
            if (llt.info() != Eigen::Success) {
                lambda = std::max(lambda * 10.0, 1e-10);
                continue;
            }
            const Vector delta = -llt.solve(grad);

            double t = 1.0;
            for (int halving = 0; halving <= opts.max_halvings; ++halving) {
                const Vector u_new = st.u + t * delta;
                const Vector r_new = residuals(model, design, beta, u_new, cluster);
                const QuadCoeffs qc_new = quad_coeffs(tau, omega, r_new);
                const double h_new = h_from_parts(qc_new, r_new, omega, psi, u_new);
                if (std::isfinite(h_new) &&
                    h_new <= st.h_value - 1e-14 * std::max(1.0, std::abs(st.h_value))) {
                    st.u = u_new;
                    st.r = r_new;
                    st.coeffs = qc_new;
                    st.h_value = h_new;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted)
                lambda = std::max(lambda * 10.0,
                                  1e-8 * std::max(1.0, st.hess_gn.diagonal().maxCoeff()));
        }
        if (accepted) {
            lambda *= 0.25;
        } else {
            st.stalled = true;
            break;
        }
    }

    // Refresh the pieces downstream consumers read (Jacobian, Hessian) at
    // the final iterate.
    st.jac = jac_u(model, design, beta, st.u, cluster.x);
    st.hess_gn =
        (2.0 / omega) * (st.jac.transpose() * st.coeffs.a_diag.asDiagonal() * st.jac) +
        2.0 * psi.inv;
    return st;
}

}  // namespace nlqmm
