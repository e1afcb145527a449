#include "nlqmm/likelihood.hpp"

#include <cmath>

namespace nlqmm {

double psi_hess_logdet(const PsiOps& psi, const Matrix& jac, const Vector& a_diag,
                       double omega) {
    const Index q = psi.psi.rows();
    const Matrix JtAJ = jac.transpose() * a_diag.asDiagonal() * jac;
    const Matrix M = Matrix::Identity(q, q) +
                     (1.0 / omega) * (psi.chol_lower.transpose() * JtAJ * psi.chol_lower);
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success)
        throw numerical_error("log-determinant factorization failed");
    double ld = 0.0;
    const Matrix L = llt.matrixL();
    for (Index k = 0; k < q; ++k) ld += 2.0 * std::log(L(k, k));
    return ld;
}

LoglikBreakdown laplace_loglik(const ModelSpec& model, const DesignMap& design,
                               const ClusteredDataset& data, const Vector& beta,
                               const Matrix& psi, double omega, const QuantileLevel& tau,
                               double sigma, const Matrix* warm_modes,
                               const ModeOptions& mode_opts) {
    if (!(sigma > 0.0)) throw invalid_parameter("sigma must be positive");
    if (!(omega > 0.0)) throw invalid_parameter("omega must be positive");

    const Index M = data.cluster_count();
    const Index N = data.total_obs();
    const int q = design.q();

    LoglikBreakdown out;
    out.per_cluster_h.resize(M);
    out.modes.resize(M, q);
    out.sigma_used = sigma;

    PsiOps ops(psi);

    // Fixed cluster order keeps the reduction reproducible.
    for (Index i = 0; i < M; ++i) {
        const Cluster& cl = data.clusters[static_cast<std::size_t>(i)];
        const Vector u0 = warm_modes ? Vector(warm_modes->row(i)) : Vector(Vector::Zero(q));
        ClusterState st;
        try {
            st = solve_mode(model, design, beta, ops, cl, omega, tau, u0, mode_opts);
        } catch (const numerical_error& e) {
            throw numerical_error("mode solve failed for cluster '" + cl.id +
                                  "': " + e.what());
        }
        out.per_cluster_h(i) = st.h_value;
        out.modes.row(i) = st.u.transpose();
        out.logdet_sum += psi_hess_logdet(ops, st.jac, st.coeffs.a_diag, omega);
        out.mode_iterations += st.iterations;
        if (!st.converged) out.all_modes_converged = false;
    }

    const double t = tau.value();
    out.kernel_term = static_cast<double>(N) * std::log(t * (1.0 - t) / sigma);
    out.logdet_term = -0.5 * out.logdet_sum;
    out.h_term = -out.per_cluster_h.sum() / (2.0 * sigma);
    out.total = out.kernel_term + out.logdet_term + out.h_term;
    return out;
}

double sigma_hat(const Vector& per_cluster_h, Index N) {
    const double sum = per_cluster_h.sum();
    if (!(sum > 0.0))
        throw numerical_error("degenerate fit: sum of per-cluster objectives is not positive");
    return sum / (2.0 * static_cast<double>(N));
}

LoglikBreakdown profiled_loglik(const ModelSpec& model, const DesignMap& design,
                                const ClusteredDataset& data, const Vector& beta,
                                const Matrix& psi, double omega, const QuantileLevel& tau,
                                const Matrix* warm_modes, bool strict,
                                const ModeOptions& mode_opts) {
    // Mode solves do not depend on sigma, so evaluate once at a placeholder
    // scale and re-profile.
    LoglikBreakdown out =
        laplace_loglik(model, design, data, beta, psi, omega, tau, 1.0, warm_modes, mode_opts);
    const Index N = data.total_obs();

    // A vanishing h sum means the modes interpolate the data; the profiled
    // kernel term would diverge to +inf there, so such probes must be
    // rejected, never rewarded.
    const double sum_h = out.per_cluster_h.sum();
    if (!(sum_h > 0.0))
        throw numerical_error(strict
                                  ? "degenerate fit: exact interpolation (sum h <= 0)"
                                  : "degenerate probe: sum h <= 0");
    const double sig = sum_h / (2.0 * static_cast<double>(N));

    const double t = tau.value();
    out.sigma_used = sig;
    out.kernel_term = static_cast<double>(N) * std::log(t * (1.0 - t) / sig);
    out.logdet_term = -0.5 * out.logdet_sum;
    // -(1/(2 sigma)) sum h; equals -N exactly at the profiled sigma.
    out.h_term = -sum_h / (2.0 * sig);
    out.total = out.kernel_term + out.logdet_term + out.h_term;
    return out;
}

}  // namespace nlqmm
