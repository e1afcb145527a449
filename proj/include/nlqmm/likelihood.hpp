#pragma once

#include "nlqmm/remode.hpp"

namespace nlqmm {

struct LoglikBreakdown {
    double total = 0.0;
    double kernel_term = 0.0;   // N log(tau(1-tau)/sigma)
    double logdet_term = 0.0;   // -(1/2) sum log|Psi Hdd_i|
    double h_term = 0.0;        // -(1/(2 sigma)) sum h_i
    Vector per_cluster_h;
    double sigma_used = 0.0;
    Matrix modes;               // M x q
    double logdet_sum = 0.0;    // sum log|Psi Hdd_i|
    int mode_iterations = 0;
    bool all_modes_converged = true;
};

// log|Psi Hdd| evaluated through the symmetric form
// |I + (1/omega) L' J'AJ L| with Psi = L L'; nonnegative by construction.
double psi_hess_logdet(const PsiOps& psi, const Matrix& jac, const Vector& a_diag,
                       double omega);

// Laplace-approximated marginal log-likelihood at fixed sigma. Modes are
// recomputed for every cluster, warm-started from warm_modes when given.
LoglikBreakdown laplace_loglik(const ModelSpec& model, const DesignMap& design,
                               const ClusteredDataset& data, const Vector& beta,
                               const Matrix& psi, double omega, const QuantileLevel& tau,
                               double sigma, const Matrix* warm_modes = nullptr,
                               const ModeOptions& mode_opts = {});

// Profiled scale: sigma = (2N)^{-1} sum_i h_i.
double sigma_hat(const Vector& per_cluster_h, Index N);

// Profiled log-likelihood N[log(tau(1-tau)/sigma_hat) - 1] - (1/2) sum log|Psi Hdd_i|.
// A degenerate sum h <= 0 (modes interpolating the data) always throws; the
// strict flag only selects the message wording for final-result contexts.
LoglikBreakdown profiled_loglik(const ModelSpec& model, const DesignMap& design,
                                const ClusteredDataset& data, const Vector& beta,
                                const Matrix& psi, double omega, const QuantileLevel& tau,
                                const Matrix* warm_modes = nullptr, bool strict = false,
                                const ModeOptions& mode_opts = {});

}  // namespace nlqmm
