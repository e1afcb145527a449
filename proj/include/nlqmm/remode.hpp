#pragma once

#include "nlqmm/loss.hpp"
#include "nlqmm/model.hpp"

namespace nlqmm {

// Cached factorizations of the scaled covariance Psi, reused across
// per-cluster solves for a fixed theta.
struct PsiOps {
    Matrix psi;
    Matrix inv;
    Matrix chol_lower;  // Psi = L L'

    explicit PsiOps(const Matrix& psi_in);
};

struct ModeOptions {
    double grad_tol = 1e-6;  // relative sup-norm tolerance on the gradient
    int max_iter = 100;
    int max_halvings = 12;   // per damping attempt; damping handles long steps
};

struct ClusterState {
    Vector u;
    Vector r;           // residuals at u
    QuadCoeffs coeffs;  // A, b, c, s at u
    double h_value = 0.0;
    Matrix hess_gn;     // (2/omega) J'AJ + 2 Psi^{-1}
    Matrix jac;         // J_i(u)
    bool converged = false;
    bool stalled = false;
    int iterations = 0;
};

// h(theta, y_i, u) = r'Ar/omega + b'r + c'1 + u' Psi^{-1} u.
double h_eval(const ModelSpec& model, const DesignMap& design, const Vector& beta,
              const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
              const QuantileLevel& tau);

// Gradient -J'[(2/omega) A (y - f) + b] + 2 Psi^{-1} u.
Vector h_grad(const ModelSpec& model, const DesignMap& design, const Vector& beta,
              const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
              const QuantileLevel& tau);

// Gauss-Newton Hessian (2/omega) J'AJ + 2 Psi^{-1}; SPD by construction.
Matrix h_hess_gn(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                 const PsiOps& psi, const Cluster& cluster, const Vector& u, double omega,
                 const QuantileLevel& tau);

// Damped Gauss-Newton minimization of h over u: the quadratic-band
// bookkeeping (A, b, c) is frozen while a step is line-searched by halving,
// then refreshed at the accepted iterate.
ClusterState solve_mode(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                        const PsiOps& psi, const Cluster& cluster, double omega,
                        const QuantileLevel& tau, const Vector& u_start,
                        const ModeOptions& opts = {});

}  // namespace nlqmm
