#pragma once

#include <functional>

#include "nlqmm/types.hpp"

namespace nlqmm {

enum class OptStatus { Converged, MaxEvals, LineSearchFailure, NonFinite };

const char* opt_status_name(OptStatus s);

struct OptimizerOptions {
    long max_evals = 20000;
    double grad_tol = 1e-6;       // relative sup-norm of the FD gradient
    double f_rel_tol = 1e-10;     // relative objective change (quasi-Newton)
    double fd_step = 1e-7;        // forward-difference step scale
    double simplex_edge = 0.1;    // initial edge scale
    double simplex_f_tol = 1e-8;  // relative f-spread for simplex convergence
};

struct OptimizerReport {
    Vector x_best;
    double f_best = 0.0;
    long evaluations = 0;
    OptStatus status = OptStatus::Converged;
};

using Objective = std::function<double(const Vector&)>;

// BFGS with forward-difference gradients and Armijo backtracking.
OptimizerReport minimize_quasi_newton(const Objective& f, const Vector& x_start,
                                      const OptimizerOptions& opts = {});

// Nelder-Mead with standard reflection/expansion/contraction/shrink
// coefficients (1, 2, 0.5, 0.5); NaN probes are treated as +inf.
OptimizerReport minimize_simplex(const Objective& f, const Vector& x_start,
                                 const OptimizerOptions& opts = {});

}  // namespace nlqmm
