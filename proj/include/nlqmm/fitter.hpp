#pragma once

#include <cstdint>
#include <optional>

#include "nlqmm/likelihood.hpp"
#include "nlqmm/optimize.hpp"

namespace nlqmm {

struct FitControl {
    int max_outer = 500;
    double loglik_rel_tol = 1e-4;
    double gamma = 0.5;
    std::optional<double> omega0;
    std::vector<std::string> optimizer_order{"bfgs", "nelder-mead"};
    std::uint64_t seed = 0;  // reserved for stochastic restarts; unused by default
    long max_inner_evals = 4000;
    std::optional<Vector> beta_init;  // overrides the rough-start heuristic
};

struct StartingValues {
    ThetaVector theta0;
    double sigma0 = 0.0;
    double omega0 = 0.0;
    Matrix modes0;
    bool used_nls_fallback = false;
};

// Least-squares beta solving stacked F_ij beta ~ phi_target across all
// observations; seeds the nonlinear starts.
Vector beta_from_phi_target(const ClusteredDataset& data, const DesignMap& design,
                            const Vector& phi_target);

// Fixed-effects-only smoothed nonlinear quantile regression: minimizes
// sum_ij kappa_{omega,tau}(y - f(F beta, x)) with the same omega schedule
// as the full fitter.
Vector nlrq_start(const ClusteredDataset& data, const ModelSpec& model,
                  const DesignMap& design, const QuantileLevel& tau,
                  const FitControl& control = {});

// Pooled nonlinear least squares on the fixed-effects design.
Vector nls_pooled(const ClusteredDataset& data, const ModelSpec& model,
                  const DesignMap& design, const FitControl& control = {});

StartingValues starting_values(const ClusteredDataset& data, const ModelSpec& model,
                               const DesignMap& design, const VarianceSpec& vspec,
                               const QuantileLevel& tau, const FitControl& control = {});

// The full smoothing algorithm: omega-shrinking outer loop maximizing the
// profiled Laplace log-likelihood over theta, quasi-Newton with simplex
// fallback, final refresh of sigma and the modes.
FitResult fit(const ClusteredDataset& data, const ModelSpec& model, const DesignMap& design,
              const VarianceSpec& vspec, const QuantileLevel& tau,
              const FitControl& control = {});

}  // namespace nlqmm
