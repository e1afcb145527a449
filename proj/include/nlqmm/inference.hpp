#pragma once

#include "nlqmm/fitter.hpp"

namespace nlqmm {

struct BootstrapResult {
    Matrix replicates;  // B_used x p, converged replicates in replicate-index order
    Vector se;          // per-coefficient sample standard deviation
    int failures = 0;
    int B_requested = 0;
    int B_used = 0;
};

// Cluster (block) bootstrap: resamples whole clusters with replacement,
// refits, and reports per-coefficient standard deviations over the
// converged replicates. Deterministic given seed; replicate r uses an RNG
// stream derived from (seed, r).
BootstrapResult cluster_bootstrap(const ClusteredDataset& data, const ModelSpec& model,
                                  const DesignMap& design, const VarianceSpec& vspec,
                                  const QuantileLevel& tau, const FitControl& control,
                                  int B, std::uint64_t seed);

}  // namespace nlqmm
