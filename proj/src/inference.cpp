#include "nlqmm/inference.hpp"

#include <cmath>

#include "nlqmm/rng.hpp"

namespace nlqmm {

BootstrapResult cluster_bootstrap(const ClusteredDataset& data, const ModelSpec& model,
                                  const DesignMap& design, const VarianceSpec& vspec,
                                  const QuantileLevel& tau, const FitControl& control,
                                  int B, std::uint64_t seed) {
    if (B < 2) throw invalid_parameter("bootstrap requires B >= 2");
    data.validate();
    const std::size_t M = data.clusters.size();
    const int p = design.p();

    // Replicate fits warm-start from the original fit's estimates.
    FitControl boot_control = control;
    {
        const FitResult base = fit(data, model, design, vspec, tau, control);
        boot_control.beta_init = base.beta_hat;
    }

    std::vector<Vector> kept;
    int failures = 0;
    for (int r = 0; r < B; ++r) {
        auto rng = substream(seed, static_cast<std::uint64_t>(r));
        std::uniform_int_distribution<std::size_t> pick(0, M - 1);
        ClusteredDataset resample;
        resample.clusters.reserve(M);
        for (std::size_t i = 0; i < M; ++i) {
            Cluster c = data.clusters[pick(rng)];
            c.id = "b" + std::to_string(r) + "_" + std::to_string(i) + "_" + c.id;
            resample.clusters.push_back(std::move(c));
        }
        try {
            const FitResult fr = fit(resample, model, design, vspec, tau, boot_control);
            if (fr.converged)
                kept.push_back(fr.beta_hat);
            else
                ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }

    if (failures * 2 > B)
        throw numerical_error("bootstrap failed: " + std::to_string(failures) + " of " +
                              std::to_string(B) + " replicates did not converge");

    BootstrapResult out;
    out.B_requested = B;
    out.failures = failures;
    out.B_used = static_cast<int>(kept.size());
    out.replicates.resize(out.B_used, p);
    for (int i = 0; i < out.B_used; ++i)
        out.replicates.row(i) = kept[static_cast<std::size_t>(i)].transpose();

    out.se.resize(p);
    for (int j = 0; j < p; ++j) {
        const Vector col = out.replicates.col(j);
        const double m = col.mean();
        out.se(j) = out.B_used > 1
                        ? std::sqrt((col.array() - m).square().sum() /
                                    static_cast<double>(out.B_used - 1))
                        : 0.0;
    }
    return out;
}

}  // namespace nlqmm
