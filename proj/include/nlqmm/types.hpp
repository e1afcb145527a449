#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlqmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct invalid_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One cluster of a two-level nested design: responses y and the n_i x d
// matrix of raw covariate rows, input order preserved.
struct Cluster {
    std::string id;
    Vector y;
    Matrix x;

    Index size() const { return y.size(); }
};

struct ClusteredDataset {
    std::vector<Cluster> clusters;

    Index cluster_count() const { return static_cast<Index>(clusters.size()); }
    Index total_obs() const {
        Index n = 0;
        for (const auto& c : clusters) n += c.size();
        return n;
    }

    // Checks the structural invariants; throws invalid_parameter on violation.
    void validate() const;
};

// Quantile level tau, strictly inside (0,1).
class QuantileLevel {
  public:
    explicit QuantileLevel(double tau) : tau_(tau) {
        if (!(tau > 0.0 && tau < 1.0))
            throw invalid_parameter("quantile level must satisfy 0 < tau < 1");
    }
    double value() const { return tau_; }

  private:
    double tau_;
};

enum class VarianceStructure { Diagonal, GeneralSymmetric };

struct VarianceSpec {
    VarianceStructure structure = VarianceStructure::Diagonal;
    int q = 1;

    // Number of free parameters xi.
    int num_params() const {
        return structure == VarianceStructure::Diagonal ? q : q * (q + 1) / 2;
    }
};

// Unconstrained parameterization of the scaled covariance Psi.
// Diagonal: Psi = diag(exp(2 xi_k)).
// General: log-Cholesky, Psi = L L^T with log-diagonal and free strict
// lower triangle of L packed column-major.
Matrix materialize_psi(const Vector& xi, const VarianceSpec& spec);

// Inverse of the materialize_psi map; always well defined for SPD input.
Vector extract_xi(const Matrix& psi, const VarianceSpec& spec);

// Relative precision factor Delta with Delta^T Delta = Psi^{-1}
// (Delta = L^{-1} for the lower Cholesky factor L of Psi).
Matrix precision_factor(const Matrix& psi);

// The optimization parameter theta = (beta, xi).
struct ThetaVector {
    Vector beta;
    Vector xi;

    Vector packed() const {
        Vector v(beta.size() + xi.size());
        v << beta, xi;
        return v;
    }
    static ThetaVector unpack(const Vector& v, Index p) {
        ThetaVector t;
        t.beta = v.head(p);
        t.xi = v.tail(v.size() - p);
        return t;
    }
};

struct OuterTraceRecord {
    int iteration = 0;
    double omega = 0.0;
    double loglik = 0.0;
    std::string optimizer;   // "bfgs" or "nelder-mead"
    long evaluations = 0;
    bool fallback_used = false;
    int inner_mode_iterations = 0;  // total Gauss-Newton iterations this outer step
};

struct FitResult {
    double tau = 0.5;
    Vector beta_hat;
    Matrix psi_hat;        // scaled covariance Psi
    double sigma_hat = 0.0;
    Matrix sigma_cov_hat;  // Sigma = sigma * Psi
    Matrix u_modes;        // M x q
    double loglik = 0.0;
    std::vector<OuterTraceRecord> trace;
    bool converged = false;
    int outer_iterations = 0;
    double final_omega = 0.0;
};

}  // namespace nlqmm
