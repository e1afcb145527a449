#pragma once

#include <functional>

#include "nlqmm/types.hpp"

namespace nlqmm {

// A nonlinear quantile function f(phi, x) with its gradient in phi.
// When dphi is absent, model_dphi falls back to central finite differences.
struct ModelSpec {
    std::string name;
    int s = 0;  // dimension of phi
    std::function<double(const Vector& phi, const Vector& x_row)> eval_f;
    std::function<Vector(const Vector& phi, const Vector& x_row)> dphi;
    // Crude phi guess from pooled (x, y); used to seed the starting-value
    // cascade. Optional.
    std::function<Vector(const Matrix& x, const Vector& y)> rough_start;
};

Vector model_dphi(const ModelSpec& model, const Vector& phi, const Vector& x_row);

// One additive term of a phi component: coeff * beta[beta_index] * prod of
// the listed covariate columns (empty product = intercept).
struct FixedTerm {
    int beta_index;
    double coeff = 1.0;
    std::vector<int> cols;
};

struct RandomTerm {
    int u_index;
    double coeff = 1.0;
};

struct PhiSpec {
    std::vector<FixedTerm> fixed;
    std::vector<RandomTerm> random;
};

// Declarative per-observation design: phi_k = F_k(x) beta + G_k(x) u.
class DesignMap {
  public:
    DesignMap(int p, int q, std::vector<PhiSpec> phi_specs);

    int s() const { return static_cast<int>(phi_specs_.size()); }
    int p() const { return p_; }
    int q() const { return q_; }

    Matrix F(const Vector& x_row) const;  // s x p
    Matrix G(const Vector& x_row) const;  // s x q

    Vector phi(const Vector& beta, const Vector& u, const Vector& x_row) const;

    const std::vector<PhiSpec>& phi_specs() const { return phi_specs_; }

    // Identity fixed design for a model with s parameters: phi_k = beta_k,
    // random effects on the listed phi components.
    static DesignMap identity(int s, const std::vector<int>& random_components = {});

    // Same fixed part with no random effects (q = 0), for NLRQ/NLS starts.
    DesignMap fixed_only() const;

  private:
    int p_;
    int q_;
    std::vector<PhiSpec> phi_specs_;
};

Vector eval_phi(const DesignMap& design, const Vector& beta, const Vector& u,
                const Vector& x_row);

// Jacobian of the cluster response vector f_i in u: row j = dphi(phi_ij)' G_ij.
Matrix jac_u(const ModelSpec& model, const DesignMap& design, const Vector& beta,
             const Vector& u, const Matrix& x_rows);

// Residuals y - f(phi(beta, u), x) for one cluster.
Vector residuals(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                 const Vector& u, const Cluster& cluster);

// f(phi, x) = (phi1 - phi4)/(1 + exp((phi2 - x)/phi3)) + phi4
ModelSpec builtin_logistic4();

// f(phi, x) = phi1/(1 + exp((phi2 - x)/phi3))
ModelSpec builtin_logistic3();

// f(phi, x) = phi1 exp(-exp(phi2) x) + phi3 exp(-exp(phi4) x)
ModelSpec builtin_biexp();

ModelSpec builtin_model(const std::string& name);

}  // namespace nlqmm
