#include "nlqmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nlqmm {
namespace {

// Clamp exponential arguments so optimizer probes at extreme parameters
// produce finite values instead of overflow.
double safe_exp(double arg) {
    if (arg > 700.0) arg = 700.0;
    if (arg < -700.0) arg = -700.0;
    return std::exp(arg);
}

double median_of(Vector v) {
    std::sort(v.data(), v.data() + v.size());
    const Index n = v.size();
    return n % 2 == 1 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

// Slope/intercept of a simple linear regression y ~ x.
std::pair<double, double> line_fit(const Vector& x, const Vector& y) {
    const double mx = x.mean(), my = y.mean();
    double sxx = 0.0, sxy = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        sxx += (x(i) - mx) * (x(i) - mx);
        sxy += (x(i) - mx) * (y(i) - my);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    return {slope, my - slope * mx};
}

}  // namespace

Vector model_dphi(const ModelSpec& model, const Vector& phi, const Vector& x_row) {
    if (model.dphi) return model.dphi(phi, x_row);
    Vector g(phi.size());
    Vector ph = phi;
    for (Index k = 0; k < phi.size(); ++k) {
        const double step = 1e-6 * std::max(1.0, std::abs(phi(k)));
        ph(k) = phi(k) + step;
        const double fp = model.eval_f(ph, x_row);
        ph(k) = phi(k) - step;
        const double fm = model.eval_f(ph, x_row);
        ph(k) = phi(k);
        g(k) = (fp - fm) / (2.0 * step);
    }
    return g;
}

DesignMap::DesignMap(int p, int q, std::vector<PhiSpec> phi_specs)
    : p_(p), q_(q), phi_specs_(std::move(phi_specs)) {
    for (const auto& ps : phi_specs_) {
        for (const auto& t : ps.fixed)
            if (t.beta_index < 0 || t.beta_index >= p_)
                throw invalid_parameter("fixed-term beta index out of range");
        for (const auto& t : ps.random)
            if (t.u_index < 0 || t.u_index >= q_)
                throw invalid_parameter("random-term u index out of range");
    }
}

namespace {
double term_value(const std::vector<int>& cols, double coeff, const Vector& x_row) {
    double v = coeff;
    for (int c : cols) {
        if (c < 0 || c >= x_row.size())
            throw invalid_parameter("design term references covariate column out of range");
        v *= x_row(c);
    }
    return v;
}
}  // namespace

Matrix DesignMap::F(const Vector& x_row) const {
    Matrix out = Matrix::Zero(s(), p_);
    for (int k = 0; k < s(); ++k)
        for (const auto& t : phi_specs_[k].fixed)
            out(k, t.beta_index) += term_value(t.cols, t.coeff, x_row);
    return out;
}

Matrix DesignMap::G(const Vector& x_row) const {
    Matrix out = Matrix::Zero(s(), q_);
    for (int k = 0; k < s(); ++k)
        for (const auto& t : phi_specs_[k].random) out(k, t.u_index) += t.coeff;
    return out;
}

Vector DesignMap::phi(const Vector& beta, const Vector& u, const Vector& x_row) const {
    if (beta.size() != p_) throw invalid_parameter("beta dimension mismatch");
    if (u.size() != q_) throw invalid_parameter("u dimension mismatch");
    Vector out = Vector::Zero(s());
    for (int k = 0; k < s(); ++k) {
        for (const auto& t : phi_specs_[k].fixed)
            out(k) += term_value(t.cols, t.coeff, x_row) * beta(t.beta_index);
        for (const auto& t : phi_specs_[k].random) out(k) += t.coeff * u(t.u_index);
    }
    return out;
}

DesignMap DesignMap::identity(int s, const std::vector<int>& random_components) {
    std::vector<PhiSpec> specs(s);
    for (int k = 0; k < s; ++k) specs[k].fixed.push_back({k, 1.0, {}});
    int u = 0;
    for (int k : random_components) {
        if (k < 0 || k >= s) throw invalid_parameter("random component index out of range");
        specs[k].random.push_back({u++, 1.0});
    }
    return DesignMap(s, u, std::move(specs));
}

DesignMap DesignMap::fixed_only() const {
    std::vector<PhiSpec> specs = phi_specs_;
    for (auto& ps : specs) ps.random.clear();
    return DesignMap(p_, 0, std::move(specs));
}

Vector eval_phi(const DesignMap& design, const Vector& beta, const Vector& u,
                const Vector& x_row) {
    return design.phi(beta, u, x_row);
}

Matrix jac_u(const ModelSpec& model, const DesignMap& design, const Vector& beta,
             const Vector& u, const Matrix& x_rows) {
    const Index n = x_rows.rows();
    Matrix J(n, design.q());
    for (Index j = 0; j < n; ++j) {
        const Vector x_row = x_rows.row(j);
        const Vector phi = design.phi(beta, u, x_row);
        const Vector g = model_dphi(model, phi, x_row);
        if (!g.allFinite())
            throw numerical_error("non-finite model derivative at observation " +
                                  std::to_string(j));
        J.row(j) = g.transpose() * design.G(x_row);
    }
    return J;
}

Vector residuals(const ModelSpec& model, const DesignMap& design, const Vector& beta,
                 const Vector& u, const Cluster& cluster) {
    Vector r(cluster.size());
    for (Index j = 0; j < cluster.size(); ++j) {
        const Vector x_row = cluster.x.row(j);
        const double f = model.eval_f(design.phi(beta, u, x_row), x_row);
        if (!std::isfinite(f))
            throw numerical_error("non-finite model value in cluster '" + cluster.id +
                                  "' at observation " + std::to_string(j));
        r(j) = cluster.y(j) - f;
    }
    return r;
}

ModelSpec builtin_logistic4() {
    ModelSpec m;
    m.name = "logistic4";
    m.s = 4;
    m.eval_f = [](const Vector& phi, const Vector& x) {
        if (phi(2) == 0.0) throw numerical_error("logistic4: scale phi3 is zero");
        const double E = safe_exp((phi(1) - x(0)) / phi(2));
        return phi(0) / (1.0 + E) + phi(3);
    };
    m.dphi = [](const Vector& phi, const Vector& x) {
        if (phi(2) == 0.0) throw numerical_error("logistic4: scale phi3 is zero");
        const double E = safe_exp((phi(1) - x(0)) / phi(2));
        const double D = 1.0 + E;
        Vector g(4);
        g(0) = 1.0 / D;
        g(1) = -phi(0) * E / (D * D * phi(2));
        g(2) = phi(0) * E * (phi(1) - x(0)) / (D * D * phi(2) * phi(2));
        g(3) = 1.0;
        return g;
    };
    m.rough_start = [](const Matrix& x, const Vector& y) {
        Vector phi(4);
        phi(0) = y.maxCoeff() - y.minCoeff();
        phi(3) = y.minCoeff();
        phi(1) = median_of(x.col(0));
        phi(2) = std::max(1e-3, (x.col(0).maxCoeff() - x.col(0).minCoeff()) / 4.0);
        return phi;
    };
    return m;
}

ModelSpec builtin_logistic3() {
    ModelSpec m;
    m.name = "logistic3";
    m.s = 3;
    m.eval_f = [](const Vector& phi, const Vector& x) {
        if (phi(2) == 0.0) throw numerical_error("logistic3: scale phi3 is zero");
        const double E = safe_exp((phi(1) - x(0)) / phi(2));
        return phi(0) / (1.0 + E);
    };
    m.dphi = [](const Vector& phi, const Vector& x) {
        if (phi(2) == 0.0) throw numerical_error("logistic3: scale phi3 is zero");
        const double E = safe_exp((phi(1) - x(0)) / phi(2));
        const double D = 1.0 + E;
        Vector g(3);
        g(0) = 1.0 / D;
        g(1) = -phi(0) * E / (D * D * phi(2));
        g(2) = phi(0) * E * (phi(1) - x(0)) / (D * D * phi(2) * phi(2));
        return g;
    };
    m.rough_start = [](const Matrix& x, const Vector& y) {
        Vector phi(3);
        phi(0) = y.maxCoeff();
        phi(1) = median_of(x.col(0));
        phi(2) = std::max(1e-3, (x.col(0).maxCoeff() - x.col(0).minCoeff()) / 4.0);
        return phi;
    };
    return m;
}

ModelSpec builtin_biexp() {
    ModelSpec m;
    m.name = "biexp";
    m.s = 4;
    m.eval_f = [](const Vector& phi, const Vector& x) {
        return phi(0) * safe_exp(-safe_exp(phi(1)) * x(0)) +
               phi(2) * safe_exp(-safe_exp(phi(3)) * x(0));
    };
    m.dphi = [](const Vector& phi, const Vector& x) {
        const double r1 = safe_exp(phi(1));
        const double r2 = safe_exp(phi(3));
        const double e1 = safe_exp(-r1 * x(0));
        const double e2 = safe_exp(-r2 * x(0));
        Vector g(4);
        g(0) = e1;
        g(1) = -phi(0) * x(0) * r1 * e1;
        g(2) = e2;
        g(3) = -phi(2) * x(0) * r2 * e2;
        return g;
    };
    // Curve peeling: log-linear fit on the x-sorted tail gives the slow
    // phase, then the fast phase from the early residuals.
    m.rough_start = [](const Matrix& x, const Vector& y) {
        const Index n = x.rows();
        std::vector<Index> order(n);
        std::iota(order.begin(), order.end(), Index(0));
        std::sort(order.begin(), order.end(),
                  [&](Index a, Index b) { return x(a, 0) < x(b, 0); });

        const Index half = std::max<Index>(2, n / 2);
        Vector xt(half), yt(half);
        for (Index i = 0; i < half; ++i) {
            xt(i) = x(order[n - half + i], 0);
            yt(i) = std::log(std::max(y(order[n - half + i]), 1e-8));
        }
        auto [m2, b2] = line_fit(xt, yt);
        Vector phi(4);
        phi(3) = std::log(std::max(-m2, 1e-3));
        phi(2) = std::max(std::exp(b2), 1e-3);

        Vector xh(half), yh(half);
        for (Index i = 0; i < half; ++i) {
            const Index k = order[i];
            xh(i) = x(k, 0);
            const double slow = phi(2) * std::exp(-std::exp(phi(3)) * x(k, 0));
            yh(i) = std::log(std::max(y(k) - slow, 1e-8));
        }
        auto [m1, b1] = line_fit(xh, yh);
        phi(1) = std::log(std::max(-m1, 1e-2));
        phi(0) = std::max(std::exp(b1), 1e-3);
        return phi;
    };
    return m;
}

ModelSpec builtin_model(const std::string& name) {
    if (name == "logistic4") return builtin_logistic4();
    if (name == "logistic3") return builtin_logistic3();
    if (name == "biexp") return builtin_biexp();
    throw invalid_parameter("unknown model '" + name + "'");
}

}  // namespace nlqmm
