#include "nlqmm/loss.hpp"

namespace nlqmm {

double rho(const QuantileLevel& tau, double r) {
    const double t = tau.value();
    return r * (t - (r < 0.0 ? 1.0 : 0.0));
}

double kappa(const QuantileLevel& tau, double omega, double r) {
    const double t = tau.value();
    if (r <= (t - 1.0) * omega) return r * (t - 1.0) - 0.5 * (t - 1.0) * (t - 1.0) * omega;
    if (r >= t * omega) return r * t - 0.5 * t * t * omega;
    return r * r / (2.0 * omega);
}

int sign_value(const QuantileLevel& tau, double omega, double r) {
    const double t = tau.value();
    if (r <= (t - 1.0) * omega) return -1;
    if (r >= t * omega) return 1;
    return 0;
}

Eigen::VectorXi sign_vector(const QuantileLevel& tau, double omega, const Vector& r) {
    Eigen::VectorXi s(r.size());
    for (Index j = 0; j < r.size(); ++j) s(j) = sign_value(tau, omega, r(j));
    return s;
}

QuadCoeffs quad_coeffs(const QuantileLevel& tau, double omega, const Vector& r) {
    const double t = tau.value();
    QuadCoeffs qc;
    qc.s = sign_vector(tau, omega, r);
    const Index n = r.size();
    qc.a_diag.resize(n);
    qc.b.resize(n);
    qc.c.resize(n);
    for (Index j = 0; j < n; ++j) {
        const double s = static_cast<double>(qc.s(j));
        qc.a_diag(j) = 1.0 - s * s;
        qc.b(j) = s * ((2.0 * t - 1.0) * s + 1.0);
        qc.c(j) = 0.5 * ((1.0 - 2.0 * t) * omega * s -
                         (1.0 - 2.0 * t + 2.0 * t * t) * omega * s * s);
    }
    return qc;
}

double quad_half_form(const QuadCoeffs& qc, const Vector& r, double omega) {
    const double quad = (qc.a_diag.array() * r.array().square()).sum() / omega;
    return 0.5 * (quad + qc.b.dot(r) + qc.c.sum());
}

}  // namespace nlqmm
