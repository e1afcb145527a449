#pragma once

#include "nlqmm/types.hpp"

namespace nlqmm {

struct SmoothingParam {
    double omega;
    double gamma;

    SmoothingParam(double omega_, double gamma_) : omega(omega_), gamma(gamma_) {
        if (!(omega > 0.0)) throw invalid_parameter("omega must be positive");
        if (!(gamma > 0.0 && gamma < 1.0)) throw invalid_parameter("gamma must be in (0,1)");
    }
};

// Per-observation coefficients of the exact quadratic decomposition
//   sum_j kappa(r_j) = (1/2) (r'Ar/omega + b'r + c'1).
struct QuadCoeffs {
    Vector a_diag;      // 1 - s^2, so 0/1
    Vector b;
    Vector c;
    Eigen::VectorXi s;  // -1/0/1 branch indicator
};

// Check (pinball) loss.
double rho(const QuantileLevel& tau, double r);

// Smooth approximation of rho: quadratic of bandwidth omega in the middle
// band, linear with matching value and slope outside.
double kappa(const QuantileLevel& tau, double omega, double r);

int sign_value(const QuantileLevel& tau, double omega, double r);
Eigen::VectorXi sign_vector(const QuantileLevel& tau, double omega, const Vector& r);

QuadCoeffs quad_coeffs(const QuantileLevel& tau, double omega, const Vector& r);

// (1/2) (r'Ar/omega + b'r + c'1), equal to sum_j kappa(r_j).
double quad_half_form(const QuadCoeffs& qc, const Vector& r, double omega);

}  // namespace nlqmm
