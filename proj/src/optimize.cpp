#include "nlqmm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nlqmm {

const char* opt_status_name(OptStatus s) {
    switch (s) {
        case OptStatus::Converged: return "converged";
        case OptStatus::MaxEvals: return "max-evals";
        case OptStatus::LineSearchFailure: return "line-search-failure";
        case OptStatus::NonFinite: return "non-finite";
    }
    return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Counter {
    const Objective& f;
    long evals = 0;
    double operator()(const Vector& x) {
        ++evals;
        return f(x);
    }
};

Vector fd_gradient(Counter& f, const Vector& x, double fx, double step_scale) {
    Vector g(x.size());
    Vector xp = x;
    for (Index k = 0; k < x.size(); ++k) {
        const double h = step_scale * std::max(1.0, std::abs(x(k)));
        xp(k) = x(k) + h;
        const double fp = f(xp);
        xp(k) = x(k);
        g(k) = (fp - fx) / h;
    }
    return g;
}

}  // namespace

OptimizerReport minimize_quasi_newton(const Objective& obj, const Vector& x_start,
                                      const OptimizerOptions& opts) {
    Counter f{obj};
    OptimizerReport rep;
    rep.x_best = x_start;
    rep.f_best = f(x_start);
    if (!std::isfinite(rep.f_best)) {
        rep.status = OptStatus::NonFinite;
        rep.evaluations = f.evals;
        return rep;
    }

    const Index n = x_start.size();
    Vector x = x_start;
    double fx = rep.f_best;
    Matrix H = Matrix::Identity(n, n);  // inverse Hessian approximation
    Vector g = fd_gradient(f, x, fx, opts.fd_step);

    while (f.evals < opts.max_evals) {
        if (!g.allFinite()) {
            rep.status = OptStatus::NonFinite;
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol * std::max(1.0, std::abs(fx))) {
            rep.status = OptStatus::Converged;
            break;
        }

        Vector p = -(H * g);
        if (g.dot(p) >= 0.0) {  // not a descent direction: reset
            H.setIdentity();
            p = -g;
        }

        // Armijo backtracking.
        const double c1 = 1e-4;
        const double slope = g.dot(p);
        double alpha = 1.0;
        double f_new = kInf;
        Vector x_new;
        bool accepted = false;
        for (int ls = 0; ls < 40 && f.evals < opts.max_evals; ++ls) {
            x_new = x + alpha * p;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= fx + c1 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            rep.status =
                f.evals >= opts.max_evals ? OptStatus::MaxEvals : OptStatus::LineSearchFailure;
            break;
        }

        const Vector g_new = fd_gradient(f, x_new, f_new, opts.fd_step);
        const Vector s = x_new - x;
        const Vector yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-10 * s.norm() * yv.norm()) {
            const double rho_bfgs = 1.0 / sy;
            const Matrix I = Matrix::Identity(n, n);
            const Matrix V = I - rho_bfgs * s * yv.transpose();
            H = V * H * V.transpose() + rho_bfgs * s * s.transpose();
        }

        const double f_change = std::abs(fx - f_new);
        x = x_new;
        fx = f_new;
        g = g_new;
        if (fx < rep.f_best) {
            rep.f_best = fx;
            rep.x_best = x;
        }
        if (f_change < opts.f_rel_tol * std::max(1.0, std::abs(fx))) {
            rep.status = OptStatus::Converged;
            break;
        }
    }

    if (f.evals >= opts.max_evals && rep.status == OptStatus::Converged &&
        g.lpNorm<Eigen::Infinity>() >= opts.grad_tol * std::max(1.0, std::abs(fx)))
        rep.status = OptStatus::MaxEvals;
    rep.evaluations = f.evals;
    return rep;
}

OptimizerReport minimize_simplex(const Objective& obj, const Vector& x_start,
                                 const OptimizerOptions& opts) {
    Counter f{obj};
    OptimizerReport rep;
    rep.x_best = x_start;
    rep.f_best = f(x_start);
    if (!std::isfinite(rep.f_best)) {
        rep.status = OptStatus::NonFinite;
        rep.evaluations = f.evals;
        return rep;
    }

    auto probe = [&](const Vector& x) {
        const double v = f(x);
        return std::isfinite(v) ? v : kInf;
    };

    const Index n = x_start.size();
    std::vector<Vector> xs(static_cast<std::size_t>(n) + 1, x_start);
    std::vector<double> fs(static_cast<std::size_t>(n) + 1);
    fs[0] = rep.f_best;
    for (Index k = 0; k < n; ++k) {
        xs[static_cast<std::size_t>(k) + 1](k) +=
            opts.simplex_edge * std::max(1.0, std::abs(x_start(k)));
        fs[static_cast<std::size_t>(k) + 1] = probe(xs[static_cast<std::size_t>(k) + 1]);
    }

    auto order = [&]() {
        std::vector<std::size_t> idx(xs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return fs[a] < fs[b];
        });
        std::vector<Vector> xs2;
        std::vector<double> fs2;
        for (auto i : idx) {
            xs2.push_back(xs[i]);
            fs2.push_back(fs[i]);
        }
        xs.swap(xs2);
        fs.swap(fs2);
    };

    rep.status = OptStatus::MaxEvals;
    while (f.evals < opts.max_evals) {
        order();
        if (std::isfinite(fs[0]) && (!std::isfinite(fs.back()) ? false : true) &&
            fs.back() - fs[0] < opts.simplex_f_tol * std::max(1.0, std::abs(fs[0]))) {
            rep.status = OptStatus::Converged;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) centroid += xs[i];
        centroid /= static_cast<double>(n);

        const Vector xr = centroid + 1.0 * (centroid - xs.back());
        const double fr = probe(xr);
        if (fr < fs[0]) {
            const Vector xe = centroid + 2.0 * (centroid - xs.back());
            const double fe = probe(xe);
            if (fe < fr) {
                xs.back() = xe;
                fs.back() = fe;
            } else {
                xs.back() = xr;
                fs.back() = fr;
            }
        } else if (fr < fs[fs.size() - 2]) {
            xs.back() = xr;
            fs.back() = fr;
        } else {
            const bool outside = fr < fs.back();
            const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                      : Vector(centroid - 0.5 * (centroid - xs.back()));
            const double fc = probe(xc);
            if (fc < std::min(fr, fs.back())) {
                xs.back() = xc;
                fs.back() = fc;
            } else {
                for (std::size_t i = 1; i < xs.size(); ++i) {
                    xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
                    fs[i] = probe(xs[i]);
                }
            }
        }
    }

    order();
    if (fs[0] < rep.f_best) {
        rep.f_best = fs[0];
        rep.x_best = xs[0];
    }
    rep.evaluations = f.evals;
    return rep;
}

}  // namespace nlqmm
