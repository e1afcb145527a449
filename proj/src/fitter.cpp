#include "nlqmm/fitter.hpp"

#include <cmath>
#include <limits>

namespace nlqmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Pooled {
    Matrix x;
    Vector y;
};

Pooled pool(const ClusteredDataset& data) {
    const Index n = data.total_obs();
    const Index d = data.clusters.front().x.cols();
    Pooled p;
    p.x.resize(n, d);
    p.y.resize(n);
    Index at = 0;
    for (const auto& c : data.clusters) {
        p.x.middleRows(at, c.size()) = c.x;
        p.y.segment(at, c.size()) = c.y;
        at += c.size();
    }
    return p;
}

Vector pooled_residuals(const ClusteredDataset& data, const ModelSpec& model,
                        const DesignMap& fixed_design, const Vector& beta) {
    const Vector u0(0);
    Vector r(data.total_obs());
    Index at = 0;
    for (const auto& c : data.clusters) {
        r.segment(at, c.size()) = residuals(model, fixed_design, beta, u0, c);
        at += c.size();
    }
    return r;
}

double sd_of(const Vector& v) {
    if (v.size() < 2) return 0.0;
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

Vector initial_beta(const ClusteredDataset& data, const ModelSpec& model,
                    const DesignMap& design, const FitControl& control) {
    if (control.beta_init) {
        if (control.beta_init->size() != design.p())
            throw invalid_parameter("beta_init has wrong length");
        return *control.beta_init;
    }
    if (!model.rough_start)
        throw invalid_parameter("model '" + model.name +
                                "' has no rough-start heuristic; supply beta_init");
    const Pooled pd = pool(data);
    const Vector phi_target = model.rough_start(pd.x, pd.y);
    return beta_from_phi_target(data, design, phi_target);
}

enum class Method { QuasiNewton, Simplex };

Method parse_method(const std::string& name) {
    if (name == "bfgs" || name == "quasi-newton") return Method::QuasiNewton;
    if (name == "nelder-mead" || name == "simplex") return Method::Simplex;
    throw invalid_parameter("unknown optimizer '" + name + "'");
}

bool is_failure(OptStatus s) {
    return s == OptStatus::LineSearchFailure || s == OptStatus::NonFinite;
}

// Runs the optimizer cascade: each entry is tried from the same start until
// one does not fail. Returns the last report and the method used.
std::pair<OptimizerReport, std::string> run_cascade(const Objective& obj, const Vector& start,
                                                    const std::vector<std::string>& order,
                                                    const OptimizerOptions& opts,
                                                    bool* fallback_used) {
    if (order.empty()) throw invalid_parameter("optimizer order is empty");
    OptimizerReport rep;
    std::string used;
    *fallback_used = false;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Method m = parse_method(order[k]);
        rep = m == Method::QuasiNewton ? minimize_quasi_newton(obj, start, opts)
                                       : minimize_simplex(obj, start, opts);
        used = order[k];
        if (!is_failure(rep.status)) break;
        if (k + 1 < order.size()) *fallback_used = true;
    }
    return {rep, used};
}

// Shared omega-shrinking loop for the fixed-effects-only objectives
// (smoothed NLRQ); returns beta at convergence.
Vector shrink_loop_fixed(const ClusteredDataset& data, const ModelSpec& model,
                         const DesignMap& fixed_design, const QuantileLevel& tau,
                         const FitControl& control, Vector beta, double omega0) {
    const Pooled pd = pool(data);
    double omega = omega0;
    OptimizerOptions opts;
    opts.max_evals = control.max_inner_evals;

    for (int t = 0; t < control.max_outer; ++t) {
        auto obj = [&](const Vector& b) -> double {
            try {
                double s = 0.0;
                const Vector u0(0);
                for (Index j = 0; j < pd.y.size(); ++j) {
                    const Vector x_row = pd.x.row(j);
                    const double f = model.eval_f(fixed_design.phi(b, u0, x_row), x_row);
                    if (!std::isfinite(f)) return kInf;
                    s += kappa(tau, omega, pd.y(j) - f);
                }
                return s;
            } catch (...) {
                return kInf;
            }
        };
        const double before = obj(beta);
        if (!std::isfinite(before))
            throw numerical_error("smoothed quantile objective non-finite at start");
        bool fallback = false;
        auto [rep, used] = run_cascade(obj, beta, control.optimizer_order, opts, &fallback);
        if (is_failure(rep.status) && t == 0 && !(rep.f_best < before))
            throw numerical_error("nonlinear quantile start failed: optimizer status " +
                                  std::string(opt_status_name(rep.status)));
        beta = rep.x_best;
        if (std::abs(before - rep.f_best) <
            control.loglik_rel_tol * std::max(1.0, std::abs(rep.f_best)))
            break;
        omega *= control.gamma;
    }
    return beta;
}

}  // namespace

Vector beta_from_phi_target(const ClusteredDataset& data, const DesignMap& design,
                            const Vector& phi_target) {
    const int p = design.p();
    Matrix FtF = Matrix::Zero(p, p);
    Vector Ftp = Vector::Zero(p);
    for (const auto& c : data.clusters) {
        for (Index j = 0; j < c.size(); ++j) {
            const Matrix F = design.F(c.x.row(j));
            FtF += F.transpose() * F;
            Ftp += F.transpose() * phi_target;
        }
    }
    FtF.diagonal().array() += 1e-8;  // guard against rank deficiency
    return FtF.ldlt().solve(Ftp);
}

Vector nlrq_start(const ClusteredDataset& data, const ModelSpec& model,
                  const DesignMap& design, const QuantileLevel& tau,
                  const FitControl& control) {
    data.validate();
    const DesignMap fixed = design.fixed_only();
    if (data.total_obs() < fixed.p())
        throw invalid_parameter("fewer observations than fixed-effect parameters");
    const Vector beta0 = initial_beta(data, model, fixed, control);
    const Vector r0 = pooled_residuals(data, model, fixed, beta0);
    const double omega0 = control.omega0.value_or(std::max(sd_of(r0), 1e-3));
    return shrink_loop_fixed(data, model, fixed, tau, control, beta0, omega0);
}

Vector nls_pooled(const ClusteredDataset& data, const ModelSpec& model,
                  const DesignMap& design, const FitControl& control) {
    data.validate();
    const DesignMap fixed = design.fixed_only();
    const Pooled pd = pool(data);
    const Vector beta0 = initial_beta(data, model, fixed, control);

    auto obj = [&](const Vector& b) -> double {
        try {
            double s = 0.0;
            const Vector u0(0);
            for (Index j = 0; j < pd.y.size(); ++j) {
                const Vector x_row = pd.x.row(j);
                const double f = model.eval_f(fixed.phi(b, u0, x_row), x_row);
                if (!std::isfinite(f)) return kInf;
                const double r = pd.y(j) - f;
                s += r * r;
            }
            return s;
        } catch (...) {
            return kInf;
        }
    };

    OptimizerOptions opts;
    opts.max_evals = control.max_inner_evals;
    bool fallback = false;
    auto [rep, used] = run_cascade(obj, beta0, control.optimizer_order, opts, &fallback);
    if (rep.status == OptStatus::NonFinite)
        throw numerical_error("nonlinear least squares failed: non-finite objective");
    return rep.x_best;
}

StartingValues starting_values(const ClusteredDataset& data, const ModelSpec& model,
                               const DesignMap& design, const VarianceSpec& vspec,
                               const QuantileLevel& tau, const FitControl& control) {
    data.validate();
    StartingValues sv;

    // Structural problems (bad beta_init, missing rough start) are not
    // recoverable by falling back, so invalid_parameter propagates.
    std::string nlrq_err;
    try {
        sv.theta0.beta = nlrq_start(data, model, design, tau, control);
    } catch (const invalid_parameter&) {
        throw;
    } catch (const std::exception& e) {
        nlrq_err = e.what();
    }
    if (nlrq_err.size()) {
        try {
            sv.theta0.beta = nls_pooled(data, model, design, control);
            sv.used_nls_fallback = true;
        } catch (const invalid_parameter&) {
            throw;
        } catch (const std::exception& e) {
            throw numerical_error("all starting-value strategies failed; quantile start: " +
                                  nlrq_err + "; least-squares fallback: " + e.what());
        }
    }

    sv.theta0.xi = Vector::Zero(vspec.num_params());  // Psi(0) = I

    const DesignMap fixed = design.fixed_only();
    const Vector r0 = pooled_residuals(data, model, fixed, sv.theta0.beta);
    sv.sigma0 = r0.array().abs().mean();
    sv.omega0 = control.omega0.value_or(std::max(sd_of(r0), 1e-3));

    const int q = design.q();
    const Matrix psi0 = materialize_psi(sv.theta0.xi, vspec);
    PsiOps ops(psi0);
    sv.modes0.resize(data.cluster_count(), q);
    for (Index i = 0; i < data.cluster_count(); ++i) {
        const ClusterState st =
            solve_mode(model, design, sv.theta0.beta, ops,
                       data.clusters[static_cast<std::size_t>(i)], sv.omega0, tau,
                       Vector::Zero(q));
        sv.modes0.row(i) = st.u.transpose();
    }
    return sv;
}

FitResult fit(const ClusteredDataset& data, const ModelSpec& model, const DesignMap& design,
              const VarianceSpec& vspec, const QuantileLevel& tau,
              const FitControl& control) {
    data.validate();
    if (design.q() < 1) throw invalid_parameter("fit requires at least one random effect");
    if (vspec.q != design.q())
        throw invalid_parameter("variance spec dimension differs from design q");

    const Index p = design.p();
    const StartingValues sv = starting_values(data, model, design, vspec, tau, control);

    Vector theta = sv.theta0.packed();
    double omega = sv.omega0;
    Matrix warm = sv.modes0;
    long mode_iters_total = 0;

    // The warm-mode snapshot is frozen for the duration of an optimizer run
    // so the objective is a pure function of theta; finite-difference
    // gradients and line searches would otherwise see history-dependent
    // noise. The snapshot advances only between outer iterations.
    auto make_objective = [&](double om, const Matrix& warm_snapshot) {
        return [&, om, warm_snapshot](const Vector& tv) -> double {
            try {
                const ThetaVector th = ThetaVector::unpack(tv, p);
                const Matrix psi = materialize_psi(th.xi, vspec);
                const LoglikBreakdown br = profiled_loglik(model, design, data, th.beta,
                                                           psi, om, tau, &warm_snapshot);
                mode_iters_total += br.mode_iterations;
                return -br.total;
            } catch (...) {
                return kInf;
            }
        };
    };

    // Evaluates at theta and advances the warm-mode snapshot.
    auto refresh_warm = [&](double om, const Vector& tv) -> double {
        const ThetaVector th = ThetaVector::unpack(tv, p);
        const Matrix psi = materialize_psi(th.xi, vspec);
        const LoglikBreakdown br =
            profiled_loglik(model, design, data, th.beta, psi, om, tau, &warm);
        warm = br.modes;
        return br.total;
    };

    OptimizerOptions opts;
    opts.max_evals = control.max_inner_evals;
    // The profiled objective has derivative kinks where residuals cross the
    // smoothing band; a coarse difference step averages over them so the
    // quasi-Newton search stays usable at small omega.
    opts.fd_step = 1e-3;

    FitResult res;
    res.tau = tau.value();

    double ll_start;
    try {
        ll_start = refresh_warm(omega, theta);
    } catch (const std::exception& e) {
        throw numerical_error(std::string("log-likelihood failed at the starting values: ") +
                              e.what());
    }
    if (!std::isfinite(ll_start))
        throw numerical_error("log-likelihood non-finite at the starting values");

    // Convergence compares the optimizer's gain within one iteration (value
    // at the incoming theta under the current omega versus the optimized
    // value). The objective's value itself drifts without bound as omega
    // shrinks, so comparing optima across different omega never settles.
    bool converged = false;
    int t = 0;
    // The smoothed loss is pointwise nonincreasing in omega at fixed
    // parameters, so the maximized log-likelihood must not increase when
    // omega shrinks. An increase signals a degenerate escape (variance
    // blowing up while sigma collapses); revert to the previous iterate and
    // stop there.
    double prev_iter_ll = kInf;
    for (; t < control.max_outer; ++t) {
        const Objective obj = make_objective(omega, warm);
        bool fallback = false;
        const long mode_iters_before = mode_iters_total;
        auto [rep, used] = run_cascade(obj, theta, control.optimizer_order, opts, &fallback);
        if (is_failure(rep.status) && t == 0 && !(rep.f_best < -ll_start))
            throw numerical_error("all optimizers failed at the first outer iteration");

        const double ll = -rep.f_best;
        if (ll > prev_iter_ll + control.loglik_rel_tol * std::max(1.0, std::abs(prev_iter_ll))) {
            // theta still holds the previous iteration's optimum.
            omega /= control.gamma;
            converged = true;
            break;
        }
        prev_iter_ll = ll;
        theta = rep.x_best;
        try {
            refresh_warm(omega, theta);
        } catch (const std::exception&) {
            // Keep the previous snapshot; the accepted theta evaluated fine
            // against it.
        }

        OuterTraceRecord rec;
        rec.iteration = t;
        rec.omega = omega;
        rec.loglik = ll;
        rec.optimizer = used;
        rec.evaluations = rep.evaluations;
        rec.fallback_used = fallback;
        rec.inner_mode_iterations = static_cast<int>(mode_iters_total - mode_iters_before);
        res.trace.push_back(rec);

        if (std::abs(ll - ll_start) <
            control.loglik_rel_tol * std::max(1.0, std::abs(ll))) {
            converged = true;
            ++t;
            break;
        }
        omega *= control.gamma;
        try {
            ll_start = refresh_warm(omega, theta);
        } catch (const std::exception&) {
            // The objective cannot be evaluated at the reduced smoothing
            // level: the smoothing floor has been reached numerically. Keep
            // the last working omega and stop.
            omega /= control.gamma;
            converged = true;
            ++t;
            break;
        }
        if (!std::isfinite(ll_start)) {
            omega /= control.gamma;
            converged = true;
            ++t;
            break;
        }
    }

    // Final refresh of sigma and the modes (strict scale: degenerate fits
    // are a hard error in final results).
    const ThetaVector th = ThetaVector::unpack(theta, p);
    const Matrix psi = materialize_psi(th.xi, vspec);
    const LoglikBreakdown fin =
        profiled_loglik(model, design, data, th.beta, psi, omega, tau, &warm, true);

    res.beta_hat = th.beta;
    res.psi_hat = psi;
    res.sigma_hat = fin.sigma_used;
    res.sigma_cov_hat = fin.sigma_used * psi;
    res.u_modes = fin.modes;
    res.loglik = fin.total;
    res.converged = converged;
    res.outer_iterations = t;
    res.final_omega = omega;
    return res;
}

}  // namespace nlqmm
