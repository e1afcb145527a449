#include "nlqmm/simulate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "nlqmm/parallel.hpp"
#include "nlqmm/rng.hpp"

namespace nlqmm {

namespace {

Matrix scenario_sigma(int id) {
    switch (id) {
        case 1:
        case 2: {
            Matrix s(2, 2);
            s << 4.0, -2.0, -2.0, 5.0;
            return s;
        }
        case 3: {
            Matrix s(1, 1);
            s << 0.1;
            return s;
        }
        case 4:
            return 0.1 * Matrix::Identity(4, 4);
        default:
            throw invalid_parameter("scenario id must be 1..4");
    }
}

double x_upper(int id) {
    switch (id) {
        case 1:
        case 2: return 20.0;
        case 3: return 5.0;
        case 4: return 8.0;
        default: throw invalid_parameter("scenario id must be 1..4");
    }
}

double chisq3(std::mt19937_64& rng) {
    std::chi_squared_distribution<double> d(3.0);
    return d(rng);
}

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

Vector scenario_beta(int id) {
    Vector b(4);
    switch (id) {
        case 1:
        case 2: b << 70.0, 10.0, 3.0, 10.0; break;
        case 3: b << 1.0, 4.0, 1.0, 0.0; break;
        case 4: b << 2.0, 0.8, 0.4, -1.5; break;
        default: throw invalid_parameter("scenario id must be 1..4");
    }
    return b;
}

ModelSpec scenario_model(int id) {
    if (id >= 1 && id <= 3) return builtin_logistic4();
    if (id == 4) return builtin_biexp();
    throw invalid_parameter("scenario id must be 1..4");
}

DesignMap scenario_design(int id) {
    if (id == 4) return DesignMap::identity(4, {0, 1, 2, 3});
    if (id < 1 || id > 3) throw invalid_parameter("scenario id must be 1..4");
    // F rows: phi1 = beta1 - beta4, phi2 = beta2, phi3 = beta3, phi4 = beta4.
    std::vector<PhiSpec> specs(4);
    specs[0].fixed = {{0, 1.0, {}}, {3, -1.0, {}}};
    specs[1].fixed = {{1, 1.0, {}}};
    specs[2].fixed = {{2, 1.0, {}}};
    specs[3].fixed = {{3, 1.0, {}}};
    if (id == 3) {
        specs[1].random = {{0, 1.0}};  // midpoint only
        return DesignMap(4, 1, std::move(specs));
    }
    specs[0].random = {{0, 1.0}};  // asymptote gap
    specs[1].random = {{1, 1.0}};  // midpoint
    return DesignMap(4, 2, std::move(specs));
}

VarianceSpec scenario_variance(int id) {
    switch (id) {
        case 1:
        case 2: return {VarianceStructure::GeneralSymmetric, 2};
        case 3: return {VarianceStructure::Diagonal, 1};
        case 4: return {VarianceStructure::Diagonal, 4};
        default: throw invalid_parameter("scenario id must be 1..4");
    }
}

GeneratedData gen_scenario(const ScenarioSpec& spec, int replication_index) {
    const Vector beta = scenario_beta(spec.id);
    const Matrix sigma = scenario_sigma(spec.id);
    const Index q = sigma.rows();
    const Matrix L = Eigen::LLT<Matrix>(sigma).matrixL();
    const double xmax = x_upper(spec.id);

    auto rng = substream(spec.seed, static_cast<std::uint64_t>(replication_index));
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, xmax);

    GeneratedData out;
    out.u_true.resize(spec.M, q);
    out.data.clusters.reserve(static_cast<std::size_t>(spec.M));

    for (int i = 0; i < spec.M; ++i) {
        Vector z(q);
        for (Index k = 0; k < q; ++k) z(k) = stdnorm(rng);
        const Vector u = L * z;
        out.u_true.row(i) = u.transpose();

        Cluster c;
        c.id = std::to_string(i + 1);
        c.y.resize(spec.n);
        c.x.resize(spec.n, 1);
        for (int j = 0; j < spec.n; ++j) {
            const double x = unif(rng);
            double eps;
            switch (spec.id) {
                case 1: eps = stdnorm(rng); break;
                case 2:
                    eps = (chisq3(rng) - (spec.center_chisq ? 3.0 : 0.0)) / std::sqrt(6.0);
                    break;
                case 3:
                    eps = (chisq3(rng) - (spec.center_chisq ? 3.0 : 0.0)) / std::sqrt(60.0);
                    break;
                case 4: eps = std::sqrt(0.1) * stdnorm(rng); break;
                default: throw invalid_parameter("scenario id must be 1..4");
            }

            double y;
            if (spec.id == 1 || spec.id == 2) {
                y = (beta(0) - beta(3) + u(0)) /
                        (1.0 + std::exp((beta(1) + u(1) - x) / beta(2))) +
                    beta(3) + eps;
            } else if (spec.id == 3) {
                y = (beta(0) - beta(3)) /
                        (1.0 + std::exp((beta(1) + u(0) - x - 0.5 * x * eps) / beta(2))) +
                    beta(3);
            } else {
                y = (beta(0) + u(0)) * std::exp(-std::exp(beta(1) + u(1)) * x) +
                    (beta(2) + u(2)) * std::exp(-std::exp(beta(3) + u(3)) * x) +
                    (1.0 - x / 8.0) * eps;
            }
            c.x(j, 0) = x;
            c.y(j) = y;
        }
        out.data.clusters.push_back(std::move(c));
    }
    return out;
}

StudySummary run_study(const std::vector<ScenarioSpec>& scenarios,
                       const std::vector<double>& taus, int R, const FitControl& control,
                       const std::vector<std::string>& estimators, int threads) {
    if (R < 1) throw invalid_parameter("R must be at least 1");
    StudySummary out;
    out.R = R;

    for (const auto& sc : scenarios) {
        const ModelSpec model = scenario_model(sc.id);
        const DesignMap design = scenario_design(sc.id);
        const VarianceSpec vspec = scenario_variance(sc.id);
        const int p = design.p();

        for (double tv : taus) {
            const QuantileLevel tau(tv);
            for (const auto& est : estimators) {
                if (est != "nlqmm" && est != "nlrq")
                    throw invalid_parameter("unknown estimator '" + est + "'");
                std::vector<ReplicationRecord> recs(static_cast<std::size_t>(R));

                parallel_for_indexed(R, threads, [&](int r) {
                    ReplicationRecord rec;
                    rec.scenario = sc.id;
                    rec.tau = tv;
                    rec.estimator = est;
                    rec.rep = r;
                    rec.beta = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
                    const GeneratedData gd = gen_scenario(sc, r);
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        if (est == "nlqmm") {
                            const FitResult fr =
                                fit(gd.data, model, design, vspec, tau, control);
                            rec.beta = fr.beta_hat;
                            rec.converged = fr.converged;
                        } else {
                            rec.beta = nlrq_start(gd.data, model, design, tau, control);
                            rec.converged = rec.beta.allFinite();
                        }
                    } catch (const std::exception&) {
                        rec.converged = false;
                    }
                    rec.seconds = std::chrono::duration<double>(
                                      std::chrono::steady_clock::now() - t0)
                                      .count();
                    recs[static_cast<std::size_t>(r)] = std::move(rec);
                });

                int failures = 0;
                for (const auto& rec : recs)
                    if (!rec.converged || !rec.beta.allFinite()) ++failures;
                const int used = R - failures;

                for (int j = 0; j < p; ++j) {
                    SummaryRow row;
                    row.scenario = sc.id;
                    row.tau = tv;
                    row.estimator = est;
                    row.coef = j + 1;
                    row.R_used = used;
                    row.failures = failures;
                    double sum = 0.0;
                    for (const auto& rec : recs)
                        if (rec.converged && rec.beta.allFinite()) sum += rec.beta(j);
                    row.mean = used > 0 ? sum / used
                                        : std::numeric_limits<double>::quiet_NaN();
                    if (used > 1) {
                        double ss = 0.0;
                        for (const auto& rec : recs)
                            if (rec.converged && rec.beta.allFinite())
                                ss += (rec.beta(j) - row.mean) * (rec.beta(j) - row.mean);
                        row.sd = std::sqrt(ss / (used - 1));
                    } else {
                        row.sd = std::numeric_limits<double>::quiet_NaN();
                    }
                    out.rows.push_back(row);
                }
                for (auto& rec : recs) out.raw.push_back(std::move(rec));
            }
        }
    }
    return out;
}

std::string summarize_to_table(const StudySummary& summary) {
    // Group rows by (scenario, estimator, tau) preserving insertion order.
    std::ostringstream os;
    int cur_scenario = -1;
    std::string cur_est;
    double cur_tau = -1.0;
    bool line_open = false;

    auto close_line = [&]() {
        if (line_open) os << "\n";
        line_open = false;
    };

    for (const auto& row : summary.rows) {
        if (row.scenario != cur_scenario) {
            close_line();
            if (cur_scenario != -1) os << "\n";
            os << "Scenario " << row.scenario << "\n";
            cur_scenario = row.scenario;
            cur_est.clear();
            cur_tau = -1.0;
        }
        if (row.estimator != cur_est) {
            close_line();
            os << row.estimator << "\n";
            cur_est = row.estimator;
            cur_tau = -1.0;
        }
        if (row.tau != cur_tau) {
            close_line();
            os << "tau = " << fmt_num(row.tau);
            cur_tau = row.tau;
            line_open = true;
        }
        char cell[96];
        if (std::isnan(row.sd))
            std::snprintf(cell, sizeof(cell), "  %.2f (NA)", row.mean);
        else
            std::snprintf(cell, sizeof(cell), "  %.2f (%.2f)", row.mean, row.sd);
        os << cell;
    }
    close_line();
    return os.str();
}

std::string summary_csv(const StudySummary& summary) {
    std::ostringstream os;
    os << "scenario,tau,estimator,coef,mean,sd,R_used\n";
    for (const auto& r : summary.rows) {
        os << r.scenario << "," << fmt_num(r.tau) << "," << r.estimator << "," << r.coef
           << "," << (std::isnan(r.mean) ? "NA" : fmt_num(r.mean)) << ","
           << (std::isnan(r.sd) ? "NA" : fmt_num(r.sd)) << "," << r.R_used << "\n";
    }
    return os.str();
}

std::string raw_csv(const StudySummary& summary) {
    std::ostringstream os;
    os << "scenario,tau,estimator,rep,coef,estimate,converged\n";
    for (const auto& r : summary.raw) {
        for (Index j = 0; j < r.beta.size(); ++j) {
            os << r.scenario << "," << fmt_num(r.tau) << "," << r.estimator << "," << r.rep
               << "," << (j + 1) << ","
               << (std::isfinite(r.beta(j)) ? fmt_num(r.beta(j)) : "NA") << ","
               << (r.converged ? 1 : 0) << "\n";
        }
    }
    return os.str();
}

}  // namespace nlqmm
