#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nlqmm/io.hpp"
#include "nlqmm/simulate.hpp"

namespace fs = std::filesystem;
using namespace nlqmm;

namespace {

int env_threads() {
    if (const char* v = std::getenv("NLQMM_THREADS")) {
        const int t = std::atoi(v);
        if (t >= 1) return t;
    }
    return 1;
}

std::string tau_tag(double tau) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", tau);
    return buf;
}

int run_fit(const std::string& data_path, const std::string& config_path,
            const std::string& out_dir) {
    const FitConfig config = load_fit_config(config_path);
    const CsvTable table = read_csv(data_path);
    const LoadedProblem problem = load_problem(table, config);
    fs::create_directories(out_dir);

    bool any_nonconverged = false;
    for (double tv : config.taus) {
        const QuantileLevel tau(tv);
        const FitResult result =
            fit(problem.data, problem.model, problem.design, problem.vspec, tau,
                config.control);
        if (!result.converged) any_nonconverged = true;

        std::string payload;
        if (config.bootstrap_B > 0) {
            const BootstrapResult boot =
                cluster_bootstrap(problem.data, problem.model, problem.design, problem.vspec,
                                  tau, config.control, config.bootstrap_B,
                                  config.bootstrap_seed);
            payload = fit_result_json(result, config, problem, &boot);
        } else {
            payload = fit_result_json(result, config, problem);
        }
        const std::string path =
            (fs::path(out_dir) / ("fit_tau" + tau_tag(tv) + ".json")).string();
        atomic_write_file(path, payload);
        std::cout << "wrote " << path << (result.converged ? "" : " (not converged)")
                  << "\n";
    }
    return any_nonconverged ? 2 : 0;
}

int run_simulate(int scenario, std::vector<double> taus, int reps, std::uint64_t seed,
                 double gamma, const std::string& out_dir, bool centered, int threads) {
    if (scenario < 1 || scenario > 4) {
        std::cerr << "error: scenario must be 1..4\n";
        return 1;
    }
    if (taus.empty()) taus = {0.1, 0.5, 0.9};

    ScenarioSpec spec;
    spec.id = scenario;
    spec.seed = seed;
    spec.center_chisq = centered;

    FitControl control;
    control.gamma = gamma;

    const StudySummary summary = run_study({spec}, taus, reps, control,
                                           {"nlqmm", "nlrq"}, threads);
    fs::create_directories(out_dir);
    atomic_write_file((fs::path(out_dir) / "summary.csv").string(), summary_csv(summary));
    atomic_write_file((fs::path(out_dir) / "estimates.csv").string(), raw_csv(summary));
    atomic_write_file((fs::path(out_dir) / "table.txt").string(),
                      summarize_to_table(summary) + "\n");
    std::cout << summarize_to_table(summary) << "\n";
    return 0;
}

int run_predict(const std::string& fit_path, const std::string& grid_spec,
                const std::string& out_path, bool per_cluster) {
    const StoredFit sf = read_fit_result(fit_path);

    double lo = 0.0, hi = 0.0;
    int npoints = 0;
    {
        std::stringstream ss(grid_spec);
        std::string a, b, c;
        if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
            throw io_error("grid must be min:max:npoints");
        lo = std::stod(a);
        hi = std::stod(b);
        npoints = std::stoi(c);
        if (npoints < 2 || !(hi > lo)) throw io_error("invalid grid '" + grid_spec + "'");
    }

    const ModelSpec model = builtin_model(sf.config.model);
    std::vector<std::string> columns;
    const DesignMap design = design_from_config(sf.config, columns);

    // Non-model covariates (dummies, interactions) evaluate at zero, i.e.
    // the baseline stratum.
    auto predict_at = [&](double x, const Vector& u) -> double {
        Vector x_row = Vector::Zero(static_cast<Index>(columns.size()));
        x_row(0) = x;
        return model.eval_f(design.phi(sf.result.beta_hat, u, x_row), x_row);
    };

    std::ostringstream os;
    os << "x,tau,cluster,prediction\n";
    bool any_na = false;
    for (int k = 0; k < npoints; ++k) {
        const double x = lo + (hi - lo) * k / (npoints - 1);
        // Zero-median cluster curve.
        {
            double v;
            bool ok = true;
            try {
                v = predict_at(x, Vector::Zero(design.q()));
                ok = std::isfinite(v);
            } catch (const std::exception&) {
                ok = false;
                v = 0.0;
            }
            char buf[96];
            if (ok)
                std::snprintf(buf, sizeof(buf), "%.10g,%g,,%.10g", x, sf.result.tau, v);
            else
                std::snprintf(buf, sizeof(buf), "%.10g,%g,,NA", x, sf.result.tau);
            if (!ok) any_na = true;
            os << buf << "\n";
        }
        if (per_cluster) {
            for (std::size_t i = 0; i < sf.cluster_ids.size(); ++i) {
                const Vector u = sf.result.u_modes.row(static_cast<Index>(i));
                double v;
                bool ok = true;
                try {
                    v = predict_at(x, u);
                    ok = std::isfinite(v);
                } catch (const std::exception&) {
                    ok = false;
                    v = 0.0;
                }
                char buf[128];
                if (ok)
                    std::snprintf(buf, sizeof(buf), "%.10g,%g,%s,%.10g", x, sf.result.tau,
                                  sf.cluster_ids[i].c_str(), v);
                else
                    std::snprintf(buf, sizeof(buf), "%.10g,%g,%s,NA", x, sf.result.tau,
                                  sf.cluster_ids[i].c_str());
                if (!ok) any_na = true;
                os << buf << "\n";
            }
        }
    }
    atomic_write_file(out_path, os.str());
    if (any_na) std::cerr << "warning: some grid points evaluated outside the finite domain\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlinear quantile mixed models: fitting, simulation, prediction"};
    app.require_subcommand(1);

    // fit
    auto* cfit = app.add_subcommand("fit", "Fit models from a CSV and a config file");
    std::string data_path, config_path, out_dir = ".";
    cfit->add_option("--data", data_path, "Long-format CSV with a header row")->required();
    cfit->add_option("--config", config_path, "JSON fit configuration")->required();
    cfit->add_option("--out", out_dir, "Output directory for result files");

    // simulate
    auto* csim = app.add_subcommand("simulate", "Run the Monte-Carlo study");
    int scenario = 1, reps = 10, threads = 0;
    std::uint64_t seed = 1;
    double gamma = 0.2;
    std::vector<double> taus;
    std::string sim_out = "sim_out";
    bool centered = false;
    csim->add_option("--scenario", scenario, "Scenario id (1..4)")->required();
    csim->add_option("--tau", taus, "Quantile levels (default 0.1 0.5 0.9)");
    csim->add_option("--reps", reps, "Number of replications");
    csim->add_option("--seed", seed, "Master seed");
    csim->add_option("--gamma", gamma, "Smoothing shrink factor");
    csim->add_option("--out", sim_out, "Output directory");
    csim->add_flag("--centered-errors", centered, "Mean-center the chi-square errors");
    csim->add_option("--threads", threads, "Worker threads (default: NLQMM_THREADS or 1)");

    // predict
    auto* cpred = app.add_subcommand("predict", "Evaluate fitted quantile curves on a grid");
    std::string fit_path, grid_spec, pred_out = "predictions.csv";
    bool per_cluster = false;
    cpred->add_option("--fit", fit_path, "Stored fit result (JSON)")->required();
    cpred->add_option("--grid", grid_spec, "Grid over x as min:max:npoints")->required();
    cpred->add_option("--out", pred_out, "Output CSV path");
    cpred->add_flag("--per-cluster", per_cluster, "Also emit per-cluster curves");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(cfit)) return run_fit(data_path, config_path, out_dir);
        if (app.got_subcommand(csim)) {
            const int t = threads > 0 ? threads : env_threads();
            return run_simulate(scenario, taus, reps, seed, gamma, sim_out, centered, t);
        }
        if (app.got_subcommand(cpred))
            return run_predict(fit_path, grid_spec, pred_out, per_cluster);
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const invalid_parameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
