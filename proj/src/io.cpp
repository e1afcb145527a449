#include "nlqmm/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nlqmm {

using json = nlohmann::ordered_json;

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (line.back() == ',') fields.push_back("");
        if (first) {
            t.header = fields;
            first = false;
        } else {
            if (fields.size() != t.header.size())
                throw io_error(path + ": line " + std::to_string(t.rows.size() + 2) +
                               " has " + std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(t.header.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    if (first) throw io_error(path + ": empty file");
    return t;
}

namespace {

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw io_error("cannot parse '" + s + "' as a number (" + context + ")");
    }
}

struct ParsedTerm {
    double coeff = 1.0;
    std::vector<std::string> cols;  // empty = intercept
};

ParsedTerm parse_term(std::string s) {
    ParsedTerm t;
    if (!s.empty() && s.front() == '-') {
        t.coeff = -1.0;
        s.erase(s.begin());
    }
    if (s.empty()) throw io_error("empty design term");
    if (s == "1") return t;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, '*')) {
        if (part.empty() || part == "1") continue;
        t.cols.push_back(part);
    }
    return t;
}

}  // namespace

FitConfig load_fit_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw io_error("config '" + path + "': " + e.what());
    }

    FitConfig c;
    try {
        c.response = j.at("response").get<std::string>();
        c.group = j.at("group").get<std::string>();
        c.x = j.at("x").get<std::string>();
        if (j.at("tau").is_array())
            c.taus = j.at("tau").get<std::vector<double>>();
        else
            c.taus = {j.at("tau").get<double>()};
        c.model = j.at("model").get<std::string>();
        for (const auto& ph : j.at("phi")) {
            PhiConfig pc;
            pc.fixed = ph.at("fixed").get<std::vector<std::string>>();
            pc.random = ph.value("random", false);
            c.phi.push_back(std::move(pc));
        }
        c.variance = j.value("variance", std::string("diagonal"));
        if (j.contains("control")) {
            const auto& ctl = j["control"];
            c.control.gamma = ctl.value("gamma", c.control.gamma);
            c.control.loglik_rel_tol = ctl.value("tol", c.control.loglik_rel_tol);
            c.control.max_outer = ctl.value("max_outer", c.control.max_outer);
            if (ctl.contains("omega0") && !ctl["omega0"].is_null())
                c.control.omega0 = ctl["omega0"].get<double>();
            if (ctl.contains("optimizer_order"))
                c.control.optimizer_order =
                    ctl["optimizer_order"].get<std::vector<std::string>>();
            if (ctl.contains("beta_init")) {
                const auto v = ctl["beta_init"].get<std::vector<double>>();
                c.control.beta_init = Eigen::Map<const Vector>(v.data(),
                                                               static_cast<Index>(v.size()));
            }
        }
        if (j.contains("bootstrap")) {
            c.bootstrap_B = j["bootstrap"].value("B", 0);
            c.bootstrap_seed = j["bootstrap"].value("seed", 1ULL);
        }
    } catch (const json::exception& e) {
        throw io_error("config '" + path + "': " + e.what());
    }
    if (c.taus.empty()) throw io_error("config: tau list is empty");
    if (c.variance != "diagonal" && c.variance != "general")
        throw io_error("config: variance must be 'diagonal' or 'general'");
    return c;
}

DesignMap design_from_config(const FitConfig& config, std::vector<std::string>& columns) {
    columns.clear();
    columns.push_back(config.x);
    auto col_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        columns.push_back(name);
        return static_cast<int>(columns.size() - 1);
    };

    std::vector<PhiSpec> specs;
    int beta_at = 0;
    int u_at = 0;
    for (const auto& pc : config.phi) {
        PhiSpec ps;
        if (pc.fixed.empty()) throw io_error("config: a phi component has no fixed terms");
        for (const auto& term_str : pc.fixed) {
            const ParsedTerm pt = parse_term(term_str);
            FixedTerm ft;
            ft.beta_index = beta_at++;
            ft.coeff = pt.coeff;
            for (const auto& name : pt.cols) ft.cols.push_back(col_index(name));
            ps.fixed.push_back(std::move(ft));
        }
        if (pc.random) ps.random.push_back({u_at++, 1.0});
        specs.push_back(std::move(ps));
    }
    return DesignMap(beta_at, u_at, std::move(specs));
}

LoadedProblem load_problem(const CsvTable& table, const FitConfig& config) {
    std::vector<std::string> columns;
    DesignMap design = design_from_config(config, columns);
    ModelSpec model = builtin_model(config.model);
    if (static_cast<int>(config.phi.size()) != model.s)
        throw io_error("config: model '" + config.model + "' has " +
                       std::to_string(model.s) + " phi components, config lists " +
                       std::to_string(config.phi.size()));

    const int resp = table.column(config.response);
    if (resp < 0) throw io_error("unknown column '" + config.response + "'");
    const int grp = table.column(config.group);
    if (grp < 0) throw io_error("unknown column '" + config.group + "'");
    std::vector<int> col_idx;
    for (const auto& name : columns) {
        const int c = table.column(name);
        if (c < 0) throw io_error("unknown column '" + name + "'");
        col_idx.push_back(c);
    }

    // First pass: cluster order by first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& g = table.rows[r][static_cast<std::size_t>(grp)];
        auto [it, inserted] = members.try_emplace(g);
        if (inserted) order.push_back(g);
        it->second.push_back(r);
    }

    LoadedProblem out{ClusteredDataset{}, std::move(model), std::move(design),
                      VarianceSpec{}, columns};
    for (const auto& g : order) {
        const auto& idx = members[g];
        Cluster c;
        c.id = g;
        c.y.resize(static_cast<Index>(idx.size()));
        c.x.resize(static_cast<Index>(idx.size()), static_cast<Index>(columns.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& row = table.rows[idx[k]];
            const std::string ctx = "line " + std::to_string(idx[k] + 2);
            c.y(static_cast<Index>(k)) =
                parse_double(row[static_cast<std::size_t>(resp)], ctx);
            for (std::size_t j = 0; j < col_idx.size(); ++j)
                c.x(static_cast<Index>(k), static_cast<Index>(j)) =
                    parse_double(row[static_cast<std::size_t>(col_idx[j])], ctx);
        }
        out.data.clusters.push_back(std::move(c));
    }
    out.data.validate();

    out.vspec.structure = config.variance == "general" ? VarianceStructure::GeneralSymmetric
                                                       : VarianceStructure::Diagonal;
    out.vspec.q = out.design.q();
    return out;
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.size();
    if (rows == 0) return Matrix(0, 0);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(j[0].size()));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < j[i].size(); ++k)
            m(static_cast<Index>(i), static_cast<Index>(k)) = j[i][k].get<double>();
    return m;
}

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

}  // namespace

std::string fit_result_json(const FitResult& result, const FitConfig& config,
                            const LoadedProblem& problem, const BootstrapResult* boot) {
    json j;
    j["tau"] = result.tau;
    j["model"] = config.model;
    j["response"] = config.response;
    j["group"] = config.group;
    j["x"] = config.x;
    j["variance"] = config.variance;
    json phis = json::array();
    for (const auto& pc : config.phi)
        phis.push_back({{"fixed", pc.fixed}, {"random", pc.random}});
    j["phi"] = std::move(phis);
    j["columns"] = problem.columns;

    j["beta_hat"] = vector_to_json(result.beta_hat);
    j["psi_hat"] = matrix_to_json(result.psi_hat);
    j["sigma_hat"] = result.sigma_hat;
    j["sigma_cov_hat"] = matrix_to_json(result.sigma_cov_hat);
    json ids = json::array();
    for (const auto& c : problem.data.clusters) ids.push_back(c.id);
    j["clusters"] = std::move(ids);
    j["u_modes"] = matrix_to_json(result.u_modes);
    j["loglik"] = result.loglik;
    j["converged"] = result.converged;
    j["outer_iterations"] = result.outer_iterations;
    j["final_omega"] = result.final_omega;

    json trace = json::array();
    for (const auto& rec : result.trace)
        trace.push_back({{"iteration", rec.iteration},
                         {"omega", rec.omega},
                         {"loglik", rec.loglik},
                         {"optimizer", rec.optimizer},
                         {"evaluations", rec.evaluations},
                         {"fallback_used", rec.fallback_used},
                         {"mode_iterations", rec.inner_mode_iterations}});
    j["trace"] = std::move(trace);

    if (boot) {
        j["bootstrap"] = {{"se", vector_to_json(boot->se)},
                          {"B_requested", boot->B_requested},
                          {"B_used", boot->B_used},
                          {"failures", boot->failures},
                          {"replicates", matrix_to_json(boot->replicates)}};
    }
    return j.dump(2) + "\n";
}

StoredFit read_fit_result(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open fit result '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw io_error("fit result '" + path + "': " + e.what());
    }

    StoredFit sf;
    sf.result.tau = j.at("tau").get<double>();
    sf.config.model = j.at("model").get<std::string>();
    sf.config.response = j.at("response").get<std::string>();
    sf.config.group = j.at("group").get<std::string>();
    sf.config.x = j.at("x").get<std::string>();
    sf.config.variance = j.at("variance").get<std::string>();
    sf.config.taus = {sf.result.tau};
    for (const auto& ph : j.at("phi")) {
        PhiConfig pc;
        pc.fixed = ph.at("fixed").get<std::vector<std::string>>();
        pc.random = ph.at("random").get<bool>();
        sf.config.phi.push_back(std::move(pc));
    }
    sf.columns = j.at("columns").get<std::vector<std::string>>();
    sf.result.beta_hat = vector_from_json(j.at("beta_hat"));
    sf.result.psi_hat = matrix_from_json(j.at("psi_hat"));
    sf.result.sigma_hat = j.at("sigma_hat").get<double>();
    sf.result.sigma_cov_hat = matrix_from_json(j.at("sigma_cov_hat"));
    sf.cluster_ids = j.at("clusters").get<std::vector<std::string>>();
    sf.result.u_modes = matrix_from_json(j.at("u_modes"));
    sf.result.loglik = j.at("loglik").get<double>();
    sf.result.converged = j.at("converged").get<bool>();
    sf.result.outer_iterations = j.at("outer_iterations").get<int>();
    sf.result.final_omega = j.at("final_omega").get<double>();
    return sf;
}

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write '" + tmp + "'");
        out << content;
        if (!out) throw io_error("write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw io_error("cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace nlqmm
