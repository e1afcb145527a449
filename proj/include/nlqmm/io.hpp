#pragma once

#include <map>

#include "nlqmm/fitter.hpp"
#include "nlqmm/inference.hpp"

namespace nlqmm {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

// One phi component of the declarative design, written with column names.
// A fixed term is "1" (intercept), a column name, or a '*'-joined product;
// a leading '-' negates it.
struct PhiConfig {
    std::vector<std::string> fixed;
    bool random = false;
};

struct FitConfig {
    std::string response;
    std::string group;
    std::string x;  // model covariate column
    std::vector<double> taus;
    std::string model;  // logistic3 | logistic4 | biexp
    std::vector<PhiConfig> phi;
    std::string variance = "diagonal";  // diagonal | general
    FitControl control;
    int bootstrap_B = 0;
    std::uint64_t bootstrap_seed = 1;
};

FitConfig load_fit_config(const std::string& path);

struct LoadedProblem {
    ClusteredDataset data;
    ModelSpec model;
    DesignMap design;
    VarianceSpec vspec;
    // Covariate column names in the order used by x-rows (model covariate
    // first).
    std::vector<std::string> columns;
};

// Assembles the dataset (cluster order = first appearance) and the design
// from a long-format CSV plus a config. Column or dimension mismatches
// throw io_error naming the offender.
LoadedProblem load_problem(const CsvTable& table, const FitConfig& config);

// Builds the declarative design from a config; fills `columns` with the
// covariate column order (model covariate first, then design columns by
// first mention).
DesignMap design_from_config(const FitConfig& config, std::vector<std::string>& columns);

// Result-file round trip: everything predict and downstream tooling needs.
std::string fit_result_json(const FitResult& result, const FitConfig& config,
                            const LoadedProblem& problem,
                            const BootstrapResult* boot = nullptr);

struct StoredFit {
    FitResult result;
    FitConfig config;
    std::vector<std::string> columns;
    std::vector<std::string> cluster_ids;
};

StoredFit read_fit_result(const std::string& path);

// Writes through a temp file in the same directory, then renames.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace nlqmm
