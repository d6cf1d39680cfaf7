#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddml/data.hpp"
#include "ddml/learners.hpp"
#include "ddml/pipeline.hpp"
#include "ddml/simulate.hpp"

namespace ddml {

using Json = nlohmann::ordered_json;

/// Parses JSON text; syntax errors become ConfigError with line and column.
Json parse_json_text(const std::string& text, const std::string& source);
Json read_json_file(const std::filesystem::path& path);

struct OutputSpec {
    std::string json;     // results file; empty = none
    std::string cef_csv;  // cross-fitted CEF columns (estimate)
    std::string rep_csv;  // per-replication values (simulate)
    bool table = true;    // print the text table on stdout
};

/// Learner settings in resolved (all-defaults-filled) form.
Json learner_to_json(const LearnerSpec& spec);
/// Accepts a preset name or an object {"kind": ..., "preset": ..., options}.
LearnerSpec learner_from_json(const Json& j, const std::string& path);

/// Pipeline settings shared by `estimate` and `simulate`. Learners are kept
/// as specs so the resolved config can be written back out.
struct PipelineConfig {
    ModelKind model = ModelKind::Partial;
    std::vector<LearnerSpec> learners;
    std::vector<std::pair<CefKind, std::vector<LearnerSpec>>> cef_learners;
    int k = 5;
    int reps = 1;
    std::uint64_t seed = 0;
    bool cluster_folds = true;
    std::string fold_file;  // CSV of fold ids, one column per repetition
    bool shortstack = false;
    StackingMode stacking = StackingMode::None;
    int stack_folds = 5;
    double trim = 0.01;
    VceKind vce = VceKind::HC1;
    AggregateMode aggregate = AggregateMode::Median;
    Combos combos = Combos::None;
    bool constant = true;
    Effect effect = Effect::ATE;
    int threads = 1;

    PipelineSpec to_spec() const;  // fold_file is applied by the caller
    Json to_json() const;
};

struct EstimateConfig {
    std::string data_path;
    std::vector<std::string> x_patterns;  // names or prefix globs ("x*")
    RoleMap roles;                        // x left empty until resolved against the header
    PipelineConfig pipeline;
    OutputSpec output;

    /// Role mapping with x patterns expanded against the CSV header.
    RoleMap resolve_roles(const std::vector<std::string>& header) const;
    Json to_json() const;
};

struct SimulateConfig {
    DgpSpec dgp;
    int reps = 100;
    std::uint64_t seed = 0;
    bool oracle = true;
    bool ols = true;
    bool ddml = true;
    PipelineConfig pipeline;  // k = 0 selects the size-based default
    int threads = 1;
    OutputSpec output;

    Json to_json() const;
};

EstimateConfig parse_estimate_config(const Json& j);
SimulateConfig parse_simulate_config(const Json& j);

/// Reads the header row of a CSV file.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

/// Fold ids from a CSV (every column is one repetition).
Eigen::MatrixXi read_fold_csv(const std::filesystem::path& path);

}  // namespace ddml
