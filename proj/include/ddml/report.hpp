#pragma once

#include <ostream>

#include "ddml/config.hpp"
#include "ddml/pipeline.hpp"
#include "ddml/simulate.hpp"

namespace ddml {

inline constexpr int kSchemaVersion = 1;

/// Non-finite values become null.
Json number_json(double v);
Json estimate_json(const Estimate& e);

/// Results document of `estimate`: schema_version, the resolved config,
/// estimates, aggregates, opt choices, MSPEs, stacking weights, fold sizes
/// and warnings. Contains nothing that varies between identical runs.
Json results_json(const Dataset& data, const PipelineResult& result, const Json& config);

void write_results_table(std::ostream& out, const Dataset& data, const PipelineResult& result);

Json mc_json(const McReport& report, const Json& config);
void write_mc_table(std::ostream& out, const McReport& report, double theta0);

/// Tables over a results document. Throw ConfigError when the document lacks
/// the section.
void print_weights(std::ostream& out, const Json& results);
void print_mspe(std::ostream& out, const Json& results);
void print_folds(std::ostream& out, const Json& results);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace ddml
