#include "ddml/cli.hpp"

#include <fstream>
#include <sstream>

#include "ddml/config.hpp"
#include "ddml/error.hpp"
#include "ddml/report.hpp"

namespace ddml {

namespace {

namespace fs = std::filesystem;

/// Relative paths in a config are relative to the config's directory.
fs::path resolve(const fs::path& config, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : config.parent_path() / path;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

struct LoadedEstimate {
    EstimateConfig config;
    Dataset data;
    PipelineSpec spec;
};

LoadedEstimate load_estimate(const fs::path& config_path, const CliOverrides& overrides) {
    LoadedEstimate l;
    l.config = parse_estimate_config(read_json_file(config_path));
    auto& pc = l.config.pipeline;
    if (overrides.seed) pc.seed = *overrides.seed;
    if (overrides.threads) {
        if (*overrides.threads < 1) throw ConfigError("--threads must be >= 1");
        pc.threads = *overrides.threads;
    }
    if (overrides.out) l.config.output.json = *overrides.out;

    const fs::path data_path = resolve(config_path, l.config.data_path);
    const RoleMap roles = l.config.resolve_roles(read_csv_header(data_path));
    l.data = load_csv(data_path, roles);
    validate_for(l.data, pc.model);
    l.spec = pc.to_spec();
    if (!pc.fold_file.empty()) l.spec.fold_ids = read_fold_csv(resolve(config_path, pc.fold_file));
    return l;
}

/// Resolved config as embedded in results: output paths and threads are
/// left out since neither affects the numbers.
Json provenance(Json config) {
    config.erase("output");
    config.erase("threads");
    return config;
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
            case ErrorKind::Config: return kExitConfig;
            case ErrorKind::Data: return kExitData;
            case ErrorKind::Degenerate:
            case ErrorKind::Convergence: return kExitEstimation;
        }
    }
    return kExitInternal;
}

int cmd_estimate(const fs::path& config, const CliOverrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        LoadedEstimate l = load_estimate(config, overrides);
        const PipelineResult result = run_pipeline(l.data, l.spec);
        const OutputSpec& o = l.config.output;
        if (o.table) write_results_table(out, l.data, result);
        if (!o.json.empty()) {
            const fs::path p = overrides.out ? fs::path(o.json) : resolve(config, o.json);
            write_json_file(p, results_json(l.data, result, provenance(l.config.to_json())));
        }
        if (!o.cef_csv.empty()) write_cef_csv(resolve(config, o.cef_csv), result.crossfit, result.folds);
        for (const auto& w : result.warnings) err << "warning: " << w << "\n";
        return int{kExitOk};
    });
}

int cmd_simulate(const fs::path& config, const CliOverrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        SimulateConfig c = parse_simulate_config(read_json_file(config));
        if (overrides.seed) c.seed = *overrides.seed;
        if (overrides.threads) {
            if (*overrides.threads < 1) throw ConfigError("--threads must be >= 1");
            c.threads = *overrides.threads;
        }
        if (overrides.out) c.output.json = *overrides.out;

        McOptions options;
        options.reps = c.reps;
        options.seed = c.seed;
        options.oracle = c.oracle;
        options.ols = c.ols;
        options.ddml = c.ddml;
        options.threads = c.threads;
        if (c.ddml) options.pipeline = c.pipeline.to_spec();
        const McReport report = run_mc(c.dgp, options);

        if (c.output.table) write_mc_table(out, report, c.dgp.theta0);
        if (!c.output.json.empty()) {
            const fs::path p = overrides.out ? fs::path(c.output.json) : resolve(config, c.output.json);
            write_json_file(p, mc_json(report, provenance(c.to_json())));
        }
        if (!c.output.rep_csv.empty()) write_mc_csv(resolve(config, c.output.rep_csv), report);
        return int{kExitOk};
    });
}

int cmd_inspect(const fs::path& results, const std::string& what, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (what != "weights" && what != "mspe" && what != "folds")
            throw ConfigError("unknown inspect target '" + what + "' (expected weights, mspe, folds)");
        const Json j = read_json_file(results);
        if (!j.is_object() || !j.contains("schema_version")) throw ConfigError("'" + results.string() + "' is not a results file");
        if (j.at("schema_version") != kSchemaVersion)
            throw ConfigError("unsupported schema_version " + j.at("schema_version").dump());
        if (what == "weights") print_weights(out, j);
        else if (what == "mspe") print_mspe(out, j);
        else print_folds(out, j);
        return int{kExitOk};
    });
}

int cmd_export_folds(const fs::path& config, const CliOverrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        CliOverrides o = overrides;
        o.out.reset();
        const LoadedEstimate l = load_estimate(config, o);
        FoldAssignment folds;
        if (l.spec.fold_ids) {
            folds = import_folds(*l.spec.fold_ids);
        } else {
            std::optional<std::span<const std::int64_t>> cluster;
            if (l.spec.cluster_folds && l.data.cluster) cluster = std::span<const std::int64_t>(*l.data.cluster);
            folds = assign_folds(l.data.n(), l.spec.k, l.spec.reps, l.spec.seed, cluster);
        }
        if (overrides.out) {
            write_folds_csv(*overrides.out, folds);
        } else {
            out << "fold_1";
            for (int r = 1; r < folds.reps; ++r) out << ",fold_" << r + 1;
            out << "\n";
            for (Index i = 0; i < folds.n(); ++i) {
                for (int r = 0; r < folds.reps; ++r) out << (r ? "," : "") << folds.fold_of(i, r);
                out << "\n";
            }
        }
        return int{kExitOk};
    });
}

}  // namespace ddml
