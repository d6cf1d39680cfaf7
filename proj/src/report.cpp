#include "ddml/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "ddml/error.hpp"

namespace ddml {

namespace {

std::string fixed(double v, int digits = 4) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    const std::string fill(width - s.size(), ' ');
    return right ? fill + s : s + fill;
}

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number_json(v(i)));
    return a;
}

std::string_view scope_name(StackScope s) { return s == StackScope::PerFold ? "fold" : "full"; }

Json weights_json(const StackWeights& w, const std::vector<std::string>& learners) {
    Json j;
    j["scope"] = std::string(scope_name(w.scope));
    j["fold"] = w.fold;
    Json map = Json::object();
    for (Index i = 0; i < w.weights.size(); ++i) {
        const auto name = static_cast<std::size_t>(i) < learners.size() ? learners[static_cast<std::size_t>(i)]
                                                                         : "l" + std::to_string(i + 1);
        map[name] = number_json(w.weights(i));
    }
    j["weights"] = map;
    j["objective"] = number_json(w.objective);
    j["degenerate"] = w.degenerate;
    return j;
}

const Json& section(const Json& results, const char* key) {
    const auto it = results.find(key);
    if (it == results.end() || it->is_null()) throw ConfigError(std::string("results file has no '") + key + "' section");
    return *it;
}

double as_double(const Json& v) { return v.is_number() ? v.get<double>() : std::nan(""); }

}  // namespace

Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json estimate_json(const Estimate& e) {
    Json j;
    j["label"] = e.label;
    j["tag"] = e.tag;
    if (e.tag == "rep") j["rep"] = e.rep + 1;
    j["learners"] = e.learners;
    j["names"] = e.names;
    j["theta"] = vector_json(e.theta);
    j["se"] = vector_json(e.se);
    j["n"] = e.n_used;
    j["vce"] = std::string(to_string(e.vce));
    if (e.trimmed_low || e.trimmed_high) j["trimmed"] = {{"low", e.trimmed_low}, {"high", e.trimmed_high}};
    if (e.model == ModelKind::IV || e.model == ModelKind::FIV) j["first_stage_f"] = number_json(e.first_stage_f);
    if (!e.warnings.empty()) j["warnings"] = e.warnings;
    return j;
}

Json results_json(const Dataset& data, const PipelineResult& result, const Json& config) {
    const CrossFitResult& cf = result.crossfit;
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config;
    j["model"] = std::string(to_string(cf.model));
    j["n"] = data.n();
    j["cefs"] = cf.slot_labels;
    Json learners = Json::object();
    for (std::size_t s = 0; s < cf.slots.size(); ++s) learners[cf.slot_labels[s]] = cf.learners[s];
    j["learners"] = learners;

    j["estimates"] = Json::array();
    for (const auto& e : result.estimates) j["estimates"].push_back(estimate_json(e));
    j["aggregates"] = Json::array();
    for (const auto& e : result.aggregates) j["aggregates"].push_back(estimate_json(e));

    j["opt"] = Json::array();
    for (std::size_t r = 0; r < result.opt_choice.size(); ++r) {
        Json row;
        row["rep"] = r + 1;
        Json pick = Json::object();
        for (std::size_t s = 0; s < result.opt_choice[r].size(); ++s) {
            const int idx = result.opt_choice[r][s];
            pick[cf.slot_labels[s]] = cf.learners[s][static_cast<std::size_t>(idx)];
        }
        row["learners"] = pick;
        j["opt"].push_back(row);
    }

    j["mspe"] = Json::array();
    for (const auto& row : mspe_report(cf)) {
        Json m;
        m["cef"] = row.cef;
        m["learner"] = row.learner;
        m["rep"] = row.rep + 1;
        m["mspe"] = number_json(row.mspe);
        m["fold_mspe"] = vector_json(row.fold_mspe);
        j["mspe"].push_back(m);
    }

    j["weights"] = Json::array();
    auto add_weights = [&](std::size_t s, int r, const LearnerFit& fit) {
        for (const auto& w : fit.weights) {
            Json row = weights_json(w, cf.learners[s]);
            row["cef"] = cf.slot_labels[s];
            row["method"] = fit.learner;
            row["rep"] = r + 1;
            j["weights"].push_back(row);
        }
    };
    for (std::size_t s = 0; s < cf.slots.size(); ++s)
        for (int r = 0; r < cf.reps; ++r) {
            const auto ru = static_cast<std::size_t>(r);
            if (!cf.stacked.empty()) add_weights(s, r, cf.stacked[s][ru]);
            if (!cf.shortstack.empty()) add_weights(s, r, cf.shortstack[s][ru]);
        }

    Json folds;
    folds["k"] = result.folds.k;
    folds["reps"] = result.folds.reps;
    folds["seed"] = result.folds.seed;
    folds["imported"] = result.folds.imported;
    folds["sizes"] = Json::array();
    for (int r = 0; r < result.folds.reps; ++r) folds["sizes"].push_back(result.folds.fold_sizes(r));
    j["folds"] = folds;
    j["warnings"] = result.warnings;
    return j;
}

void write_results_table(std::ostream& out, const Dataset& data, const PipelineResult& result) {
    const CrossFitResult& cf = result.crossfit;
    out << "model " << to_string(cf.model) << "  n=" << data.n() << "  K=" << cf.k << "  R=" << cf.reps << "\n\n";

    out << pad("cef", 16, false) << pad("learner", 22, false) << pad("rep", 4) << pad("mspe", 14) << "\n";
    for (const auto& row : mspe_report(cf))
        out << pad(row.cef, 16, false) << pad(row.learner, 22, false) << pad(std::to_string(row.rep + 1), 4)
            << pad(fixed(row.mspe, 6), 14) << "\n";
    out << "\n";

    auto print = [&](const Estimate& e) {
        const std::string rep = e.tag == "rep" ? std::to_string(e.rep + 1) : e.tag;
        for (Index c = 0; c < e.theta.size(); ++c) {
            const double th = e.theta(c), se = e.se(c);
            out << pad(e.label, 16, false) << pad(rep, 4) << "  " << pad(e.names[static_cast<std::size_t>(c)], 10, false)
                << pad(fixed(th), 11) << pad(fixed(se), 11) << "  [" << fixed(th - 1.96 * se) << ", "
                << fixed(th + 1.96 * se) << "]\n";
        }
    };
    out << pad("spec", 16, false) << pad("rep", 4) << "  " << pad("coef", 10, false) << pad("theta", 11)
        << pad("se", 11) << "  95% interval\n";
    for (const auto& e : result.estimates) print(e);
    if (cf.reps > 1) {
        out << "\n";
        for (const auto& e : result.aggregates) print(e);
    }
    for (std::size_t r = 0; r < result.opt_choice.size(); ++r) {
        out << "\nopt rep " << r + 1 << ":";
        for (std::size_t s = 0; s < result.opt_choice[r].size(); ++s)
            out << " " << cf.slot_labels[s] << "=" << cf.learners[s][static_cast<std::size_t>(result.opt_choice[r][s])];
    }
    out << "\n";
    for (const auto& w : result.warnings) out << "warning: " << w << "\n";
}

Json mc_json(const McReport& report, const Json& config) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config;
    j["dgp"] = report.dgp.dgp;
    j["n"] = report.dgp.n;
    j["theta0"] = report.dgp.theta0;
    j["reps"] = report.reps;
    j["seed"] = report.seed;
    j["rows"] = Json::array();
    for (const auto& row : report.rows) {
        Json r;
        r["label"] = row.label;
        r["mab"] = number_json(row.mab);
        r["coverage"] = number_json(row.coverage);
        r["reps_ok"] = row.reps_ok;
        r["failures"] = row.failures;
        j["rows"].push_back(r);
    }
    j["failures"] = report.failures;
    return j;
}

void write_mc_table(std::ostream& out, const McReport& report, double theta0) {
    out << "dgp " << report.dgp.dgp << "  n=" << report.dgp.n << "  theta0=" << format_double(theta0)
        << "  reps=" << report.reps << "\n\n";
    out << pad("estimator", 24, false) << pad("MAB", 10) << pad("coverage", 10) << pad("ok", 6) << pad("failed", 8)
        << "\n";
    for (const auto& row : report.rows)
        out << pad(row.label, 24, false) << pad(fixed(row.mab), 10) << pad(fixed(row.coverage, 3), 10)
            << pad(std::to_string(row.reps_ok), 6) << pad(std::to_string(row.failures), 8) << "\n";
    for (const auto& f : report.failures) out << "failure: " << f << "\n";
}

void print_weights(std::ostream& out, const Json& results) {
    const Json& rows = section(results, "weights");
    if (rows.empty()) {
        out << "no stacking weights (run with shortstack or stacking)\n";
        return;
    }
    // Per-fold rows are followed by the mean over folds of each (cef, method, rep).
    out << pad("cef", 16, false) << pad("method", 8, false) << pad("rep", 4) << pad("fold", 6) << "  weights\n";
    auto line = [&](const Json& row, const std::string& fold, const Json& weights) {
        out << pad(row.at("cef").get<std::string>(), 16, false) << pad(row.at("method").get<std::string>(), 8, false)
            << pad(std::to_string(row.at("rep").get<int>()), 4) << pad(fold, 6) << " ";
        for (const auto& [name, w] : weights.items()) out << " " << name << "=" << fixed(as_double(w));
        out << "\n";
    };
    for (std::size_t i = 0; i < rows.size();) {
        const Json& first = rows[i];
        std::size_t end = i;
        while (end < rows.size() && rows[end].at("cef") == first.at("cef") &&
               rows[end].at("method") == first.at("method") && rows[end].at("rep") == first.at("rep"))
            ++end;
        Json mean = Json::object();
        int folds = 0;
        for (std::size_t r = i; r < end; ++r) {
            const Json& row = rows[r];
            const bool per_fold = row.at("scope") == "fold";
            line(row, per_fold ? std::to_string(row.at("fold").get<int>()) : "all", row.at("weights"));
            if (!per_fold) continue;
            ++folds;
            for (const auto& [name, w] : row.at("weights").items())
                mean[name] = (mean.contains(name) ? mean[name].get<double>() : 0.0) + as_double(w);
        }
        if (folds > 1) {
            for (auto& [name, w] : mean.items()) w = w.get<double>() / folds;
            line(first, "mean", mean);
        }
        i = end;
    }
}

void print_mspe(std::ostream& out, const Json& results) {
    const Json& rows = section(results, "mspe");
    out << pad("cef", 16, false) << pad("learner", 22, false) << pad("rep", 4) << pad("mspe", 12) << "  by fold\n";
    for (const auto& row : rows) {
        out << pad(row.at("cef").get<std::string>(), 16, false) << pad(row.at("learner").get<std::string>(), 22, false)
            << pad(std::to_string(row.at("rep").get<int>()), 4) << pad(fixed(as_double(row.at("mspe")), 6), 12) << " ";
        for (const auto& v : row.at("fold_mspe")) out << " " << fixed(as_double(v), 6);
        out << "\n";
    }
}

void print_folds(std::ostream& out, const Json& results) {
    const Json& f = section(results, "folds");
    out << pad("rep", 4) << pad("fold", 6) << pad("size", 8) << "\n";
    const Json& sizes = f.at("sizes");
    for (std::size_t r = 0; r < sizes.size(); ++r)
        for (std::size_t k = 0; k < sizes[r].size(); ++k)
            out << pad(std::to_string(r + 1), 4) << pad(std::to_string(k + 1), 6)
                << pad(std::to_string(sizes[r][k].get<long long>()), 8) << "\n";
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

}  // namespace ddml
