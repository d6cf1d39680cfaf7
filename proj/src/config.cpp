#include "ddml/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ddml/error.hpp"

namespace ddml {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void check_keys(const Json& obj, const std::string& path, const std::vector<std::string_view>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path + "." + key, "unknown key");
}

const Json* member(const Json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::string get_string(const Json& obj, const std::string& key, const std::string& path, std::string fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) fail(path + "." + key, "expected a string");
    return v->get<std::string>();
}

bool get_bool(const Json& obj, const std::string& key, const std::string& path, bool fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(path + "." + key, "expected true or false");
    return v->get<bool>();
}

long long get_int(const Json& obj, const std::string& key, const std::string& path, long long fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
    if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
        fail(path + "." + key, "integer out of range");
    return v->get<long long>();
}

int get_small_int(const Json& obj, const std::string& key, const std::string& path, int fallback) {
    const long long v = get_int(obj, key, path, fallback);
    if (v < INT32_MIN || v > INT32_MAX) fail(path + "." + key, "integer out of range");
    return static_cast<int>(v);
}

std::uint64_t get_u64(const Json& obj, const std::string& key, const std::string& path, std::uint64_t fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) {
        if (v->get<long long>() < 0) fail(path + "." + key, "expected a non-negative integer");
        return static_cast<std::uint64_t>(v->get<long long>());
    }
    fail(path + "." + key, "expected a non-negative integer");
}

double get_double(const Json& obj, const std::string& key, const std::string& path, double fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(path + "." + key, "expected a number");
    return v->get<double>();
}

std::vector<std::string> get_strings(const Json& obj, const std::string& key, const std::string& path) {
    const Json* v = member(obj, key);
    if (!v) return {};
    if (v->is_string()) return {v->get<std::string>()};
    if (!v->is_array()) fail(path + "." + key, "expected a string or a list of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) fail(path + "." + key + "[" + std::to_string(i) + "]", "expected a string");
        out.push_back((*v)[i].get<std::string>());
    }
    return out;
}

template <typename Parse>
auto parse_enum(const Json& obj, const std::string& key, const std::string& path, Parse parse,
                decltype(parse(std::string_view{})) fallback) {
    const Json* v = member(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) fail(path + "." + key, "expected a string");
    try {
        return parse(v->get<std::string>());
    } catch (const ConfigError& e) {
        fail(path + "." + key, e.what());
    }
}

std::string_view combos_name(Combos c) {
    switch (c) {
        case Combos::None: return "none";
        case Combos::Diagonal: return "diagonal";
        case Combos::All: return "all";
    }
    return "?";
}

Combos parse_combos(std::string_view s) {
    for (auto c : {Combos::None, Combos::Diagonal, Combos::All})
        if (s == combos_name(c)) return c;
    throw ConfigError("unknown combos '" + std::string(s) + "' (expected none, diagonal, all)");
}

Effect parse_effect(std::string_view s) {
    if (s == "ate") return Effect::ATE;
    if (s == "atet") return Effect::ATET;
    throw ConfigError("unknown effect '" + std::string(s) + "' (expected ate, atet)");
}

std::vector<LearnerSpec> learner_list(const Json& v, const std::string& path) {
    if (v.is_string() || v.is_object()) return {learner_from_json(v, path)};
    if (!v.is_array()) fail(path, "expected a learner or a list of learners");
    if (v.empty()) fail(path, "learner list is empty");
    std::vector<LearnerSpec> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(learner_from_json(v[i], path + "[" + std::to_string(i) + "]"));
    std::set<std::string> names;
    for (const auto& l : out)
        if (!names.insert(l.name).second) fail(path, "duplicate learner name '" + l.name + "'");
    return out;
}

const std::vector<std::string_view> kPipelineKeys = {
    "model", "learners", "cef_learners", "k", "reps", "seed", "cluster_folds", "fold_file", "shortstack",
    "stacking", "stack_folds", "trim", "vce", "aggregate", "combos", "allcombos", "constant", "effect", "threads"};

PipelineConfig parse_pipeline(const Json& j, const std::string& path, bool need_model, int default_k) {
    PipelineConfig c;
    c.k = default_k;
    if (need_model && !member(j, "model")) fail(path + ".model", "required");
    c.model = parse_enum(j, "model", path, parse_model_kind, ModelKind::Partial);
    if (const Json* l = member(j, "learners")) c.learners = learner_list(*l, path + ".learners");
    if (const Json* cl = member(j, "cef_learners")) {
        if (!cl->is_object()) fail(path + ".cef_learners", "expected an object keyed by CEF name");
        for (const auto& [key, value] : cl->items()) {
            CefKind kind;
            try {
                kind = parse_cef_kind(key);
            } catch (const ConfigError& e) {
                fail(path + ".cef_learners." + key, e.what());
            }
            c.cef_learners.emplace_back(kind, learner_list(value, path + ".cef_learners." + key));
        }
    }
    c.k = get_small_int(j, "k", path, c.k);
    c.reps = get_small_int(j, "reps", path, c.reps);
    c.seed = get_u64(j, "seed", path, c.seed);
    c.cluster_folds = get_bool(j, "cluster_folds", path, c.cluster_folds);
    c.fold_file = get_string(j, "fold_file", path, "");
    c.shortstack = get_bool(j, "shortstack", path, c.shortstack);
    c.stacking = parse_enum(j, "stacking", path, parse_stacking_mode, c.stacking);
    c.stack_folds = get_small_int(j, "stack_folds", path, c.stack_folds);
    c.trim = get_double(j, "trim", path, c.trim);
    c.vce = parse_enum(j, "vce", path, parse_vce, c.vce);
    c.aggregate = parse_enum(j, "aggregate", path, parse_aggregate, c.aggregate);
    c.combos = parse_enum(j, "combos", path, parse_combos, c.combos);
    if (get_bool(j, "allcombos", path, false)) c.combos = Combos::All;
    c.constant = get_bool(j, "constant", path, c.constant);
    c.effect = parse_enum(j, "effect", path, parse_effect, c.effect);
    c.threads = get_small_int(j, "threads", path, c.threads);
    if (c.k < 0 || (c.k > 0 && c.k < 2)) fail(path + ".k", "must be >= 2");
    if (c.reps < 1) fail(path + ".reps", "must be >= 1");
    if (c.stack_folds < 2) fail(path + ".stack_folds", "must be >= 2");
    if (!(c.trim > 0.0 && c.trim < 0.5)) fail(path + ".trim", "must lie in (0, 0.5)");
    if (c.threads < 1) fail(path + ".threads", "must be >= 1");
    if (c.learners.empty() && c.cef_learners.empty()) fail(path + ".learners", "required");
    return c;
}

OutputSpec parse_output(const Json& j, const std::string& path) {
    OutputSpec o;
    const Json* v = member(j, "output");
    if (!v) return o;
    check_keys(*v, path + ".output", {"json", "cef_csv", "rep_csv", "table"});
    o.json = get_string(*v, "json", path + ".output", "");
    o.cef_csv = get_string(*v, "cef_csv", path + ".output", "");
    o.rep_csv = get_string(*v, "rep_csv", path + ".output", "");
    o.table = get_bool(*v, "table", path + ".output", true);
    return o;
}

Json output_json(const OutputSpec& o) {
    Json j;
    j["json"] = o.json;
    j["cef_csv"] = o.cef_csv;
    j["rep_csv"] = o.rep_csv;
    j["table"] = o.table;
    return j;
}

std::string_view effect_name(Effect e) { return e == Effect::ATE ? "ate" : "atet"; }

}  // namespace

Json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < byte; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string what = e.what();
        if (const auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json_text(ss.str(), path.string());
}

Json learner_to_json(const LearnerSpec& spec) {
    Json j;
    j["name"] = spec.name;
    j["kind"] = std::string(to_string(spec.kind));
    j["transform"] = std::string(to_string(spec.transform));
    j["seed_offset"] = spec.seed_offset;
    switch (spec.kind) {
        case LearnerKind::OLS: break;
        case LearnerKind::RidgeCV:
        case LearnerKind::LassoCV:
            j["lambda_grid"] = spec.penalty.lambda_grid;
            j["cv_folds"] = spec.penalty.cv_folds;
            j["n_lambda"] = spec.penalty.n_lambda;
            j["lambda_min_ratio"] = spec.penalty.lambda_min_ratio;
            if (spec.kind == LearnerKind::LassoCV) {
                j["tol"] = spec.penalty.tol;
                j["max_sweeps"] = spec.penalty.max_sweeps;
            }
            break;
        case LearnerKind::RandomForest:
            j["n_trees"] = spec.forest.n_trees;
            j["max_depth"] = spec.forest.max_depth;
            j["max_features"] = spec.forest.max_features;
            j["min_leaf"] = spec.forest.min_leaf;
            j["bootstrap"] = spec.forest.bootstrap;
            break;
        case LearnerKind::GradientBoost:
            j["n_trees"] = spec.boost.n_trees;
            j["learning_rate"] = spec.boost.learning_rate;
            j["max_depth"] = spec.boost.max_depth;
            j["min_leaf"] = spec.boost.min_leaf;
            j["early_stop"] = spec.boost.early_stop;
            j["validation_fraction"] = spec.boost.validation_fraction;
            j["patience"] = spec.boost.patience;
            j["tol"] = spec.boost.tol;
            break;
    }
    return j;
}

LearnerSpec learner_from_json(const Json& j, const std::string& path) {
    if (j.is_string()) {
        try {
            return preset_learner(j.get<std::string>());
        } catch (const ConfigError& e) {
            fail(path, e.what());
        }
    }
    if (!j.is_object()) fail(path, "expected a preset name or a learner object");
    check_keys(j, path,
               {"name", "kind", "preset", "transform", "seed_offset", "lambda_grid", "cv_folds", "n_lambda",
                "lambda_min_ratio", "tol", "max_sweeps", "n_trees", "max_depth", "max_features", "min_leaf",
                "bootstrap", "learning_rate", "early_stop", "validation_fraction", "patience"});
    LearnerSpec spec;
    if (member(j, "preset")) {
        try {
            spec = preset_learner(get_string(j, "preset", path, ""));
        } catch (const ConfigError& e) {
            fail(path + ".preset", e.what());
        }
    } else if (member(j, "kind")) {
        spec.kind = parse_enum(j, "kind", path, parse_learner_kind, LearnerKind::OLS);
        spec.name = std::string(to_string(spec.kind));
    } else {
        fail(path, "needs 'kind' or 'preset'");
    }
    if (member(j, "preset") && member(j, "kind")) {
        const auto kind = parse_enum(j, "kind", path, parse_learner_kind, spec.kind);
        if (kind != spec.kind) fail(path + ".kind", "does not match the preset");
    }
    spec.name = get_string(j, "name", path, spec.name);
    if (spec.name.empty()) fail(path + ".name", "must not be empty");
    spec.transform = parse_enum(j, "transform", path, parse_transform, spec.transform);
    spec.seed_offset = get_u64(j, "seed_offset", path, spec.seed_offset);

    auto reject = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys)
            if (member(j, k))
                fail(path + "." + k, "not an option of learner kind " + std::string(to_string(spec.kind)));
    };
    switch (spec.kind) {
        case LearnerKind::OLS:
            reject({"lambda_grid", "cv_folds", "n_lambda", "lambda_min_ratio", "tol", "max_sweeps", "n_trees",
                    "max_depth", "max_features", "min_leaf", "bootstrap", "learning_rate", "early_stop",
                    "validation_fraction", "patience"});
            break;
        case LearnerKind::RidgeCV:
        case LearnerKind::LassoCV: {
            reject({"n_trees", "max_depth", "max_features", "min_leaf", "bootstrap", "learning_rate", "early_stop",
                    "validation_fraction", "patience"});
            auto& p = spec.penalty;
            if (const Json* g = member(j, "lambda_grid")) {
                if (!g->is_array()) fail(path + ".lambda_grid", "expected a list of numbers");
                p.lambda_grid.clear();
                for (std::size_t i = 0; i < g->size(); ++i) {
                    if (!(*g)[i].is_number()) fail(path + ".lambda_grid[" + std::to_string(i) + "]", "expected a number");
                    p.lambda_grid.push_back((*g)[i].get<double>());
                }
            }
            p.cv_folds = get_small_int(j, "cv_folds", path, p.cv_folds);
            p.n_lambda = get_small_int(j, "n_lambda", path, p.n_lambda);
            p.lambda_min_ratio = get_double(j, "lambda_min_ratio", path, p.lambda_min_ratio);
            p.tol = get_double(j, "tol", path, p.tol);
            p.max_sweeps = static_cast<long>(get_int(j, "max_sweeps", path, p.max_sweeps));
            break;
        }
        case LearnerKind::RandomForest: {
            reject({"lambda_grid", "cv_folds", "n_lambda", "lambda_min_ratio", "tol", "max_sweeps", "learning_rate",
                    "early_stop", "validation_fraction", "patience"});
            auto& f = spec.forest;
            f.n_trees = get_small_int(j, "n_trees", path, f.n_trees);
            f.max_depth = get_small_int(j, "max_depth", path, f.max_depth);
            f.max_features = get_small_int(j, "max_features", path, f.max_features);
            f.min_leaf = get_small_int(j, "min_leaf", path, f.min_leaf);
            f.bootstrap = get_bool(j, "bootstrap", path, f.bootstrap);
            break;
        }
        case LearnerKind::GradientBoost: {
            reject({"lambda_grid", "cv_folds", "n_lambda", "lambda_min_ratio", "max_sweeps", "max_features",
                    "bootstrap"});
            auto& b = spec.boost;
            b.n_trees = get_small_int(j, "n_trees", path, b.n_trees);
            b.learning_rate = get_double(j, "learning_rate", path, b.learning_rate);
            b.max_depth = get_small_int(j, "max_depth", path, b.max_depth);
            b.min_leaf = get_small_int(j, "min_leaf", path, b.min_leaf);
            b.early_stop = get_bool(j, "early_stop", path, b.early_stop);
            b.validation_fraction = get_double(j, "validation_fraction", path, b.validation_fraction);
            b.patience = get_small_int(j, "patience", path, b.patience);
            b.tol = get_double(j, "tol", path, b.tol);
            break;
        }
    }
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
    return spec;
}

PipelineSpec PipelineConfig::to_spec() const {
    PipelineSpec s;
    s.model = model;
    for (const auto& l : learners) s.learners.push_back(make_learner(l));
    for (const auto& [kind, set] : cef_learners) {
        auto& dst = s.cef_learners[kind];
        for (const auto& l : set) dst.push_back(make_learner(l));
    }
    s.k = k;
    s.reps = reps;
    s.seed = seed;
    s.cluster_folds = cluster_folds;
    s.shortstack = shortstack;
    s.stacking = stacking;
    s.stack_folds = stack_folds;
    s.trim.lower = trim;
    s.vce = vce;
    s.aggregate = aggregate;
    s.combos = combos;
    s.constant = constant;
    s.effect = effect;
    s.threads = threads;
    return s;
}

Json PipelineConfig::to_json() const {
    Json j;
    j["model"] = std::string(to_string(model));
    j["learners"] = Json::array();
    for (const auto& l : learners) j["learners"].push_back(learner_to_json(l));
    j["cef_learners"] = Json::object();
    for (const auto& [kind, set] : cef_learners) {
        Json arr = Json::array();
        for (const auto& l : set) arr.push_back(learner_to_json(l));
        j["cef_learners"][std::string(to_string(kind))] = arr;
    }
    j["k"] = k;
    j["reps"] = reps;
    j["seed"] = seed;
    j["cluster_folds"] = cluster_folds;
    j["fold_file"] = fold_file;
    j["shortstack"] = shortstack;
    j["stacking"] = std::string(to_string(stacking));
    j["stack_folds"] = stack_folds;
    j["trim"] = trim;
    j["vce"] = std::string(to_string(vce));
    j["aggregate"] = std::string(to_string(aggregate));
    j["combos"] = std::string(combos_name(combos));
    j["constant"] = constant;
    j["effect"] = std::string(effect_name(effect));
    // threads is omitted: it never changes results.
    return j;
}

RoleMap EstimateConfig::resolve_roles(const std::vector<std::string>& header) const {
    RoleMap r = roles;
    r.x.clear();
    std::set<std::string> taken{r.y};
    for (const auto& v : {&r.d, &r.z})
        for (const auto& name : *v) taken.insert(name);
    if (r.cluster) taken.insert(*r.cluster);
    for (const auto& pat : x_patterns) {
        if (!pat.empty() && pat.back() == '*') {
            const std::string prefix = pat.substr(0, pat.size() - 1);
            bool any = false;
            for (const auto& h : header)
                if (h.compare(0, prefix.size(), prefix) == 0 && !taken.count(h) &&
                    std::find(r.x.begin(), r.x.end(), h) == r.x.end()) {
                    r.x.push_back(h);
                    any = true;
                }
            if (!any) throw DataError("pattern '" + pat + "' (role X) matches no column");
        } else {
            r.x.push_back(pat);
        }
    }
    return r;
}

Json EstimateConfig::to_json() const {
    Json j;
    Json data;
    data["path"] = data_path;
    data["y"] = roles.y;
    data["d"] = roles.d;
    data["x"] = x_patterns;
    data["z"] = roles.z;
    data["cluster"] = roles.cluster ? Json(*roles.cluster) : Json(nullptr);
    j["data"] = data;
    const Json pj = pipeline.to_json();
    for (const auto& [key, value] : pj.items()) j[key] = value;
    j["output"] = output_json(output);
    return j;
}

Json SimulateConfig::to_json() const {
    Json j;
    j["dgp"] = dgp.dgp;
    j["n"] = dgp.n;
    j["theta0"] = dgp.theta0;
    j["p"] = dgp.resolved_p();
    j["reps"] = reps;
    j["seed"] = seed;
    j["estimators"] = {{"oracle", oracle}, {"ols", ols}, {"ddml", ddml}};
    if (ddml) j["pipeline"] = pipeline.to_json();
    j["output"] = output_json(output);
    return j;
}

EstimateConfig parse_estimate_config(const Json& j) {
    const std::string path = "config";
    if (!j.is_object()) fail(path, "expected an object");
    {
        std::vector<std::string_view> allowed = kPipelineKeys;
        allowed.push_back("data");
        allowed.push_back("output");
        for (const auto& [key, value] : j.items())
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path + "." + key, "unknown key");
    }
    EstimateConfig c;
    const Json* data = member(j, "data");
    if (!data) fail(path + ".data", "required");
    const std::string dp = path + ".data";
    check_keys(*data, dp, {"path", "y", "d", "x", "z", "cluster"});
    c.data_path = get_string(*data, "path", dp, "");
    if (c.data_path.empty()) fail(dp + ".path", "required");
    c.roles.y = get_string(*data, "y", dp, "");
    if (c.roles.y.empty()) fail(dp + ".y", "required");
    c.roles.d = get_strings(*data, "d", dp);
    if (c.roles.d.empty()) fail(dp + ".d", "required");
    c.x_patterns = get_strings(*data, "x", dp);
    if (c.x_patterns.empty()) fail(dp + ".x", "required");
    c.roles.z = get_strings(*data, "z", dp);
    if (const Json* cl = member(*data, "cluster"); cl && !cl->is_null()) c.roles.cluster = get_string(*data, "cluster", dp, "");
    c.pipeline = parse_pipeline(j, path, true, 5);
    if (c.pipeline.k == 0) fail(path + ".k", "must be >= 2");
    c.output = parse_output(j, path);
    return c;
}

SimulateConfig parse_simulate_config(const Json& j) {
    const std::string path = "config";
    check_keys(j, path, {"dgp", "n", "theta0", "p", "reps", "seed", "estimators", "pipeline", "threads", "output"});
    SimulateConfig c;
    if (!member(j, "dgp")) fail(path + ".dgp", "required");
    c.dgp.dgp = get_small_int(j, "dgp", path, 1);
    c.dgp.n = static_cast<Index>(get_int(j, "n", path, 1000));
    c.dgp.theta0 = get_double(j, "theta0", path, 0.5);
    c.dgp.p = static_cast<Index>(get_int(j, "p", path, 0));
    try {
        c.dgp.validate();
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
    c.reps = get_small_int(j, "reps", path, 100);
    if (c.reps < 1) fail(path + ".reps", "must be >= 1");
    c.seed = get_u64(j, "seed", path, 0);
    c.threads = get_small_int(j, "threads", path, 1);
    if (c.threads < 1) fail(path + ".threads", "must be >= 1");
    if (const Json* e = member(j, "estimators")) {
        check_keys(*e, path + ".estimators", {"oracle", "ols", "ddml"});
        c.oracle = get_bool(*e, "oracle", path + ".estimators", true);
        c.ols = get_bool(*e, "ols", path + ".estimators", true);
        c.ddml = get_bool(*e, "ddml", path + ".estimators", true);
    }
    if (c.ddml) {
        const Json* p = member(j, "pipeline");
        if (!p) fail(path + ".pipeline", "required when estimators.ddml is true");
        const std::string pp = path + ".pipeline";
        check_keys(*p, pp, kPipelineKeys);
        for (const char* k : {"fold_file", "seed", "threads"})
            if (member(*p, k)) fail(pp + "." + k, "not allowed in simulate (set per replication)");
        c.pipeline = parse_pipeline(*p, pp, false, 0);
    }
    c.output = parse_output(j, path);
    return c;
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("data file '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '"')) cell.erase(cell.begin());
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '"')) cell.pop_back();
        out.push_back(cell);
    }
    return out;
}

Eigen::MatrixXi read_fold_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open fold file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("fold file '" + path.string() + "' is empty");
    const auto cols = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
    std::vector<int> values;
    Index rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Index c = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const int v = std::stoi(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                values.push_back(v);
            } catch (const std::exception&) {
                throw DataError("fold file row " + std::to_string(rows + 2) + ": '" + cell + "' is not an integer");
            }
            ++c;
        }
        if (c != cols) throw DataError("fold file row " + std::to_string(rows + 2) + " has the wrong number of cells");
        ++rows;
    }
    Eigen::MatrixXi m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    return m;
}

}  // namespace ddml
