#include "ddml/pipeline.hpp"

#include <cmath>
#include <limits>

#include "ddml/error.hpp"
#include "ddml/random.hpp"

namespace ddml {

namespace {

// Slots sharing one learner choice: FIV's D|X,Z and D|X move together.
std::vector<std::vector<std::size_t>> choice_groups(const CrossFitResult& cf) {
    std::vector<std::vector<std::size_t>> groups;
    const Index fiv_m = cf.model == ModelKind::FIV ? cf.slot_index(CefKind::DgivenX) : -1;
    const Index fiv_p = cf.model == ModelKind::FIV ? cf.slot_index(CefKind::DgivenXZ) : -1;
    for (std::size_t s = 0; s < cf.slots.size(); ++s) {
        if (static_cast<Index>(s) == fiv_m) continue;
        groups.push_back({s});
        if (static_cast<Index>(s) == fiv_p) groups.back().push_back(static_cast<std::size_t>(fiv_m));
    }
    return groups;
}

std::vector<std::vector<int>> enumerate_combos(const std::vector<std::vector<std::size_t>>& groups,
                                               const CrossFitResult& cf, Combos mode) {
    std::vector<std::vector<int>> combos;
    std::vector<int> sizes;
    for (const auto& g : groups) sizes.push_back(static_cast<int>(cf.learners[g.front()].size()));
    if (mode == Combos::Diagonal) {
        for (int s : sizes)
            if (s != sizes.front()) throw ConfigError("per-learner combinations need equal learner counts per CEF");
        for (int j = 0; j < sizes.front(); ++j) combos.emplace_back(groups.size(), j);
    } else if (mode == Combos::All) {
        std::vector<int> pick(groups.size(), 0);
        for (;;) {
            combos.push_back(pick);
            int g = static_cast<int>(groups.size()) - 1;
            while (g >= 0 && ++pick[static_cast<std::size_t>(g)] == sizes[static_cast<std::size_t>(g)]) {
                pick[static_cast<std::size_t>(g)] = 0;
                --g;
            }
            if (g < 0) break;
        }
    }
    return combos;
}

std::vector<int> expand_choice(const std::vector<std::vector<std::size_t>>& groups, const std::vector<int>& pick,
                               std::size_t n_slots) {
    std::vector<int> per_slot(n_slots, 0);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t s : groups[g]) per_slot[s] = pick[g];
    return per_slot;
}

Vce make_vce(const Dataset& data, VceKind kind) {
    Vce vce{kind, std::nullopt};
    if (kind == VceKind::Cluster) {
        if (!data.cluster) throw ConfigError("vce cluster requires a cluster role in the data");
        vce.cluster = std::span<const std::int64_t>(*data.cluster);
    }
    return vce;
}

Matrix stack_columns(const std::vector<const Vector*>& cols, Index n) {
    Matrix m(n, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = *cols[j];
    return m;
}

}  // namespace

std::string combination_label(const std::vector<std::string>& learners) {
    if (learners.empty()) return "";
    bool same = true;
    for (const auto& l : learners) same = same && l == learners.front();
    if (same) return learners.front();
    std::string out;
    for (std::size_t i = 0; i < learners.size(); ++i) out += (i ? "/" : "") + learners[i];
    return out;
}

void PipelineSpec::validate(const Dataset& data) const {
    if (!fold_ids) {
        if (k < 2) throw ConfigError("k must be >= 2");
        if (reps < 1) throw ConfigError("reps must be >= 1");
    }
    if (stack_folds < 2) throw ConfigError("stack_folds must be >= 2");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    trim.validate();
    if (vce == VceKind::Cluster && !data.cluster) throw ConfigError("vce cluster requires a cluster role in the data");
    if (vce == VceKind::HC3 && (model == ModelKind::Interactive || model == ModelKind::InteractiveIV))
        throw ConfigError("vce hc3 is only available for the partial, iv and fiv models");
    if (effect == Effect::ATET && model != ModelKind::Interactive)
        throw ConfigError("effect atet applies to the interactive model only");
    const auto required = required_cefs(model);
    for (const auto& [kind, set] : cef_learners) {
        if (std::find(required.begin(), required.end(), kind) == required.end())
            throw ConfigError("model " + std::string(to_string(model)) + " has no CEF " + std::string(to_string(kind)));
        if (set.empty()) throw ConfigError("empty learner list for CEF " + std::string(to_string(kind)));
    }
    for (CefKind kind : required)
        if (!cef_learners.count(kind) && learners.empty())
            throw ConfigError("no learners given for CEF " + std::string(to_string(kind)));
    if (model == ModelKind::FIV) {
        auto names = [&](CefKind kind) {
            std::vector<std::string> out;
            const auto it = cef_learners.find(kind);
            for (const auto& l : it != cef_learners.end() ? it->second : learners) out.push_back(l->name());
            return out;
        };
        if (names(CefKind::DgivenXZ) != names(CefKind::DgivenX))
            throw ConfigError("fiv: D|X,Z and D|X must use the same learners (paired specification)");
    }
}

std::vector<std::vector<std::shared_ptr<const Learner>>> PipelineSpec::slot_learners(const Dataset& data) const {
    std::vector<std::vector<std::shared_ptr<const Learner>>> out;
    for (const auto& slot : model_slots(data, model)) {
        const auto it = cef_learners.find(slot.kind);
        out.push_back(it != cef_learners.end() ? it->second : learners);
    }
    return out;
}

const Estimate* PipelineResult::find(const std::string& label, int rep) const {
    for (const auto& e : estimates)
        if (e.label == label && e.rep == rep) return &e;
    return nullptr;
}

const Estimate* PipelineResult::aggregate(const std::string& label, const std::string& tag) const {
    for (const auto& e : aggregates)
        if (e.label == label && e.tag == tag) return &e;
    return nullptr;
}

Estimate estimate_model(const Dataset& data, const PipelineSpec& spec, const std::vector<const Vector*>& cefs) {
    const auto slots = model_slots(data, spec.model);
    if (cefs.size() != slots.size()) throw DataError("CEF prediction count does not match the model");
    const Vce vce = make_vce(data, spec.vce);
    auto pick = [&](CefKind kind, int column = 0) -> const Vector& {
        for (std::size_t s = 0; s < slots.size(); ++s)
            if (slots[s].kind == kind && slots[s].column == column) return *cefs[s];
        throw DataError("missing CEF " + std::string(to_string(kind)));
    };
    auto pick_all = [&](CefKind kind) {
        std::vector<const Vector*> cols;
        for (std::size_t s = 0; s < slots.size(); ++s)
            if (slots[s].kind == kind) cols.push_back(cefs[s]);
        return stack_columns(cols, data.n());
    };
    std::vector<std::string> d_names = data.names.d;
    Estimate est;
    switch (spec.model) {
        case ModelKind::Partial:
            est = estimate_partial(data.y, data.d, pick(CefKind::YgivenX), pick_all(CefKind::DgivenX), vce,
                                   spec.constant);
            break;
        case ModelKind::Interactive:
            if (spec.effect == Effect::ATE)
                est = estimate_ate(data.y, data.d.col(0), pick(CefKind::YgivenXD0), pick(CefKind::YgivenXD1),
                                   pick(CefKind::DgivenX), spec.trim, vce);
            else
                est = estimate_atet(data.y, data.d.col(0), pick(CefKind::YgivenXD0), pick(CefKind::DgivenX),
                                    spec.trim, vce);
            d_names.clear();
            break;
        case ModelKind::IV:
            est = estimate_pliv(data.y, data.d, data.z, pick(CefKind::YgivenX), pick_all(CefKind::DgivenX),
                                pick_all(CefKind::ZgivenX), vce, spec.constant);
            break;
        case ModelKind::FIV:
            est = estimate_fiv(data.y, data.d.col(0), pick(CefKind::YgivenX), pick(CefKind::DgivenXZ),
                               pick(CefKind::DgivenX), vce, spec.constant);
            break;
        case ModelKind::InteractiveIV:
            est = estimate_late(data.y, data.d.col(0), data.z.col(0), pick(CefKind::YgivenXZ0),
                                pick(CefKind::YgivenXZ1), pick(CefKind::DgivenXZ0), pick(CefKind::DgivenXZ1),
                                pick(CefKind::ZgivenX), spec.trim, vce);
            d_names.clear();
            break;
    }
    if (d_names.size() == static_cast<std::size_t>(est.theta.size())) est.names = d_names;
    return est;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineSpec& spec) {
    validate(data);
    validate_for(data, spec.model);
    spec.validate(data);

    PipelineResult result;
    try {
        if (spec.fold_ids) {
            if (spec.fold_ids->rows() != data.n())
                throw DataError("imported folds have " + std::to_string(spec.fold_ids->rows()) + " rows, data has " +
                                std::to_string(data.n()));
            result.folds = import_folds(*spec.fold_ids);
        } else {
            std::optional<std::span<const std::int64_t>> cluster;
            if (spec.cluster_folds && data.cluster) cluster = std::span<const std::int64_t>(*data.cluster);
            result.folds = assign_folds(data.n(), spec.k, spec.reps, spec.seed, cluster);
        }
    } catch (const Error& e) {
        rethrow_with_context(e, "step folds");
    }

    CrossFitOptions options;
    options.seed = derive_seed({spec.seed, 0xC0FFEEULL});
    options.threads = spec.threads;
    options.shortstack = spec.shortstack;
    options.stacking = spec.stacking;
    options.stack_folds = spec.stack_folds;
    try {
        result.crossfit = crossfit_all(data, spec.model, spec.slot_learners(data), result.folds, options);
    } catch (const Error& e) {
        rethrow_with_context(e, "step crossfit");
    }
    const auto& cf = result.crossfit;
    const std::size_t n_slots = cf.slots.size();
    const auto groups = choice_groups(cf);
    const auto combos = enumerate_combos(groups, cf, spec.combos);

    auto run = [&](const std::string& label, int rep, const std::vector<const LearnerFit*>& fits) {
        std::vector<const Vector*> cefs;
        std::vector<std::string> names;
        for (const auto* f : fits) {
            cefs.push_back(&f->oos);
            names.push_back(f->learner);
        }
        Estimate est;
        try {
            est = estimate_model(data, spec, cefs);
        } catch (const Error& e) {
            rethrow_with_context(e, "step estimate (spec " + label + ", rep " + std::to_string(rep + 1) + ")");
        }
        est.label = label;
        est.learners = std::move(names);
        est.rep = rep;
        result.estimates.push_back(std::move(est));
    };

    for (int r = 0; r < cf.reps; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        auto fits_for = [&](const std::vector<int>& per_slot) {
            std::vector<const LearnerFit*> fits;
            for (std::size_t s = 0; s < n_slots; ++s)
                fits.push_back(&cf.fits[s][ru][static_cast<std::size_t>(per_slot[s])]);
            return fits;
        };
        for (const auto& pick : combos) {
            const auto fits = fits_for(expand_choice(groups, pick, n_slots));
            std::vector<std::string> names;
            for (const auto* f : fits) names.push_back(f->learner);
            run(combination_label(names), r, fits);
        }

        std::vector<int> best(groups.size(), 0);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const auto& row = cf.fits[groups[g].front()][ru];
            double best_mspe = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < row.size(); ++j) {
                const double m = std::isnan(row[j].mspe) ? std::numeric_limits<double>::infinity() : row[j].mspe;
                if (m < best_mspe) {
                    best_mspe = m;
                    best[g] = static_cast<int>(j);
                }
            }
        }
        const auto opt = expand_choice(groups, best, n_slots);
        result.opt_choice.push_back(opt);
        run("opt", r, fits_for(opt));

        if (!cf.stacked.empty()) {
            std::vector<const LearnerFit*> fits;
            for (std::size_t s = 0; s < n_slots; ++s) fits.push_back(&cf.stacked[s][ru]);
            run("stack", r, fits);
        }
        if (!cf.shortstack.empty()) {
            std::vector<const LearnerFit*> fits;
            for (std::size_t s = 0; s < n_slots; ++s) fits.push_back(&cf.shortstack[s][ru]);
            run("ss", r, fits);
        }
    }

    std::vector<std::string> labels;
    for (const auto& e : result.estimates)
        if (std::find(labels.begin(), labels.end(), e.label) == labels.end()) labels.push_back(e.label);
    for (const auto& label : labels) {
        std::vector<Estimate> reps;
        for (const auto& e : result.estimates)
            if (e.label == label) reps.push_back(e);
        for (auto mode : {AggregateMode::Median, AggregateMode::Mean}) {
            Estimate agg = aggregate_reps(reps, mode);
            if (label == "opt") agg.learners.clear();
            result.aggregates.push_back(std::move(agg));
        }
    }

    for (std::size_t s = 0; s < n_slots; ++s)
        for (const auto& rep : cf.fits[s])
            for (const auto& fit : rep)
                for (const auto& w : fit.warnings)
                    result.warnings.push_back(cf.slot_labels[s] + " / " + fit.learner + ": " + w);
    for (const auto& e : result.estimates)
        for (const auto& w : e.warnings)
            result.warnings.push_back(e.label + " rep " + std::to_string(e.rep + 1) + ": " + w);
    return result;
}

}  // namespace ddml
