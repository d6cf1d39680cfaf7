#include "ddml/crossfit.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "ddml/error.hpp"
#include "ddml/parallel.hpp"
#include "ddml/random.hpp"

namespace ddml {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool multi_column(const Dataset& data, CefKind kind) {
    if (kind == CefKind::DgivenX) return data.d.cols() > 1;
    if (kind == CefKind::ZgivenX) return data.z.cols() > 1;
    return false;
}

std::string role_column_name(const Dataset& data, CefKind kind, int column) {
    const auto& names = kind == CefKind::ZgivenX ? data.names.z : data.names.d;
    if (static_cast<std::size_t>(column) < names.size()) return names[static_cast<std::size_t>(column)];
    return std::to_string(column + 1);
}

std::vector<Index> restrict_to_arm(const std::vector<Index>& rows, const std::vector<char>& arm) {
    if (arm.empty()) return rows;
    std::vector<Index> out;
    out.reserve(rows.size());
    for (Index i : rows)
        if (arm[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

const StackedModel* as_stack(const FittedModel& model) { return dynamic_cast<const StackedModel*>(&model); }

// Output of one (slot, learner, rep, fold) task.
struct FoldOutput {
    Vector pred;      // on I_k
    Vector insample;  // FIV: p on I_k^c
    Vector m_pred;    // FIV: m on I_k
    std::optional<StackWeights> weights;
    std::optional<StackWeights> m_weights;
    std::vector<std::string> warnings;
};

void collect_stack(const FittedModel& model, int fold, std::optional<StackWeights>& out,
                   std::vector<std::string>& warnings) {
    if (const auto* stack = as_stack(model)) {
        StackWeights w = stack->weights();
        w.scope = StackScope::PerFold;
        w.fold = fold;
        for (const auto& msg : w.warnings) warnings.push_back("fold " + std::to_string(fold) + ": " + msg);
        out = std::move(w);
    }
}

FoldOutput run_fold(const Dataset& data, const CefProblem& problem, const std::string& what, const Learner& learner,
                    bool fiv, const FoldAssignment& folds, int rep, int fold, std::uint64_t seed,
                    std::uint64_t m_seed) {
    const auto test = folds.members(fold, rep);
    const auto train = restrict_to_arm(folds.complement(fold, rep), problem.arm);
    if (train.size() < 2) {
        std::string msg = "fold " + std::to_string(fold) + " of repetition " + std::to_string(rep + 1) + ": " +
                          what + " has fewer than 2 training observations";
        if (!problem.arm.empty()) msg += " with " + problem.arm_label;
        throw DataError(msg + "; use fewer folds");
    }
    FoldOutput out;
    const Matrix x_train = problem.features(train, Eigen::all);
    const Vector y_train = problem.target(train);
    auto model = learner.fit(x_train, y_train, seed);
    out.pred = model->predict(problem.features(test, Eigen::all));
    collect_stack(*model, fold, out.weights, out.warnings);
    if (fiv) {
        out.insample = model->predict(x_train);
        const Matrix xm_train = data.x(train, Eigen::all);
        auto m_model = learner.fit(xm_train, out.insample, m_seed);
        out.m_pred = m_model->predict(data.x(test, Eigen::all));
        collect_stack(*m_model, fold, out.m_weights, out.warnings);
    }
    return out;
}

LearnerFit empty_fit(const std::string& name, Index n, int k, bool fiv) {
    LearnerFit fit;
    fit.learner = name;
    fit.oos = Vector::Constant(n, kNaN);
    if (fiv) fit.insample.assign(static_cast<std::size_t>(k), Vector::Constant(n, kNaN));
    return fit;
}

void place(LearnerFit& fit, const FoldOutput& out, const FoldAssignment& folds, int rep, int fold, bool fiv,
           bool is_m) {
    const auto test = folds.members(fold, rep);
    fit.oos(test) = is_m ? out.m_pred : out.pred;
    if (fiv && !is_m) {
        const auto train = folds.complement(fold, rep);
        fit.insample[static_cast<std::size_t>(fold - 1)](train) = out.insample;
    }
    const auto& w = is_m ? out.m_weights : out.weights;
    if (w) fit.weights.push_back(*w);
}

std::string what_of(const Dataset& data, const CefSlot& slot, const Learner& learner) {
    return "CEF " + slot.label(data) + " (learner " + learner.name() + ")";
}

}  // namespace

std::string CefSlot::label(const Dataset& data) const {
    std::string base(to_string(kind));
    if (multi_column(data, kind)) base += "[" + role_column_name(data, kind, column) + "]";
    return base;
}

std::vector<CefSlot> model_slots(const Dataset& data, ModelKind model) {
    std::vector<CefSlot> slots;
    for (CefKind kind : required_cefs(model)) {
        int columns = 1;
        if (kind == CefKind::DgivenX && model != ModelKind::FIV) columns = static_cast<int>(data.d.cols());
        if (kind == CefKind::ZgivenX && model == ModelKind::IV) columns = static_cast<int>(data.z.cols());
        for (int c = 0; c < columns; ++c) slots.push_back({kind, c});
    }
    return slots;
}

CefProblem make_problem(const Dataset& data, const CefSlot& slot) {
    CefProblem p;
    auto arm_of = [&](const Eigen::Ref<const Vector>& col, double value, std::string label) {
        p.arm.resize(static_cast<std::size_t>(col.size()));
        for (Index i = 0; i < col.size(); ++i) p.arm[static_cast<std::size_t>(i)] = col[i] == value ? 1 : 0;
        p.arm_label = std::move(label);
    };
    p.features = data.x;
    switch (slot.kind) {
        case CefKind::YgivenX: p.target = data.y; break;
        case CefKind::YgivenXD0: p.target = data.y; arm_of(data.d.col(0), 0.0, "D=0"); break;
        case CefKind::YgivenXD1: p.target = data.y; arm_of(data.d.col(0), 1.0, "D=1"); break;
        case CefKind::YgivenXZ0: p.target = data.y; arm_of(data.z.col(0), 0.0, "Z=0"); break;
        case CefKind::YgivenXZ1: p.target = data.y; arm_of(data.z.col(0), 1.0, "Z=1"); break;
        case CefKind::DgivenX: p.target = data.d.col(slot.column); break;
        case CefKind::DgivenXZ:
            p.target = data.d.col(0);
            p.features.resize(data.n(), data.x.cols() + data.z.cols());
            p.features << data.x, data.z;
            break;
        case CefKind::DgivenXZ0: p.target = data.d.col(0); arm_of(data.z.col(0), 0.0, "Z=0"); break;
        case CefKind::DgivenXZ1: p.target = data.d.col(0); arm_of(data.z.col(0), 1.0, "Z=1"); break;
        case CefKind::ZgivenX: p.target = data.z.col(slot.column); break;
    }
    return p;
}

void score_fit(LearnerFit& fit, const Vector& target, const std::vector<char>& arm, const FoldAssignment& folds,
               int rep) {
    const int k = folds.k;
    Vector sse = Vector::Zero(k);
    fit.fold_count.assign(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < target.size(); ++i) {
        if (!arm.empty() && !arm[static_cast<std::size_t>(i)]) continue;
        const int f = folds.fold_of(i, rep) - 1;
        const double e = target[i] - fit.oos[i];
        sse[f] += e * e;
        ++fit.fold_count[static_cast<std::size_t>(f)];
    }
    fit.fold_mspe.resize(k);
    Index total = 0;
    for (int f = 0; f < k; ++f) {
        const Index c = fit.fold_count[static_cast<std::size_t>(f)];
        fit.fold_mspe[f] = c > 0 ? sse[f] / static_cast<double>(c) : kNaN;
        total += c;
    }
    fit.mspe = total > 0 ? sse.sum() / static_cast<double>(total) : kNaN;
}

std::uint64_t task_seed(std::uint64_t seed, int rep, int fold, const CefSlot& slot, std::size_t learner) {
    return derive_seed({seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(fold),
                        static_cast<std::uint64_t>(slot.kind) * 4096 + static_cast<std::uint64_t>(slot.column),
                        static_cast<std::uint64_t>(learner)});
}

LearnerFit crossfit_cef(const Dataset& data, const CefSlot& slot, const Learner& learner, std::size_t learner_index,
                        const FoldAssignment& folds, int rep, std::uint64_t seed) {
    if (folds.n() != data.n()) throw DataError("fold assignment length does not match the data");
    const CefProblem problem = make_problem(data, slot);
    const std::string what = what_of(data, slot, learner);
    LearnerFit fit = empty_fit(learner.name(), data.n(), folds.k, false);
    for (int k = 1; k <= folds.k; ++k) {
        const auto out =
            run_fold(data, problem, what, learner, false, folds, rep, k, task_seed(seed, rep, k, slot, learner_index), 0);
        place(fit, out, folds, rep, k, false, false);
        fit.warnings.insert(fit.warnings.end(), out.warnings.begin(), out.warnings.end());
    }
    score_fit(fit, problem.target, problem.arm, folds, rep);
    return fit;
}

FivFit crossfit_fiv(const Dataset& data, const Learner& learner, std::size_t learner_index,
                    const FoldAssignment& folds, int rep, std::uint64_t seed) {
    if (folds.n() != data.n()) throw DataError("fold assignment length does not match the data");
    if (data.z.cols() < 1) throw DataError("role Z required for model fiv");
    const CefSlot p_slot{CefKind::DgivenXZ, 0}, m_slot{CefKind::DgivenX, 0};
    const CefProblem problem = make_problem(data, p_slot);
    const std::string what = what_of(data, p_slot, learner);
    FivFit fit{empty_fit(learner.name(), data.n(), folds.k, true), empty_fit(learner.name(), data.n(), folds.k, false)};
    for (int k = 1; k <= folds.k; ++k) {
        const auto out = run_fold(data, problem, what, learner, true, folds, rep, k,
                                  task_seed(seed, rep, k, p_slot, learner_index),
                                  task_seed(seed, rep, k, m_slot, learner_index));
        place(fit.p, out, folds, rep, k, true, false);
        place(fit.m, out, folds, rep, k, true, true);
        fit.p.warnings.insert(fit.p.warnings.end(), out.warnings.begin(), out.warnings.end());
    }
    score_fit(fit.p, problem.target, {}, folds, rep);
    score_fit(fit.m, problem.target, {}, folds, rep);
    return fit;
}

Index CrossFitResult::slot_index(CefKind kind, int column) const {
    for (std::size_t s = 0; s < slots.size(); ++s)
        if (slots[s].kind == kind && slots[s].column == column) return static_cast<Index>(s);
    return -1;
}

CrossFitResult crossfit_all(const Dataset& data, ModelKind model,
                            const std::vector<std::vector<std::shared_ptr<const Learner>>>& learners,
                            const FoldAssignment& folds, const CrossFitOptions& options) {
    validate_for(data, model);
    if (folds.n() != data.n()) throw DataError("fold assignment length does not match the data");
    CrossFitResult result;
    result.model = model;
    result.slots = model_slots(data, model);
    result.k = folds.k;
    result.reps = folds.reps;
    const std::size_t n_slots = result.slots.size();
    if (learners.size() != n_slots)
        throw ConfigError("expected learner sets for " + std::to_string(n_slots) + " CEFs, got " +
                          std::to_string(learners.size()));
    const bool fiv = model == ModelKind::FIV;
    const Index fiv_p = fiv ? result.slot_index(CefKind::DgivenXZ) : -1;
    const Index fiv_m = fiv ? result.slot_index(CefKind::DgivenX) : -1;

    // Stacked learners ride along as index J of each slot.
    std::vector<std::vector<std::shared_ptr<const Learner>>> sets = learners;
    std::vector<CefProblem> problems;
    for (std::size_t s = 0; s < n_slots; ++s) {
        result.slot_labels.push_back(result.slots[s].label(data));
        if (learners[s].empty()) throw ConfigError("no learners for CEF " + result.slot_labels.back());
        std::vector<std::string> names;
        for (const auto& l : learners[s]) names.push_back(l->name());
        result.learners.push_back(std::move(names));
        if (options.stacking != StackingMode::None)
            sets[s].push_back(std::make_shared<const StackedLearner>("stack", learners[s], options.stacking,
                                                                      options.stack_folds));
        problems.push_back(make_problem(data, result.slots[s]));
    }
    if (fiv && result.learners[static_cast<std::size_t>(fiv_p)] != result.learners[static_cast<std::size_t>(fiv_m)])
        throw ConfigError("fiv: D|X,Z and D|X must use the same learners (paired specification)");

    struct Task {
        std::size_t slot;
        std::size_t learner;
        int rep;
        int fold;
    };
    std::vector<Task> tasks;
    for (int r = 0; r < folds.reps; ++r)
        for (std::size_t s = 0; s < n_slots; ++s) {
            if (static_cast<Index>(s) == fiv_m) continue;
            for (std::size_t j = 0; j < sets[s].size(); ++j)
                for (int k = 1; k <= folds.k; ++k) tasks.push_back({s, j, r, k});
        }

    std::vector<FoldOutput> outputs(tasks.size());
    parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
        const auto& task = tasks[t];
        const auto& slot = result.slots[task.slot];
        const auto& learner = *sets[task.slot][task.learner];
        const bool pair = static_cast<Index>(task.slot) == fiv_p;
        const std::uint64_t m_seed =
            pair ? task_seed(options.seed, task.rep, task.fold, result.slots[static_cast<std::size_t>(fiv_m)],
                             task.learner)
                 : 0;
        outputs[t] = run_fold(data, problems[task.slot], what_of(data, slot, learner), learner, pair, folds, task.rep,
                              task.fold, task_seed(options.seed, task.rep, task.fold, slot, task.learner), m_seed);
    });

    const bool stacked = options.stacking != StackingMode::None;
    result.fits.assign(n_slots, {});
    if (stacked) result.stacked.assign(n_slots, {});
    for (std::size_t s = 0; s < n_slots; ++s) {
        result.fits[s].resize(static_cast<std::size_t>(folds.reps));
        if (stacked) result.stacked[s].resize(static_cast<std::size_t>(folds.reps));
        for (int r = 0; r < folds.reps; ++r) {
            auto& row = result.fits[s][static_cast<std::size_t>(r)];
            for (const auto& l : sets[s])
                row.push_back(empty_fit(l->name(), data.n(), folds.k, static_cast<Index>(s) == fiv_p));
        }
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        const auto& out = outputs[t];
        const bool pair = static_cast<Index>(task.slot) == fiv_p;
        auto& fit = result.fits[task.slot][static_cast<std::size_t>(task.rep)][task.learner];
        place(fit, out, folds, task.rep, task.fold, pair, false);
        fit.warnings.insert(fit.warnings.end(), out.warnings.begin(), out.warnings.end());
        if (pair) {
            auto& mfit = result.fits[static_cast<std::size_t>(fiv_m)][static_cast<std::size_t>(task.rep)][task.learner];
            place(mfit, out, folds, task.rep, task.fold, true, true);
        }
    }
    for (std::size_t s = 0; s < n_slots; ++s)
        for (int r = 0; r < folds.reps; ++r) {
            auto& row = result.fits[s][static_cast<std::size_t>(r)];
            for (auto& fit : row) score_fit(fit, problems[s].target, problems[s].arm, folds, r);
            if (stacked) {
                result.stacked[s][static_cast<std::size_t>(r)] = std::move(row.back());
                row.pop_back();
            }
        }

    if (options.shortstack) shortstack_all(data, result, folds);
    return result;
}

namespace {

Matrix prediction_matrix(const std::vector<LearnerFit>& fits) {
    Matrix p(fits.front().oos.size(), static_cast<Index>(fits.size()));
    for (std::size_t j = 0; j < fits.size(); ++j) p.col(static_cast<Index>(j)) = fits[j].oos;
    return p;
}

std::vector<Index> arm_rows(const std::vector<char>& arm, Index n) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
        if (arm.empty() || arm[static_cast<std::size_t>(i)]) rows.push_back(i);
    return rows;
}

LearnerFit stacked_fit(const Matrix& p, StackWeights w) {
    LearnerFit fit;
    fit.learner = "ss";
    fit.oos = p * w.weights;
    fit.warnings = w.warnings;
    fit.weights.push_back(std::move(w));
    return fit;
}

}  // namespace

void shortstack_all(const Dataset& data, CrossFitResult& result, const FoldAssignment& folds) {
    const std::size_t n_slots = result.slots.size();
    const Index n = data.n();
    result.shortstack.assign(n_slots, std::vector<LearnerFit>(static_cast<std::size_t>(result.reps)));
    const bool fiv = result.model == ModelKind::FIV;
    const Index fiv_p = fiv ? result.slot_index(CefKind::DgivenXZ) : -1;
    const Index fiv_m = fiv ? result.slot_index(CefKind::DgivenX) : -1;
    if (fiv) result.fiv_pstar_oos.assign(static_cast<std::size_t>(result.reps), Vector());

    for (int r = 0; r < result.reps; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        for (std::size_t s = 0; s < n_slots; ++s) {
            if (static_cast<Index>(s) == fiv_m) continue;
            const CefProblem problem = make_problem(data, result.slots[s]);
            const auto& fits = result.fits[s][ru];
            const Matrix p = prediction_matrix(fits);
            const auto rows = arm_rows(problem.arm, n);
            StackWeights w = short_stack(p(rows, Eigen::all), problem.target(rows));
            LearnerFit ss = stacked_fit(p, std::move(w));

            if (static_cast<Index>(s) == fiv_p) {
                // Stage 2, per fold: D on the in-sample p columns over I_k^c, applied on I_k.
                Vector pstar_oos = Vector::Constant(n, kNaN);
                for (int k = 1; k <= folds.k; ++k) {
                    const auto train = folds.complement(k, r);
                    const auto test = folds.members(k, r);
                    Matrix tilde(static_cast<Index>(train.size()), p.cols());
                    for (std::size_t j = 0; j < fits.size(); ++j)
                        tilde.col(static_cast<Index>(j)) = fits[j].insample[static_cast<std::size_t>(k - 1)](train);
                    StackWeights wk = cls_weights(tilde, problem.target(train));
                    wk.scope = StackScope::PerFold;
                    wk.fold = k;
                    pstar_oos(test) = p(test, Eigen::all) * wk.weights;
                    ss.weights.push_back(std::move(wk));
                }
                // Stage 3: stage-2 p* on the m columns.
                const auto& mfits = result.fits[static_cast<std::size_t>(fiv_m)][ru];
                const Matrix pm = prediction_matrix(mfits);
                LearnerFit mss = stacked_fit(pm, short_stack(pm, pstar_oos));
                score_fit(mss, problem.target, {}, folds, r);
                result.shortstack[static_cast<std::size_t>(fiv_m)][ru] = std::move(mss);
                result.fiv_pstar_oos[ru] = std::move(pstar_oos);
            }
            score_fit(ss, problem.target, problem.arm, folds, r);
            result.shortstack[s][ru] = std::move(ss);
        }
    }
}

std::vector<MspeRow> mspe_report(const CrossFitResult& result) {
    std::vector<MspeRow> rows;
    auto add = [&](std::size_t s, int r, const LearnerFit& fit) {
        rows.push_back({result.slot_labels[s], fit.learner, r, fit.mspe, fit.fold_mspe});
    };
    for (std::size_t s = 0; s < result.slots.size(); ++s)
        for (int r = 0; r < result.reps; ++r) {
            const auto ru = static_cast<std::size_t>(r);
            for (const auto& fit : result.fits[s][ru]) add(s, r, fit);
            if (!result.stacked.empty()) add(s, r, result.stacked[s][ru]);
            if (!result.shortstack.empty()) add(s, r, result.shortstack[s][ru]);
        }
    return rows;
}

void write_cef_csv(const std::filesystem::path& path, const CrossFitResult& result, const FoldAssignment& folds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    std::vector<std::string> header;
    std::vector<const Vector*> columns;
    for (int r = 0; r < folds.reps; ++r) header.push_back("fold_" + std::to_string(r + 1));
    for (std::size_t s = 0; s < result.slots.size(); ++s)
        for (int r = 0; r < result.reps; ++r) {
            const auto ru = static_cast<std::size_t>(r);
            auto add = [&](const LearnerFit& fit) {
                header.push_back(result.slot_labels[s] + ":" + fit.learner + ":" + std::to_string(r + 1));
                columns.push_back(&fit.oos);
            };
            for (const auto& fit : result.fits[s][ru]) add(fit);
            if (!result.stacked.empty()) add(result.stacked[s][ru]);
            if (!result.shortstack.empty()) add(result.shortstack[s][ru]);
        }
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << '"' << header[c] << '"';
    out << '\n';
    for (Index i = 0; i < folds.n(); ++i) {
        for (int r = 0; r < folds.reps; ++r) out << (r ? "," : "") << folds.fold_of(i, r);
        for (const Vector* col : columns) out << ',' << format_double((*col)[i]);
        out << '\n';
    }
}

}  // namespace ddml
