#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddml/data.hpp"
#include "ddml/folds.hpp"
#include "ddml/learners.hpp"
#include "ddml/stacking.hpp"

namespace ddml {

/// One conditional expectation to estimate; `column` selects the treatment
/// or instrument for D|X and Z|X when there are several.
struct CefSlot {
    CefKind kind = CefKind::YgivenX;
    int column = 0;

    /// "Y|X", or "D|X[price]" when the role has several columns.
    std::string label(const Dataset& data) const;
};

/// Slots a model needs, in reporting order. For FIV, D|X (the LIE projection)
/// follows D|X,Z.
std::vector<CefSlot> model_slots(const Dataset& data, ModelKind model);

/// Regression target, features and training arm of a slot. `arm` is empty
/// for unsplit kinds, else arm[i] != 0 marks the rows the learner may see.
struct CefProblem {
    Vector target;
    Matrix features;
    std::vector<char> arm;
    std::string arm_label;  // e.g. "D=1"
};

CefProblem make_problem(const Dataset& data, const CefSlot& slot);

/// Cross-fitted predictions of one (slot, learner, repetition).
struct LearnerFit {
    std::string learner;
    Vector oos;                           // length n, out-of-sample for every row
    Vector fold_mspe;                     // length K; NaN when a fold has no evaluation rows
    std::vector<Index> fold_count;        // evaluation rows per fold
    double mspe = 0.0;                    // over all evaluation rows
    std::vector<Vector> insample;         // FIV D|X,Z only: per fold, values on I_k^c, NaN on I_k
    std::vector<StackWeights> weights;    // per-fold stacking or short-stack weights
    std::vector<std::string> warnings;
};

/// Evaluation rows are the arm rows for split kinds and all rows otherwise.
/// MSPE compares against `target`, per fold and overall.
void score_fit(LearnerFit& fit, const Vector& target, const std::vector<char>& arm, const FoldAssignment& folds,
               int rep);

/// Per-task seed: hash of (seed, rep, fold, slot, learner index).
std::uint64_t task_seed(std::uint64_t seed, int rep, int fold, const CefSlot& slot, std::size_t learner);

/// Trains on I_k^c (restricted to the arm for split kinds) and predicts every
/// row of I_k, for k = 1..K.
LearnerFit crossfit_cef(const Dataset& data, const CefSlot& slot, const Learner& learner, std::size_t learner_index,
                        const FoldAssignment& folds, int rep, std::uint64_t seed);

struct FivFit {
    LearnerFit p;  // D|X,Z with in-sample predictions
    LearnerFit m;  // D|X trained on the in-sample D|X,Z predictions
};

/// LIE-compliant flexible IV first stage: per fold, D on (X, Z) over I_k^c
/// gives out-of-sample p on I_k and in-sample p on I_k^c; then the in-sample
/// p is regressed on X over I_k^c and predicted on I_k.
FivFit crossfit_fiv(const Dataset& data, const Learner& learner, std::size_t learner_index,
                    const FoldAssignment& folds, int rep, std::uint64_t seed);

/// All cross-fitted nuisance predictions for one model.
struct CrossFitResult {
    ModelKind model = ModelKind::Partial;
    std::vector<CefSlot> slots;
    std::vector<std::string> slot_labels;
    std::vector<std::vector<std::string>> learners;     // base learner names per slot
    std::vector<std::vector<std::vector<LearnerFit>>> fits;  // [slot][rep][learner]
    std::vector<std::vector<LearnerFit>> stacked;       // [slot][rep]; empty without per-fold stacking
    std::vector<std::vector<LearnerFit>> shortstack;    // [slot][rep]; empty without short-stacking
    std::vector<Vector> fiv_pstar_oos;                  // [rep]; FIV short-stack stage-2 predictions
    int k = 0;
    int reps = 0;

    Index slot_index(CefKind kind, int column = 0) const;
};

struct CrossFitOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    bool shortstack = false;
    StackingMode stacking = StackingMode::None;
    int stack_folds = 5;
};

/// Learner sets per slot must align with model_slots; for FIV the D|X,Z and
/// D|X sets must be identical (the same learner drives both steps).
CrossFitResult crossfit_all(const Dataset& data, ModelKind model,
                            const std::vector<std::vector<std::shared_ptr<const Learner>>>& learners,
                            const FoldAssignment& folds, const CrossFitOptions& options);

/// Short-stacks each slot's base learner predictions in place. Split kinds use
/// only arm rows as CLS rows. FIV follows the staged procedure: Y on the l
/// columns; per-fold D on in-sample p columns over I_k^c (giving the
/// out-of-sample p* used as the m target); full-sample D on the p columns
/// (the p* used in estimation); then stage-2 p* on the m columns.
void shortstack_all(const Dataset& data, CrossFitResult& result, const FoldAssignment& folds);

struct MspeRow {
    std::string cef;
    std::string learner;
    int rep = 0;
    double mspe = 0.0;
    Vector fold_mspe;
};

/// Rows (CEF, learner, rep): base learners, then the stacked and short-stacked
/// fits when present.
std::vector<MspeRow> mspe_report(const CrossFitResult& result);

/// One column per (CEF, learner, rep) plus the fold-id columns.
void write_cef_csv(const std::filesystem::path& path, const CrossFitResult& result, const FoldAssignment& folds);

}  // namespace ddml
