#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ddml/crossfit.hpp"
#include "ddml/data.hpp"
#include "ddml/estimators.hpp"
#include "ddml/folds.hpp"
#include "ddml/learners.hpp"
#include "ddml/stacking.hpp"

namespace ddml {

enum class Effect { ATE, ATET };

/// Which learner combinations are estimated besides `opt`.
enum class Combos {
    None,      // only opt (plus stack / ss when requested)
    Diagonal,  // the same learner index for every CEF
    All,       // every combination
};

struct PipelineSpec {
    ModelKind model = ModelKind::Partial;
    std::vector<std::shared_ptr<const Learner>> learners;  // default set for every CEF
    std::map<CefKind, std::vector<std::shared_ptr<const Learner>>> cef_learners;  // overrides
    int k = 5;
    int reps = 1;
    std::uint64_t seed = 0;
    bool cluster_folds = true;                 // fold by cluster when the data has cluster ids
    std::optional<Eigen::MatrixXi> fold_ids;   // imported folds override k, reps and seed
    bool shortstack = false;
    StackingMode stacking = StackingMode::None;
    int stack_folds = 5;
    TrimPolicy trim;
    VceKind vce = VceKind::HC1;
    AggregateMode aggregate = AggregateMode::Median;
    Combos combos = Combos::None;
    bool constant = true;
    Effect effect = Effect::ATE;
    int threads = 1;

    /// Throws ConfigError on inconsistent settings. `data` supplies the
    /// slot layout the learner sets must cover.
    void validate(const Dataset& data) const;

    /// Learner set for each slot of model_slots(data, model).
    std::vector<std::vector<std::shared_ptr<const Learner>>> slot_learners(const Dataset& data) const;
};

struct PipelineResult {
    FoldAssignment folds;
    CrossFitResult crossfit;
    std::vector<Estimate> estimates;   // per repetition
    std::vector<Estimate> aggregates;  // per label, both "md" and "mn"
    std::vector<std::vector<int>> opt_choice;  // [rep][slot] learner index chosen by min MSPE
    std::vector<std::string> warnings;

    /// Per-rep estimate with this label, or nullptr.
    const Estimate* find(const std::string& label, int rep) const;
    /// Aggregate ("md" or "mn") with this label, or nullptr.
    const Estimate* aggregate(const std::string& label, const std::string& tag) const;
};

/// Folds, cross-fitting, optional stacking, estimation for the requested
/// combinations plus opt / stack / ss, and aggregation over repetitions.
PipelineResult run_pipeline(const Dataset& data, const PipelineSpec& spec);

/// Second stage from one set of cross-fitted CEF predictions, aligned with
/// model_slots(data, spec.model).
Estimate estimate_model(const Dataset& data, const PipelineSpec& spec, const std::vector<const Vector*>& cefs);

/// Learner label of a combination: the shared name when every slot uses the
/// same learner, else the names joined with '/'.
std::string combination_label(const std::vector<std::string>& learners);

}  // namespace ddml
