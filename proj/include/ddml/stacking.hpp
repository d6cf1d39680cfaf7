#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddml/data.hpp"
#include "ddml/learners.hpp"

namespace ddml {

enum class StackScope { PerFold, ShortStack };

/// Simplex weights over J base learners: w >= 0, sum w = 1.
struct StackWeights {
    Vector weights;
    StackScope scope = StackScope::PerFold;
    int fold = 0;            // 1-based for PerFold; 0 otherwise
    double objective = 0.0;  // ||y - P w||^2 at the solution
    bool degenerate = false;
    std::vector<std::string> warnings;
};

/// Exact solution of min ||y - Pw||^2 subject to w >= 0, sum w = 1, by a
/// primal active-set method. All-zero P yields uniform weights and a warning.
StackWeights cls_weights(const Matrix& p, const Vector& y);

/// One-hot weight on the column with the smallest squared error; ties go to
/// the lowest index.
StackWeights single_best_weights(const Matrix& p, const Vector& y);

/// CLS over cross-fitted (out-of-sample) predictions; one weight set for the
/// whole sample.
StackWeights short_stack(const Matrix& p, const Vector& y);

enum class StackingMode { None, CLS, SingleBest };

std::string_view to_string(StackingMode mode);
StackingMode parse_stacking_mode(std::string_view name);

/// Fitted stack: sum_j w_j * model_j(x). Excluded learners carry weight 0
/// and no model.
class StackedModel final : public FittedModel {
public:
    StackedModel(Index input_cols, std::vector<std::unique_ptr<FittedModel>> models, StackWeights weights,
                 std::vector<std::string> failures);

    std::string_view kind() const override { return "stack"; }
    const StackWeights& weights() const { return weights_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const FittedModel* base_model(std::size_t j) const { return models_[j].get(); }

protected:
    Vector predict_features(const Matrix& features) const override;

private:
    std::vector<std::unique_ptr<FittedModel>> models_;
    StackWeights weights_;
    std::vector<std::string> failures_;
};

/// Per-sample stacking: V-fold cross-validated predictions of every base
/// learner feed the meta solver, then every surviving learner is refit on
/// the whole sample. A learner that throws is excluded and recorded; if all
/// fail the first error propagates.
std::unique_ptr<StackedModel> stack_cef(const Matrix& x, const Vector& y,
                                        const std::vector<std::shared_ptr<const Learner>>& learners,
                                        StackingMode mode, int folds, std::uint64_t seed);

/// stack_cef behind the Learner interface, so cross-fitting treats a stack as
/// one more learner.
class StackedLearner final : public Learner {
public:
    StackedLearner(std::string name, std::vector<std::shared_ptr<const Learner>> learners, StackingMode mode,
                   int folds);

    std::string name() const override { return name_; }
    const std::vector<std::shared_ptr<const Learner>>& learners() const { return learners_; }
    StackingMode mode() const { return mode_; }
    std::unique_ptr<FittedModel> fit(const Matrix& x, const Vector& y, std::uint64_t seed) const override;

private:
    std::string name_;
    std::vector<std::shared_ptr<const Learner>> learners_;
    StackingMode mode_;
    int folds_;
};

}  // namespace ddml
