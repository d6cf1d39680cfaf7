#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ddml/data.hpp"

namespace ddml {

enum class LearnerKind { OLS, RidgeCV, LassoCV, RandomForest, GradientBoost };
enum class FeatureTransform { Base, Poly5, Poly2Inter };

std::string_view to_string(LearnerKind kind);
std::string_view to_string(FeatureTransform transform);
LearnerKind parse_learner_kind(std::string_view name);
FeatureTransform parse_transform(std::string_view name);

/// Base -> X; Poly5 -> x_j, x_j^2, ..., x_j^5 for each j; Poly2Inter -> all
/// x_j, then all x_j^2, then x_j * x_l for j < l.
Matrix expand_features(const Matrix& x, FeatureTransform transform);
Index expanded_width(Index p, FeatureTransform transform);

/// Shared by ridge and lasso. An empty grid means "build the default grid".
struct PenaltyParams {
    std::vector<double> lambda_grid;
    int cv_folds = 5;
    int n_lambda = 100;
    double lambda_min_ratio = 1e-4;
    double tol = 1e-10;      // lasso: max coefficient change per sweep
    long max_sweeps = 100000;
};

struct ForestParams {
    int n_trees = 500;
    int max_depth = 10;
    int max_features = 0;  // 0 -> floor(sqrt(p))
    int min_leaf = 1;
    bool bootstrap = true;
};

struct BoostParams {
    int n_trees = 1000;
    double learning_rate = 0.3;
    int max_depth = 3;
    int min_leaf = 1;
    bool early_stop = true;
    double validation_fraction = 0.2;
    int patience = 5;
    double tol = 0.01;  // relative improvement in validation MSE
};

struct LearnerSpec {
    LearnerKind kind = LearnerKind::OLS;
    std::string name;
    FeatureTransform transform = FeatureTransform::Base;
    std::uint64_t seed_offset = 0;
    PenaltyParams penalty;
    ForestParams forest;
    BoostParams boost;

    /// Throws ConfigError when a hyperparameter is out of range.
    void validate() const;
};

/// Desk-scale menu: rf-low/medium/high differ in max depth
/// (10/6/2), gb-low/medium/high in learning rate (0.3/0.1/0.01).
LearnerSpec preset_learner(std::string_view name);

class FittedModel {
public:
    FittedModel(FeatureTransform transform, Index input_cols) : transform_(transform), input_cols_(input_cols) {}
    virtual ~FittedModel() = default;

    /// Expands `x` with the training transform, then predicts. Throws
    /// DataError on a column-count mismatch. Zero rows yield an empty vector.
    Vector predict(const Matrix& x) const;

    virtual std::string_view kind() const = 0;
    FeatureTransform transform() const { return transform_; }
    Index input_cols() const { return input_cols_; }

protected:
    virtual Vector predict_features(const Matrix& features) const = 0;

private:
    FeatureTransform transform_;
    Index input_cols_;
};

/// Any supervised CEF estimator. Implementations must be safe to call
/// concurrently: fit shares no mutable state between calls.
class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<FittedModel> fit(const Matrix& x, const Vector& y, std::uint64_t seed) const = 0;
};

/// Intercept plus slopes on the expanded feature scale.
class LinearModel final : public FittedModel {
public:
    LinearModel(std::string kind, FeatureTransform transform, Index input_cols, double intercept, Vector coef)
        : FittedModel(transform, input_cols), kind_(std::move(kind)), intercept_(intercept), coef_(std::move(coef)) {}

    std::string_view kind() const override { return kind_; }
    double intercept() const { return intercept_; }
    const Vector& coef() const { return coef_; }

    // Penalized fits only.
    double lambda = 0.0;
    Index lambda_index = -1;
    std::vector<double> lambda_grid;
    std::vector<double> cv_mse;
    std::vector<Index> dropped_features;  // zero-variance columns

protected:
    Vector predict_features(const Matrix& features) const override;

private:
    std::string kind_;
    double intercept_;
    Vector coef_;
};

std::unique_ptr<LinearModel> fit_ols(const Matrix& x, const Vector& y);
std::unique_ptr<LinearModel> fit_ridge_cv(const Matrix& x, const Vector& y, const PenaltyParams& params,
                                          std::uint64_t seed);
std::unique_ptr<LinearModel> fit_lasso_cv(const Matrix& x, const Vector& y, const PenaltyParams& params,
                                          std::uint64_t seed);

class TreeEnsembleModel;
std::unique_ptr<TreeEnsembleModel> fit_random_forest(const Matrix& x, const Vector& y, const ForestParams& params,
                                                     std::uint64_t seed);
std::unique_ptr<TreeEnsembleModel> fit_gradient_boost(const Matrix& x, const Vector& y, const BoostParams& params,
                                                      std::uint64_t seed);

/// Learner backed by one of the built-in kinds. The feature transform is
/// applied inside fit and recorded on the model for predict.
class BuiltinLearner final : public Learner {
public:
    explicit BuiltinLearner(LearnerSpec spec);
    std::string name() const override { return spec_.name; }
    const LearnerSpec& spec() const { return spec_; }
    std::unique_ptr<FittedModel> fit(const Matrix& x, const Vector& y, std::uint64_t seed) const override;

private:
    LearnerSpec spec_;
};

std::shared_ptr<const Learner> make_learner(const LearnerSpec& spec);

}  // namespace ddml
