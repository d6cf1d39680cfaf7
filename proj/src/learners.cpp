#include "ddml/learners.hpp"

#include <cmath>

#include "ddml/error.hpp"
#include "ddml/tree.hpp"

namespace ddml {

std::string_view to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::OLS: return "ols";
        case LearnerKind::RidgeCV: return "ridgecv";
        case LearnerKind::LassoCV: return "lassocv";
        case LearnerKind::RandomForest: return "rf";
        case LearnerKind::GradientBoost: return "gradboost";
    }
    return "?";
}

std::string_view to_string(FeatureTransform transform) {
    switch (transform) {
        case FeatureTransform::Base: return "base";
        case FeatureTransform::Poly5: return "poly5";
        case FeatureTransform::Poly2Inter: return "poly2inter";
    }
    return "?";
}

LearnerKind parse_learner_kind(std::string_view name) {
    for (auto k : {LearnerKind::OLS, LearnerKind::RidgeCV, LearnerKind::LassoCV, LearnerKind::RandomForest,
                   LearnerKind::GradientBoost})
        if (name == to_string(k)) return k;
    throw ConfigError("unknown learner kind '" + std::string(name) +
                      "' (expected ols, ridgecv, lassocv, rf, gradboost)");
}

FeatureTransform parse_transform(std::string_view name) {
    for (auto t : {FeatureTransform::Base, FeatureTransform::Poly5, FeatureTransform::Poly2Inter})
        if (name == to_string(t)) return t;
    throw ConfigError("unknown feature transform '" + std::string(name) + "' (expected base, poly5, poly2inter)");
}

Index expanded_width(Index p, FeatureTransform transform) {
    switch (transform) {
        case FeatureTransform::Base: return p;
        case FeatureTransform::Poly5: return 5 * p;
        case FeatureTransform::Poly2Inter: return 2 * p + p * (p - 1) / 2;
    }
    return p;
}

Matrix expand_features(const Matrix& x, FeatureTransform transform) {
    const Index n = x.rows(), p = x.cols();
    if (!x.allFinite()) throw DataError("feature matrix contains non-finite values");
    Matrix out(n, expanded_width(p, transform));
    switch (transform) {
        case FeatureTransform::Base:
            out = x;
            break;
        case FeatureTransform::Poly5:
            for (Index j = 0; j < p; ++j) {
                out.col(5 * j) = x.col(j);
                for (int k = 1; k < 5; ++k) out.col(5 * j + k) = out.col(5 * j + k - 1).cwiseProduct(x.col(j));
            }
            break;
        case FeatureTransform::Poly2Inter: {
            out.leftCols(p) = x;
            out.middleCols(p, p) = x.cwiseProduct(x);
            Index c = 2 * p;
            for (Index j = 0; j < p; ++j)
                for (Index l = j + 1; l < p; ++l) out.col(c++) = x.col(j).cwiseProduct(x.col(l));
            break;
        }
    }
    return out;
}

void LearnerSpec::validate() const {
    auto fail = [this](const std::string& what) {
        throw ConfigError("learner '" + name + "': " + what);
    };
    switch (kind) {
        case LearnerKind::OLS: break;
        case LearnerKind::RidgeCV:
        case LearnerKind::LassoCV:
            if (penalty.cv_folds < 2) fail("cv_folds must be >= 2");
            if (penalty.lambda_grid.empty() && penalty.n_lambda < 1) fail("n_lambda must be >= 1");
            if (!(penalty.lambda_min_ratio > 0.0 && penalty.lambda_min_ratio <= 1.0))
                fail("lambda_min_ratio must lie in (0, 1]");
            for (double l : penalty.lambda_grid)
                if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda grid values must be finite and >= 0");
            if (!(penalty.tol > 0.0)) fail("tol must be > 0");
            if (penalty.max_sweeps < 1) fail("max_sweeps must be >= 1");
            break;
        case LearnerKind::RandomForest:
            if (forest.n_trees < 1) fail("n_trees must be >= 1");
            if (forest.max_depth < 0) fail("max_depth must be >= 0");
            if (forest.max_features < 0) fail("max_features must be >= 0");
            if (forest.min_leaf < 1) fail("min_leaf must be >= 1");
            break;
        case LearnerKind::GradientBoost:
            if (boost.n_trees < 0) fail("n_trees must be >= 0");
            if (!(boost.learning_rate > 0.0) || !std::isfinite(boost.learning_rate)) fail("learning_rate must be > 0");
            if (boost.max_depth < 1) fail("max_depth must be >= 1");
            if (boost.min_leaf < 1) fail("min_leaf must be >= 1");
            if (!(boost.validation_fraction > 0.0 && boost.validation_fraction < 1.0))
                fail("validation_fraction must lie in (0, 1)");
            if (boost.patience < 1) fail("patience must be >= 1");
            if (!(boost.tol >= 0.0)) fail("tol must be >= 0");
            break;
    }
}

LearnerSpec preset_learner(std::string_view name) {
    LearnerSpec spec;
    spec.name = std::string(name);
    auto penalized = [&](LearnerKind kind, FeatureTransform t) {
        spec.kind = kind;
        spec.transform = t;
        return spec;
    };
    if (name == "ols") return penalized(LearnerKind::OLS, FeatureTransform::Base);
    if (name == "lassocv") return penalized(LearnerKind::LassoCV, FeatureTransform::Base);
    if (name == "ridgecv") return penalized(LearnerKind::RidgeCV, FeatureTransform::Base);
    if (name == "lassocv-poly5") return penalized(LearnerKind::LassoCV, FeatureTransform::Poly5);
    if (name == "ridgecv-poly5") return penalized(LearnerKind::RidgeCV, FeatureTransform::Poly5);
    if (name == "lassocv-poly2inter") return penalized(LearnerKind::LassoCV, FeatureTransform::Poly2Inter);
    if (name == "ridgecv-poly2inter") return penalized(LearnerKind::RidgeCV, FeatureTransform::Poly2Inter);
    if (name == "rf" || name == "rf-low" || name == "rf-medium" || name == "rf-high") {
        spec.kind = LearnerKind::RandomForest;
        spec.forest.max_depth = name == "rf-medium" ? 6 : name == "rf-high" ? 2 : 10;
        return spec;
    }
    if (name == "gradboost" || name == "gb-low" || name == "gb-medium" || name == "gb-high") {
        spec.kind = LearnerKind::GradientBoost;
        spec.boost.learning_rate = name == "gb-medium" ? 0.1 : name == "gb-high" ? 0.01 : 0.3;
        return spec;
    }
    throw ConfigError("unknown learner preset '" + std::string(name) + "'");
}

Vector FittedModel::predict(const Matrix& x) const {
    if (x.cols() != input_cols_)
        throw DataError("prediction matrix has " + std::to_string(x.cols()) + " columns, model was trained on " +
                        std::to_string(input_cols_));
    if (x.rows() == 0) return Vector(0);
    if (transform_ == FeatureTransform::Base) return predict_features(x);
    return predict_features(expand_features(x, transform_));
}

namespace {

// Records the raw input width and transform on a model fitted to expanded features.
class TransformedModel final : public FittedModel {
public:
    TransformedModel(FeatureTransform transform, Index input_cols, std::unique_ptr<FittedModel> inner)
        : FittedModel(transform, input_cols), inner_(std::move(inner)) {}
    std::string_view kind() const override { return inner_->kind(); }
    const FittedModel& inner() const { return *inner_; }

protected:
    Vector predict_features(const Matrix& features) const override { return inner_->predict(features); }

private:
    std::unique_ptr<FittedModel> inner_;
};

}  // namespace

BuiltinLearner::BuiltinLearner(LearnerSpec spec) : spec_(std::move(spec)) {
    if (spec_.name.empty()) spec_.name = std::string(to_string(spec_.kind));
    spec_.validate();
}

std::unique_ptr<FittedModel> BuiltinLearner::fit(const Matrix& x, const Vector& y, std::uint64_t seed) const {
    if (x.rows() != y.size()) throw DataError("learner '" + spec_.name + "': feature/target length mismatch");
    if (x.rows() < 1) throw DataError("learner '" + spec_.name + "': empty training sample");
    const std::uint64_t s = derive_seed({seed, spec_.seed_offset});
    const bool expand = spec_.transform != FeatureTransform::Base;
    Matrix expanded;
    if (expand) expanded = expand_features(x, spec_.transform);
    const Matrix& f = expand ? expanded : x;

    std::unique_ptr<FittedModel> model;
    switch (spec_.kind) {
        case LearnerKind::OLS: model = fit_ols(f, y); break;
        case LearnerKind::RidgeCV: model = fit_ridge_cv(f, y, spec_.penalty, s); break;
        case LearnerKind::LassoCV: model = fit_lasso_cv(f, y, spec_.penalty, s); break;
        case LearnerKind::RandomForest: model = fit_random_forest(f, y, spec_.forest, s); break;
        case LearnerKind::GradientBoost: model = fit_gradient_boost(f, y, spec_.boost, s); break;
    }
    if (!expand) return model;
    return std::make_unique<TransformedModel>(spec_.transform, x.cols(), std::move(model));
}

std::shared_ptr<const Learner> make_learner(const LearnerSpec& spec) {
    return std::make_shared<const BuiltinLearner>(spec);
}

}  // namespace ddml
