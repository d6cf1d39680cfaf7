#pragma once

#include <span>
#include <vector>

#include "ddml/data.hpp"
#include "ddml/learners.hpp"
#include "ddml/random.hpp"

namespace ddml {

/// Row indices sorted ascending by each feature (stable on ties).
class PresortedFeatures {
public:
    explicit PresortedFeatures(const Matrix& x);
    std::span<const int> order(Index feature) const { return order_[static_cast<std::size_t>(feature)]; }

private:
    std::vector<std::vector<int>> order_;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

/// CART regression tree; rows with x <= threshold go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict_row(const Matrix& x, Index row) const;
    int depth() const;
    int leaves() const;
};

struct TreeGrowth {
    int max_depth = 10;
    int min_leaf = 1;       // in units of total sample weight
    int max_features = 0;  // candidate features per node; 0 or >= p means all
};

/// Grows one tree minimizing weighted within-node SSE. Zero-weight rows are
/// ignored. Candidate split points are midpoints between consecutive distinct
/// values; ties between equal gains keep the lowest feature index, then the
/// lowest threshold.
RegressionTree grow_tree(const Matrix& x, const PresortedFeatures& sorted, std::span<const double> target,
                         std::span<const double> weight, const TreeGrowth& growth, Rng& rng);

/// Random forest (average of trees) or boosted ensemble
/// (base + rate * sum of trees).
class TreeEnsembleModel final : public FittedModel {
public:
    enum class Combine { Average, Boosted };

    TreeEnsembleModel(Combine combine, Index input_cols, std::vector<RegressionTree> trees, double base,
                      double learning_rate)
        : FittedModel(FeatureTransform::Base, input_cols),
          combine_(combine),
          trees_(std::move(trees)),
          base_(base),
          learning_rate_(learning_rate) {}

    std::string_view kind() const override { return combine_ == Combine::Average ? "rf" : "gradboost"; }
    const std::vector<RegressionTree>& trees() const { return trees_; }
    double base() const { return base_; }

    // Boosting diagnostics.
    int stages_run = 0;
    std::vector<double> validation_mse;

protected:
    Vector predict_features(const Matrix& features) const override;

private:
    Combine combine_;
    std::vector<RegressionTree> trees_;
    double base_;
    double learning_rate_;
};

}  // namespace ddml
