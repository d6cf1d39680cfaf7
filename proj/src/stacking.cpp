#include "ddml/stacking.hpp"

#include <algorithm>
#include <cmath>

#include "ddml/error.hpp"
#include "ddml/folds.hpp"
#include "ddml/random.hpp"

namespace ddml {

namespace {

double squared_error(const Matrix& p, const Vector& y, const Vector& w) { return (y - p * w).squaredNorm(); }

Index best_column(const Matrix& p, const Vector& y, Vector* errors = nullptr) {
    Vector err(p.cols());
    for (Index j = 0; j < p.cols(); ++j) err[j] = (y - p.col(j)).squaredNorm();
    Index best = 0;
    for (Index j = 1; j < p.cols(); ++j)
        if (err[j] < err[best]) best = j;
    if (errors) *errors = err;
    return best;
}

void check_inputs(const Matrix& p, const Vector& y) {
    if (p.cols() < 1) throw DataError("stacking needs at least one prediction column");
    if (p.rows() != y.size()) throw DataError("stacking: prediction rows do not match target length");
    if (!p.allFinite() || !y.allFinite()) throw DataError("stacking: non-finite predictions or target");
}

// min ||y - P_S z||^2 s.t. sum z = 1, via the KKT system (min-norm if singular).
Vector equality_ls(const Matrix& h, const Vector& q, const std::vector<Index>& set) {
    const auto m = static_cast<Index>(set.size());
    Matrix kkt = Matrix::Zero(m + 1, m + 1);
    Vector rhs(m + 1);
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b < m; ++b) kkt(a, b) = h(set[a], set[b]);
        kkt(a, m) = 1.0;
        kkt(m, a) = 1.0;
        rhs[a] = q[set[a]];
    }
    rhs[m] = 1.0;
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    return sol.head(m);
}

}  // namespace

StackWeights cls_weights(const Matrix& p, const Vector& y) {
    check_inputs(p, y);
    const Index j_count = p.cols();
    StackWeights out;
    if (p.isZero(0.0)) {
        out.weights = Vector::Constant(j_count, 1.0 / static_cast<double>(j_count));
        out.objective = y.squaredNorm();
        out.degenerate = true;
        out.warnings.emplace_back("all prediction columns are zero; using uniform weights");
        return out;
    }

    Vector vertex_err;
    const Index start = best_column(p, y, &vertex_err);
    Vector w = Vector::Zero(j_count);
    w[start] = 1.0;
    if (j_count == 1) {
        out.weights = w;
        out.objective = vertex_err[0];
        return out;
    }

    const Matrix h = p.transpose() * p;
    const Vector q = p.transpose() * y;
    const double scale = std::max(h.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff());
    const double kkt_tol = 1e-12 * std::max(scale, 1.0);
    const double zero_tol = 1e-14;

    std::vector<Index> active{start};
    std::vector<char> in_set(static_cast<std::size_t>(j_count), 0);
    in_set[static_cast<std::size_t>(start)] = 1;

    const int max_outer = static_cast<int>(10 * j_count + 50);
    for (int outer = 0; outer < max_outer; ++outer) {
        const Vector grad = h * w - q;  // half the gradient
        double nu = 0.0;
        for (Index a : active) nu += grad[a];
        nu /= static_cast<double>(active.size());
        Index enter = -1;
        double most_negative = -kkt_tol;
        for (Index j = 0; j < j_count; ++j) {
            if (in_set[static_cast<std::size_t>(j)]) continue;
            const double reduced = grad[j] - nu;
            if (reduced < most_negative) {
                most_negative = reduced;
                enter = j;
            }
        }
        if (enter < 0) break;
        active.push_back(enter);
        in_set[static_cast<std::size_t>(enter)] = 1;

        for (int inner = 0; inner <= j_count; ++inner) {
            std::sort(active.begin(), active.end());
            const Vector z = equality_ls(h, q, active);
            const auto m = static_cast<Index>(active.size());
            bool feasible = true;
            for (Index a = 0; a < m; ++a)
                if (z[a] <= zero_tol) feasible = false;
            if (feasible) {
                w.setZero();
                for (Index a = 0; a < m; ++a) w[active[a]] = z[a];
                break;
            }
            double alpha = 1.0;
            for (Index a = 0; a < m; ++a) {
                const double wa = w[active[a]];
                if (z[a] <= zero_tol && wa - z[a] > 0.0) alpha = std::min(alpha, wa / (wa - z[a]));
            }
            for (Index a = 0; a < m; ++a) w[active[a]] += alpha * (z[a] - w[active[a]]);
            std::vector<Index> kept;
            for (Index a = 0; a < m; ++a) {
                if (w[active[a]] > zero_tol) {
                    kept.push_back(active[a]);
                } else {
                    w[active[a]] = 0.0;
                    in_set[static_cast<std::size_t>(active[a])] = 0;
                }
            }
            if (kept.empty()) {  // cannot happen for a convex step; keep the entering column
                kept.push_back(enter);
                w[enter] = 1.0;
                in_set[static_cast<std::size_t>(enter)] = 1;
            }
            active = std::move(kept);
        }
    }

    w = w.cwiseMax(0.0);
    w /= w.sum();
    double obj = squared_error(p, y, w);
    if (obj > vertex_err[start]) {
        w.setZero();
        w[start] = 1.0;
        obj = vertex_err[start];
    }
    out.weights = w;
    out.objective = obj;
    return out;
}

StackWeights single_best_weights(const Matrix& p, const Vector& y) {
    check_inputs(p, y);
    Vector err;
    const Index best = best_column(p, y, &err);
    StackWeights out;
    out.weights = Vector::Zero(p.cols());
    out.weights[best] = 1.0;
    out.objective = err[best];
    return out;
}

StackWeights short_stack(const Matrix& p, const Vector& y) {
    StackWeights out = cls_weights(p, y);
    out.scope = StackScope::ShortStack;
    out.fold = 0;
    return out;
}

std::string_view to_string(StackingMode mode) {
    switch (mode) {
        case StackingMode::None: return "none";
        case StackingMode::CLS: return "cls";
        case StackingMode::SingleBest: return "singlebest";
    }
    return "?";
}

StackingMode parse_stacking_mode(std::string_view name) {
    for (auto m : {StackingMode::None, StackingMode::CLS, StackingMode::SingleBest})
        if (name == to_string(m)) return m;
    throw ConfigError("unknown stacking mode '" + std::string(name) + "' (expected none, cls, singlebest)");
}

StackedModel::StackedModel(Index input_cols, std::vector<std::unique_ptr<FittedModel>> models, StackWeights weights,
                           std::vector<std::string> failures)
    : FittedModel(FeatureTransform::Base, input_cols),
      models_(std::move(models)),
      weights_(std::move(weights)),
      failures_(std::move(failures)) {}

Vector StackedModel::predict_features(const Matrix& features) const {
    Vector out = Vector::Zero(features.rows());
    for (std::size_t j = 0; j < models_.size(); ++j) {
        const double w = weights_.weights[static_cast<Index>(j)];
        if (w == 0.0 || !models_[j]) continue;
        out += w * models_[j]->predict(features);
    }
    return out;
}

std::unique_ptr<StackedModel> stack_cef(const Matrix& x, const Vector& y,
                                        const std::vector<std::shared_ptr<const Learner>>& learners,
                                        StackingMode mode, int folds, std::uint64_t seed) {
    const auto j_count = learners.size();
    if (j_count == 0) throw ConfigError("stacking needs at least one base learner");
    if (mode == StackingMode::None) throw ConfigError("stack_cef called with stacking mode none");
    const Index n = x.rows();
    if (n < 2) throw DataError("stacking needs at least two training observations");
    const int v = std::clamp(folds, 2, static_cast<int>(n));
    const FoldAssignment cv = assign_folds(n, v, 1, derive_seed({seed, 0x57ACULL}));

    Matrix oos = Matrix::Zero(n, static_cast<Index>(j_count));
    std::vector<std::string> failures;
    std::vector<char> failed(j_count, 0);
    std::exception_ptr first_error;
    for (std::size_t j = 0; j < j_count; ++j) {
        try {
            for (int k = 1; k <= v; ++k) {
                const auto train = cv.complement(k, 0);
                const auto test = cv.members(k, 0);
                const Matrix xt = x(train, Eigen::all);
                const Vector yt = y(train);
                auto model = learners[j]->fit(xt, yt, derive_seed({seed, j, static_cast<std::uint64_t>(k)}));
                const Matrix xv = x(test, Eigen::all);
                oos(test, static_cast<Index>(j)) = model->predict(xv);
            }
        } catch (const Error& e) {
            failed[j] = 1;
            failures.push_back(learners[j]->name() + ": " + e.what());
            if (!first_error) first_error = std::current_exception();
        }
    }

    std::vector<std::unique_ptr<FittedModel>> models(j_count);
    for (std::size_t j = 0; j < j_count; ++j) {
        if (failed[j]) continue;
        try {
            models[j] = learners[j]->fit(x, y, derive_seed({seed, j}));
        } catch (const Error& e) {
            failed[j] = 1;
            failures.push_back(learners[j]->name() + ": " + e.what());
            if (!first_error) first_error = std::current_exception();
        }
    }

    std::vector<Index> alive;
    for (std::size_t j = 0; j < j_count; ++j)
        if (!failed[j]) alive.push_back(static_cast<Index>(j));
    if (alive.empty()) std::rethrow_exception(first_error);

    const Matrix p = oos(Eigen::all, alive);
    StackWeights sub = mode == StackingMode::CLS ? cls_weights(p, y) : single_best_weights(p, y);
    StackWeights full = sub;
    full.weights = Vector::Zero(static_cast<Index>(j_count));
    for (std::size_t a = 0; a < alive.size(); ++a) full.weights[alive[a]] = sub.weights[static_cast<Index>(a)];
    for (const auto& f : failures) full.warnings.push_back("excluded " + f);
    return std::make_unique<StackedModel>(x.cols(), std::move(models), std::move(full), std::move(failures));
}

StackedLearner::StackedLearner(std::string name, std::vector<std::shared_ptr<const Learner>> learners,
                               StackingMode mode, int folds)
    : name_(std::move(name)), learners_(std::move(learners)), mode_(mode), folds_(folds) {
    if (learners_.empty()) throw ConfigError("stacked learner '" + name_ + "' has no base learners");
    if (mode_ == StackingMode::None) throw ConfigError("stacked learner '" + name_ + "' needs a stacking mode");
    if (folds_ < 2) throw ConfigError("stacking folds must be >= 2");
}

std::unique_ptr<FittedModel> StackedLearner::fit(const Matrix& x, const Vector& y, std::uint64_t seed) const {
    return stack_cef(x, y, learners_, mode_, folds_, seed);
}

}  // namespace ddml
