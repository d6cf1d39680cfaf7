#include "ddml/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddml/error.hpp"
#include "ddml/folds.hpp"
#include "ddml/learners.hpp"

namespace ddml {

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    const Index n = x.rows();
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Ones(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        const double sd = std::sqrt((x.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(n));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])))) {
            s.dropped.push_back(j);
        } else {
            s.scale[j] = sd;
            s.kept.push_back(j);
        }
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    Matrix out(x.rows(), static_cast<Index>(kept.size()));
    for (Index c = 0; c < out.cols(); ++c) {
        const Index j = kept[static_cast<std::size_t>(c)];
        out.col(c) = (x.col(j).array() - mean[j]) / scale[j];
    }
    return out;
}

Vector min_norm_solve(const Matrix& x_centered, const Vector& y_centered) {
    if (x_centered.cols() == 0) return Vector(0);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x_centered);
    return cod.solve(y_centered);
}

namespace {

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

}  // namespace

LassoResult lasso_gram(const Matrix& gram, const Vector& xty, double lambda, const Vector& warm, double tol,
                       long max_sweeps) {
    const Index p = gram.rows();
    LassoResult out;
    out.coef = warm.size() == p ? warm : Vector::Zero(p);
    Vector grad = xty - gram * out.coef;  // c - G b

    auto sweep = [&](bool active_only) {
        if (out.sweeps >= max_sweeps)
            throw ConvergenceError("lasso coordinate descent did not converge at lambda=" + format_double(lambda),
                                   out.sweeps);
        double max_change = 0.0;
        for (Index j = 0; j < p; ++j) {
            const double old = out.coef[j];
            if (active_only && old == 0.0) continue;
            const double gjj = gram(j, j);
            if (gjj <= 0.0) continue;
            const double updated = soft_threshold(grad[j] + gjj * old, lambda) / gjj;
            if (updated != old) {
                const double delta = updated - old;
                grad.noalias() -= gram.col(j) * delta;
                out.coef[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        ++out.sweeps;
        return max_change;
    };

    for (;;) {
        if (sweep(false) < tol) break;
        while (sweep(true) >= tol) {
        }
    }
    return out;
}

LassoResult lasso_solve(const Matrix& x, const Vector& y, double lambda, double tol, long max_sweeps) {
    const double n = static_cast<double>(x.rows());
    const Matrix gram = x.transpose() * x / n;
    const Vector xty = x.transpose() * y / n;
    return lasso_gram(gram, xty, lambda, Vector::Zero(x.cols()), tol, max_sweeps);
}

double lasso_lambda_max(const Matrix& x_std, const Vector& y_centered) {
    if (x_std.cols() == 0) return 0.0;
    return (x_std.transpose() * y_centered).cwiseAbs().maxCoeff() / static_cast<double>(x_std.rows());
}

std::vector<double> geometric_grid(double top, int count, double min_ratio) {
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = top;
        return grid;
    }
    const double step = std::log(min_ratio) / static_cast<double>(count - 1);
    for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = top * std::exp(step * i);
    return grid;
}

RidgePath::RidgePath(const Matrix& x_std, const Vector& y_centered) {
    const double n = static_cast<double>(x_std.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(x_std.transpose() * x_std / n);
    eigvec_ = eig.eigenvectors();
    eigval_ = eig.eigenvalues();
    proj_ = eigvec_.transpose() * (x_std.transpose() * y_centered / n);
}

Vector RidgePath::solve(double lambda) const {
    if (eigval_.size() == 0) return Vector(0);
    const double cutoff = 1e-12 * std::max(eigval_.maxCoeff(), 0.0);
    Vector scaled(proj_.size());
    for (Index j = 0; j < proj_.size(); ++j) {
        const double denom = eigval_[j] + lambda;
        scaled[j] = denom > cutoff && denom > 0.0 ? proj_[j] / denom : 0.0;
    }
    return eigvec_ * scaled;
}

std::vector<double> default_ridge_grid(int count) { return geometric_grid(1e4, count, 1e-8); }

Vector LinearModel::predict_features(const Matrix& features) const {
    Vector out = features * coef_;
    out.array() += intercept_;
    return out;
}

std::unique_ptr<LinearModel> fit_ols(const Matrix& x, const Vector& y) {
    const Index n = x.rows();
    if (n < 1) throw DataError("OLS needs at least one observation");
    const Vector mean = x.colwise().mean().transpose();
    const double ybar = y.mean();
    const Matrix xc = x.rowwise() - mean.transpose();
    const Vector coef = min_norm_solve(xc, (y.array() - ybar).matrix());
    const double intercept = ybar - mean.dot(coef);
    return std::make_unique<LinearModel>("ols", FeatureTransform::Base, x.cols(), intercept, coef);
}

namespace {

enum class Penalty { Ridge, Lasso };

/// Maps standardized slopes back to the raw feature scale.
std::unique_ptr<LinearModel> to_raw(const char* kind, const Standardizer& st, const Vector& b, double ybar,
                                    Index p) {
    Vector coef = Vector::Zero(p);
    for (std::size_t c = 0; c < st.kept.size(); ++c) {
        const Index j = st.kept[c];
        coef[j] = b[static_cast<Index>(c)] / st.scale[j];
    }
    double intercept = ybar;
    for (Index j : st.kept) intercept -= st.mean[j] * coef[j];
    auto model = std::make_unique<LinearModel>(kind, FeatureTransform::Base, p, intercept, coef);
    model->dropped_features = st.dropped;
    return model;
}

/// Solutions along `grid` (path order), each warm-started from the previous.
std::vector<Vector> penalized_path(Penalty penalty, const Matrix& xs, const Vector& yc,
                                   const std::vector<double>& grid, std::size_t upto, const PenaltyParams& params) {
    std::vector<Vector> out;
    out.reserve(upto + 1);
    if (penalty == Penalty::Ridge) {
        RidgePath path(xs, yc);
        for (std::size_t l = 0; l <= upto; ++l) out.push_back(path.solve(grid[l]));
    } else {
        const double n = static_cast<double>(xs.rows());
        const Matrix gram = xs.transpose() * xs / n;
        const Vector xty = xs.transpose() * yc / n;
        Vector warm = Vector::Zero(xs.cols());
        for (std::size_t l = 0; l <= upto; ++l) {
            warm = lasso_gram(gram, xty, grid[l], warm, params.tol, params.max_sweeps).coef;
            out.push_back(warm);
        }
    }
    return out;
}

std::unique_ptr<LinearModel> fit_penalized_cv(Penalty penalty, const Matrix& x, const Vector& y,
                                              const PenaltyParams& params, std::uint64_t seed) {
    const Index n = x.rows();
    const Index p = x.cols();
    const char* kind = penalty == Penalty::Ridge ? "ridgecv" : "lassocv";
    if (n < 1) throw DataError(std::string(kind) + " needs at least one observation");

    const auto st = Standardizer::fit(x);
    const Matrix xs = st.apply(x);
    const double ybar = y.mean();
    const Vector yc = (y.array() - ybar).matrix();

    std::vector<double> grid = params.lambda_grid;
    if (grid.empty()) {
        if (penalty == Penalty::Ridge) {
            grid = default_ridge_grid(params.n_lambda);
        } else {
            const double top = lasso_lambda_max(xs, yc);
            grid = top > 0.0 ? geometric_grid(top, params.n_lambda, params.lambda_min_ratio)
                             : std::vector<double>{0.0};
        }
    }
    // Path order: strongest penalty first, for warm starts.
    std::sort(grid.begin(), grid.end(), std::greater<>());

    std::vector<double> cv_mse(grid.size(), 0.0);
    std::size_t best = 0;
    const int v_folds = static_cast<int>(std::min<Index>(params.cv_folds, n));
    if (grid.size() > 1 && v_folds >= 2) {
        const auto folds = assign_folds(n, v_folds, 1, seed);
        std::vector<double> sse(grid.size(), 0.0);
        for (int v = 1; v <= v_folds; ++v) {
            const auto train = folds.complement(v, 0);
            const auto test = folds.members(v, 0);
            const Matrix x_train = x(train, Eigen::all);
            const Vector y_train = y(train);
            const auto st_v = Standardizer::fit(x_train);
            const double ybar_v = y_train.mean();
            const Vector yc_v = (y_train.array() - ybar_v).matrix();
            const Matrix xs_train = st_v.apply(x_train);
            const Matrix xs_test = st_v.apply(x(test, Eigen::all));
            const Vector y_test = y(test);
            const auto path = penalized_path(penalty, xs_train, yc_v, grid, grid.size() - 1, params);
            for (std::size_t l = 0; l < grid.size(); ++l) {
                const Vector resid = (y_test.array() - ybar_v).matrix() - xs_test * path[l];
                sse[l] += resid.squaredNorm();
            }
        }
        for (std::size_t l = 0; l < grid.size(); ++l) {
            cv_mse[l] = sse[l] / static_cast<double>(n);
            if (cv_mse[l] < cv_mse[best]) best = l;
        }
    }

    const auto path = penalized_path(penalty, xs, yc, grid, best, params);
    auto model = to_raw(kind, st, path[best], ybar, p);
    model->lambda = grid[best];
    model->lambda_index = static_cast<Index>(best);
    model->lambda_grid = grid;
    model->cv_mse = cv_mse;
    return model;
}

}  // namespace

std::unique_ptr<LinearModel> fit_ridge_cv(const Matrix& x, const Vector& y, const PenaltyParams& params,
                                          std::uint64_t seed) {
    return fit_penalized_cv(Penalty::Ridge, x, y, params, seed);
}

std::unique_ptr<LinearModel> fit_lasso_cv(const Matrix& x, const Vector& y, const PenaltyParams& params,
                                          std::uint64_t seed) {
    return fit_penalized_cv(Penalty::Lasso, x, y, params, seed);
}

}  // namespace ddml
