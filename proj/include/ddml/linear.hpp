#pragma once

#include <vector>

#include "ddml/data.hpp"

namespace ddml {

/// Column centering and scaling (population standard deviation) estimated on
/// a training split and reused for prediction. Columns with zero variance are
/// dropped.
struct Standardizer {
    Vector mean;
    Vector scale;
    std::vector<Index> kept;
    std::vector<Index> dropped;

    static Standardizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
};

/// Minimum-norm least squares slope for centered data.
Vector min_norm_solve(const Matrix& x_centered, const Vector& y_centered);

struct LassoResult {
    Vector coef;
    long sweeps = 0;
};

/// Coordinate descent for  (1/2n)||y - Xb||^2 + lambda ||b||_1  given the
/// scaled Gram matrix G = X'X/n and c = X'y/n. `warm` seeds the iterate.
LassoResult lasso_gram(const Matrix& gram, const Vector& xty, double lambda, const Vector& warm, double tol,
                       long max_sweeps);

/// Convenience wrapper over lasso_gram for an already standardized design.
LassoResult lasso_solve(const Matrix& x, const Vector& y, double lambda, double tol = 1e-12,
                        long max_sweeps = 100000);

/// Smallest lambda that zeroes every slope: max_j |x_j'y| / n.
double lasso_lambda_max(const Matrix& x_std, const Vector& y_centered);

/// Geometric grid of `count` points from `top` down to `top * min_ratio`.
std::vector<double> geometric_grid(double top, int count, double min_ratio);

/// Ridge solution (X'X/n + lambda I)^{-1} X'y/n via a cached eigendecomposition.
class RidgePath {
public:
    RidgePath(const Matrix& x_std, const Vector& y_centered);
    Vector solve(double lambda) const;

private:
    Matrix eigvec_;
    Vector eigval_;
    Vector proj_;  // V' X'y / n
};

std::vector<double> default_ridge_grid(int count);

}  // namespace ddml
