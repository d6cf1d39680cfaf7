#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddml/data.hpp"

namespace ddml {

enum class VceKind { Classical, HC0, HC1, HC3, Cluster };

std::string_view to_string(VceKind kind);
VceKind parse_vce(std::string_view name);

/// Variance estimator plus, for Cluster, the group id of every row.
struct Vce {
    VceKind kind = VceKind::HC1;
    std::optional<std::span<const std::int64_t>> cluster;
};

/// Symmetric clipping of propensities into [lower, 1 - lower].
struct TrimPolicy {
    double lower = 0.01;

    void validate() const;  // throws ConfigError unless 0 < lower < 0.5
    double apply(double p) const { return p < lower ? lower : (p > 1.0 - lower ? 1.0 - lower : p); }
};

enum class AggregateMode { Median, Mean };

std::string_view to_string(AggregateMode mode);
AggregateMode parse_aggregate(std::string_view name);

struct Estimate {
    ModelKind model = ModelKind::Partial;
    std::string label;                  // learner combination, "opt", "ss", "stack"
    std::vector<std::string> learners;  // one per CEF slot
    std::string tag = "rep";            // "rep", "md", "mn"
    int rep = -1;                       // 0-based for per-rep estimates
    std::vector<std::string> names;     // coefficient names
    Vector theta;
    Vector se;
    Index n_used = 0;
    VceKind vce = VceKind::HC1;
    int trimmed_low = 0;
    int trimmed_high = 0;
    double first_stage_f = 0.0;  // IV-type estimators only
    std::vector<std::string> warnings;
};

/// Coefficients and variance of a linear regression; the first column of
/// `x` (and `z`) is the intercept when one is included.
struct LinearFit {
    Vector coef;
    Matrix vcov;
    Vector resid;
};

/// OLS of y on x with the requested variance estimator. Throws
/// DegenerateError when x'x is singular.
LinearFit ols_fit(const Vector& y, const Matrix& x, const Vce& vce);

/// Two-stage least squares of y on x instrumented by z (z holds every
/// exogenous column, including the intercept). Sandwich variance uses the
/// first-stage fitted regressors with structural residuals.
LinearFit tsls_fit(const Vector& y, const Matrix& x, const Matrix& z, const Vce& vce);

/// Slopes of (Y - l) on the columns (D_j - m_j), intercept unless
/// `constant` is false.
Estimate estimate_partial(const Vector& y, const Matrix& d, const Vector& l_hat, const Matrix& m_hat, const Vce& vce,
                          bool constant = true);

/// Mean of the doubly robust ATE score with trimmed propensities.
Estimate estimate_ate(const Vector& y, const Vector& d, const Vector& g0, const Vector& g1, const Vector& m_hat,
                      const TrimPolicy& trim, const Vce& vce);

/// ATET score D(Y-g0)/p - m(1-D)(Y-g0)/(p(1-m)) with p the treated share,
/// treated as known in the variance.
Estimate estimate_atet(const Vector& y, const Vector& d, const Vector& g0, const Vector& m_hat,
                       const TrimPolicy& trim, const Vce& vce);

/// 2SLS of (Y - l) on (D - m) instrumented by (Z - r).
Estimate estimate_pliv(const Vector& y, const Matrix& d, const Matrix& z, const Vector& l_hat, const Matrix& m_hat,
                       const Matrix& r_hat, const Vce& vce, bool constant = true);

/// IV of (Y - l) on (D - m) with the constructed instrument (p - m).
Estimate estimate_fiv(const Vector& y, const Vector& d, const Vector& l_hat, const Vector& p_hat,
                      const Vector& m_hat, const Vce& vce, bool constant = true);

/// Ratio of the mean LATE numerator and denominator terms; r is trimmed.
Estimate estimate_late(const Vector& y, const Vector& d, const Vector& z, const Vector& l0, const Vector& l1,
                       const Vector& p0, const Vector& p1, const Vector& r_hat, const TrimPolicy& trim,
                       const Vce& vce);

/// Median: theta = median, s = sqrt(median(s_r^2 + (theta_r - theta)^2)).
/// Mean: theta = mean, s = sqrt(hmean(s_r^2 + (theta_r - theta)^2)).
Estimate aggregate_reps(const std::vector<Estimate>& reps, AggregateMode mode);

}  // namespace ddml
