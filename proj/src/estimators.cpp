#include "ddml/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ddml/error.hpp"

namespace ddml {

std::string_view to_string(VceKind kind) {
    switch (kind) {
        case VceKind::Classical: return "classical";
        case VceKind::HC0: return "hc0";
        case VceKind::HC1: return "hc1";
        case VceKind::HC3: return "hc3";
        case VceKind::Cluster: return "cluster";
    }
    return "?";
}

VceKind parse_vce(std::string_view name) {
    for (auto k : {VceKind::Classical, VceKind::HC0, VceKind::HC1, VceKind::HC3, VceKind::Cluster})
        if (name == to_string(k)) return k;
    throw ConfigError("unknown vce '" + std::string(name) + "' (expected classical, hc0, hc1, hc3, cluster)");
}

void TrimPolicy::validate() const {
    if (!(lower > 0.0 && lower < 0.5)) throw ConfigError("trim must lie in (0, 0.5)");
}

std::string_view to_string(AggregateMode mode) { return mode == AggregateMode::Median ? "median" : "mean"; }

AggregateMode parse_aggregate(std::string_view name) {
    if (name == "median") return AggregateMode::Median;
    if (name == "mean") return AggregateMode::Mean;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected median, mean)");
}

namespace {

constexpr double kDegenerate = 1e-12;

// Dense 0..G-1 group index per row, in order of first appearance.
std::vector<Index> cluster_groups(const Vce& vce, Index n, Index* groups) {
    if (!vce.cluster) throw ConfigError("vce cluster requires a cluster id column");
    const auto ids = *vce.cluster;
    if (static_cast<Index>(ids.size()) != n) throw DataError("cluster ids do not match the sample size");
    std::unordered_map<std::int64_t, Index> index;
    std::vector<Index> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        auto [it, inserted] = index.try_emplace(ids[static_cast<std::size_t>(i)], static_cast<Index>(index.size()));
        out[static_cast<std::size_t>(i)] = it->second;
    }
    *groups = static_cast<Index>(index.size());
    if (*groups < 2) throw DataError("cluster-robust variance needs at least 2 clusters");
    return out;
}

Matrix symmetric_inverse(const Matrix& m, const char* what) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(m);
    cod.setThreshold(kDegenerate);
    if (cod.rank() < m.cols()) throw DegenerateError(std::string(what) + " is singular");
    Matrix inv = cod.pseudoInverse();
    return (inv + inv.transpose()) / 2.0;
}

// Sandwich A * meat * A with regressors w and residuals e.
Matrix sandwich(const Matrix& w, const Vector& e, const Matrix& bread, const Vce& vce) {
    const Index n = w.rows(), k = w.cols();
    const double dof = static_cast<double>(n - k);
    auto need_dof = [&] {
        if (n - k <= 0) throw DegenerateError("no residual degrees of freedom");
    };
    switch (vce.kind) {
        case VceKind::Classical: {
            need_dof();
            return bread * (e.squaredNorm() / dof);
        }
        case VceKind::HC0:
        case VceKind::HC1: {
            const Matrix we = w.array().colwise() * e.array();
            Matrix v = bread * (we.transpose() * we) * bread;
            if (vce.kind == VceKind::HC1) {
                need_dof();
                v *= static_cast<double>(n) / dof;
            }
            return v;
        }
        case VceKind::HC3: {
            Vector u(n);
            for (Index i = 0; i < n; ++i) {
                const double h = w.row(i) * bread * w.row(i).transpose();
                if (h >= 1.0 - kDegenerate) throw DegenerateError("hc3: an observation has leverage 1");
                u[i] = e[i] / (1.0 - h);
            }
            const Matrix wu = w.array().colwise() * u.array();
            return bread * (wu.transpose() * wu) * bread;
        }
        case VceKind::Cluster: {
            need_dof();
            Index g_count = 0;
            const auto groups = cluster_groups(vce, n, &g_count);
            Matrix scores = Matrix::Zero(g_count, k);
            for (Index i = 0; i < n; ++i) scores.row(groups[static_cast<std::size_t>(i)]) += w.row(i) * e[i];
            const double g = static_cast<double>(g_count);
            const double factor = g / (g - 1.0) * (static_cast<double>(n) - 1.0) / dof;
            return factor * bread * (scores.transpose() * scores) * bread;
        }
    }
    return {};
}

Matrix with_constant(const Matrix& cols, bool constant) {
    if (!constant) return cols;
    Matrix out(cols.rows(), cols.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(cols.cols()) = cols;
    return out;
}

void check_length(Index n, Index got, const char* what) {
    if (got != n) throw DataError(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                                  std::to_string(n));
}

double column_ss(const Eigen::Ref<const Vector>& v, bool centered) {
    return centered ? (v.array() - v.mean()).matrix().squaredNorm() : v.squaredNorm();
}

// Every residualized column must retain variation relative to its inputs.
void require_variation(const Matrix& resid, const Matrix& raw, const Matrix& fitted, bool centered,
                       const std::string& what) {
    for (Index j = 0; j < resid.cols(); ++j) {
        const double scale = raw.col(j).squaredNorm() + fitted.col(j).squaredNorm();
        if (!(column_ss(resid.col(j), centered) > kDegenerate * scale))
            throw DegenerateError(what + " has zero variance after residualization");
    }
}

void require_binary(const Vector& v, const char* what) {
    for (Index i = 0; i < v.size(); ++i)
        if (v[i] != 0.0 && v[i] != 1.0) throw DataError(std::string(what) + " must be binary (0/1)");
}

Vector slopes(const Vector& coef, bool constant) { return constant ? Vector(coef.tail(coef.size() - 1)) : coef; }

Vector slope_se(const Matrix& vcov, bool constant) {
    const Vector diag = vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return constant ? Vector(diag.tail(diag.size() - 1)) : diag;
}

// Influence-function standard error of a mean-type estimator.
double influence_se(const Vector& phi, const Vce& vce) {
    const Index n = phi.size();
    const double nd = static_cast<double>(n);
    switch (vce.kind) {
        case VceKind::Classical:
        case VceKind::HC0: return std::sqrt(phi.squaredNorm()) / nd;
        case VceKind::HC1:
            if (n < 2) throw DegenerateError("no residual degrees of freedom");
            return std::sqrt(phi.squaredNorm() * nd / (nd - 1.0)) / nd;
        case VceKind::HC3: throw ConfigError("vce hc3 is only available for the partially linear and IV models");
        case VceKind::Cluster: {
            Index g_count = 0;
            const auto groups = cluster_groups(vce, n, &g_count);
            Vector sums = Vector::Zero(g_count);
            for (Index i = 0; i < n; ++i) sums[groups[static_cast<std::size_t>(i)]] += phi[i];
            const double g = static_cast<double>(g_count);
            return std::sqrt(g / (g - 1.0) * sums.squaredNorm()) / nd;
        }
    }
    return 0.0;
}

Vector trim_all(const Vector& p, const TrimPolicy& trim, Estimate& est) {
    trim.validate();
    Vector out(p.size());
    for (Index i = 0; i < p.size(); ++i) {
        if (p[i] < trim.lower) ++est.trimmed_low;
        if (p[i] > 1.0 - trim.lower) ++est.trimmed_high;
        out[i] = trim.apply(p[i]);
    }
    return out;
}

Estimate base_estimate(ModelKind model, Index n, const Vce& vce) {
    Estimate e;
    e.model = model;
    e.n_used = n;
    e.vce = vce.kind;
    return e;
}

std::vector<std::string> default_names(Index count) {
    std::vector<std::string> names;
    for (Index j = 0; j < count; ++j) names.push_back(count == 1 ? "D" : "D" + std::to_string(j + 1));
    return names;
}

// First-stage F of the single residualized regressor on the excluded instruments.
double first_stage_f(const Vector& d_res, const Matrix& z_exog, bool constant) {
    const Index n = d_res.size();
    const Index kz = z_exog.cols();
    const Index q = constant ? kz - 1 : kz;
    if (q < 1 || n - kz <= 0) return 0.0;
    const Vector fit = z_exog * z_exog.completeOrthogonalDecomposition().solve(d_res);
    const double rss_u = (d_res - fit).squaredNorm();
    const double rss_r = column_ss(d_res, constant);
    if (rss_u <= 0.0) return std::numeric_limits<double>::infinity();
    return ((rss_r - rss_u) / static_cast<double>(q)) / (rss_u / static_cast<double>(n - kz));
}

// Excluded instruments must be correlated with every residualized treatment.
void require_relevance(const Matrix& d_res, const Matrix& z_res, bool centered, const std::string& what) {
    Matrix dc = d_res, zc = z_res;
    if (centered) {
        dc = dc.rowwise() - dc.colwise().mean();
        zc = zc.rowwise() - zc.colwise().mean();
    }
    for (Index j = 0; j < dc.cols(); ++j) {
        const double nrm = dc.col(j).norm();
        if (nrm > 0.0) dc.col(j) /= nrm;
    }
    for (Index j = 0; j < zc.cols(); ++j) {
        const double nrm = zc.col(j).norm();
        if (nrm > 0.0) zc.col(j) /= nrm;
    }
    const Matrix cross = zc.transpose() * dc;
    const Eigen::JacobiSVD<Matrix> svd(cross);
    const auto& sv = svd.singularValues();
    if (sv.size() < d_res.cols() || !(sv.minCoeff() > kDegenerate))
        throw DegenerateError(what + ": instrument is uncorrelated with the residualized treatment (weak instrument)");
}

Estimate iv_estimate(ModelKind model, const Vector& y_res, const Matrix& d_res, const Matrix& z_res,
                     const Vce& vce, bool constant, std::vector<std::string> names) {
    const Index n = y_res.size();
    require_relevance(d_res, z_res, constant, std::string(to_string(model)));
    const Matrix x = with_constant(d_res, constant);
    const Matrix z = with_constant(z_res, constant);
    const LinearFit fit = tsls_fit(y_res, x, z, vce);
    Estimate est = base_estimate(model, n, vce);
    est.names = std::move(names);
    est.theta = slopes(fit.coef, constant);
    est.se = slope_se(fit.vcov, constant);
    if (d_res.cols() == 1) {
        est.first_stage_f = first_stage_f(d_res.col(0), z, constant);
        if (est.first_stage_f < 10.0)
            est.warnings.push_back("weak instrument: first-stage F = " + std::to_string(est.first_stage_f));
    }
    return est;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

}  // namespace

LinearFit ols_fit(const Vector& y, const Matrix& x, const Vce& vce) {
    check_length(x.rows(), y.size(), "outcome");
    const Matrix bread = symmetric_inverse(x.transpose() * x, "regressor cross-product");
    LinearFit fit;
    fit.coef = bread * (x.transpose() * y);
    fit.resid = y - x * fit.coef;
    fit.vcov = sandwich(x, fit.resid, bread, vce);
    return fit;
}

LinearFit tsls_fit(const Vector& y, const Matrix& x, const Matrix& z, const Vce& vce) {
    check_length(x.rows(), y.size(), "outcome");
    check_length(x.rows(), z.rows(), "instrument matrix");
    if (z.cols() < x.cols()) throw DataError("fewer instruments than regressors (underidentified)");
    const Matrix zz_inv = symmetric_inverse(z.transpose() * z, "instrument cross-product");
    const Matrix x_hat = z * (zz_inv * (z.transpose() * x));
    const Matrix bread = symmetric_inverse(x_hat.transpose() * x_hat, "first-stage projection");
    LinearFit fit;
    fit.coef = bread * (x_hat.transpose() * y);
    fit.resid = y - x * fit.coef;
    fit.vcov = sandwich(x_hat, fit.resid, bread, vce);
    return fit;
}

Estimate estimate_partial(const Vector& y, const Matrix& d, const Vector& l_hat, const Matrix& m_hat, const Vce& vce,
                          bool constant) {
    const Index n = y.size();
    check_length(n, d.rows(), "treatment");
    check_length(n, l_hat.size(), "l_hat");
    check_length(n, m_hat.rows(), "m_hat");
    if (m_hat.cols() != d.cols()) throw DataError("m_hat needs one column per treatment");
    const Matrix d_res = d - m_hat;
    require_variation(d_res, d, m_hat, constant, "residualized treatment");
    const Matrix x = with_constant(d_res, constant);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
    cod.setThreshold(kDegenerate);
    if (cod.rank() < x.cols()) throw DegenerateError("residualized treatments are collinear");
    const LinearFit fit = ols_fit(y - l_hat, x, vce);
    Estimate est = base_estimate(ModelKind::Partial, n, vce);
    est.names = default_names(d.cols());
    est.theta = slopes(fit.coef, constant);
    est.se = slope_se(fit.vcov, constant);
    return est;
}

Estimate estimate_ate(const Vector& y, const Vector& d, const Vector& g0, const Vector& g1, const Vector& m_hat,
                      const TrimPolicy& trim, const Vce& vce) {
    const Index n = y.size();
    check_length(n, d.size(), "treatment");
    check_length(n, g0.size(), "g0");
    check_length(n, g1.size(), "g1");
    check_length(n, m_hat.size(), "m_hat");
    require_binary(d, "treatment");
    const double treated = d.sum();
    if (treated == 0.0 || treated == static_cast<double>(n))
        throw DegenerateError("ate: overlap violated (all observations in one treatment arm)");
    Estimate est = base_estimate(ModelKind::Interactive, n, vce);
    est.names = {"ATE"};
    const Vector m = trim_all(m_hat, trim, est);
    Vector psi(n);
    for (Index i = 0; i < n; ++i)
        psi[i] = d[i] * (y[i] - g1[i]) / m[i] - (1.0 - d[i]) * (y[i] - g0[i]) / (1.0 - m[i]) + g1[i] - g0[i];
    const double theta = psi.mean();
    est.theta = Vector::Constant(1, theta);
    est.se = Vector::Constant(1, influence_se(psi.array() - theta, vce));
    return est;
}

Estimate estimate_atet(const Vector& y, const Vector& d, const Vector& g0, const Vector& m_hat,
                       const TrimPolicy& trim, const Vce& vce) {
    const Index n = y.size();
    check_length(n, d.size(), "treatment");
    check_length(n, g0.size(), "g0");
    check_length(n, m_hat.size(), "m_hat");
    require_binary(d, "treatment");
    const double p = d.mean();
    if (p == 0.0) throw DegenerateError("atet: no treated observations (treated share is 0)");
    Estimate est = base_estimate(ModelKind::Interactive, n, vce);
    est.names = {"ATET"};
    const Vector m = trim_all(m_hat, trim, est);
    Vector psi(n);
    for (Index i = 0; i < n; ++i) {
        const double r = y[i] - g0[i];
        psi[i] = d[i] * r / p - m[i] * (1.0 - d[i]) * r / (p * (1.0 - m[i]));
    }
    const double theta = psi.mean();
    est.theta = Vector::Constant(1, theta);
    est.se = Vector::Constant(1, influence_se(psi.array() - theta, vce));
    return est;
}

Estimate estimate_pliv(const Vector& y, const Matrix& d, const Matrix& z, const Vector& l_hat, const Matrix& m_hat,
                       const Matrix& r_hat, const Vce& vce, bool constant) {
    const Index n = y.size();
    check_length(n, d.rows(), "treatment");
    check_length(n, z.rows(), "instrument");
    check_length(n, l_hat.size(), "l_hat");
    check_length(n, m_hat.rows(), "m_hat");
    check_length(n, r_hat.rows(), "r_hat");
    if (m_hat.cols() != d.cols()) throw DataError("m_hat needs one column per treatment");
    if (r_hat.cols() != z.cols()) throw DataError("r_hat needs one column per instrument");
    if (z.cols() < d.cols()) throw DataError("iv needs at least as many instruments as treatments");
    const Matrix d_res = d - m_hat;
    const Matrix z_res = z - r_hat;
    require_variation(d_res, d, m_hat, constant, "residualized treatment");
    require_variation(z_res, z, r_hat, constant, "residualized instrument");
    return iv_estimate(ModelKind::IV, y - l_hat, d_res, z_res, vce, constant, default_names(d.cols()));
}

Estimate estimate_fiv(const Vector& y, const Vector& d, const Vector& l_hat, const Vector& p_hat,
                      const Vector& m_hat, const Vce& vce, bool constant) {
    const Index n = y.size();
    check_length(n, d.size(), "treatment");
    check_length(n, l_hat.size(), "l_hat");
    check_length(n, p_hat.size(), "p_hat");
    check_length(n, m_hat.size(), "m_hat");
    const Matrix d_res = d - m_hat;
    const Matrix inst = p_hat - m_hat;
    require_variation(d_res, d, m_hat, constant, "residualized treatment");
    require_variation(inst, p_hat, m_hat, constant, "constructed instrument p - m");
    return iv_estimate(ModelKind::FIV, y - l_hat, d_res, inst, vce, constant, {"D"});
}

Estimate estimate_late(const Vector& y, const Vector& d, const Vector& z, const Vector& l0, const Vector& l1,
                       const Vector& p0, const Vector& p1, const Vector& r_hat, const TrimPolicy& trim,
                       const Vce& vce) {
    const Index n = y.size();
    for (auto [v, what] : {std::pair{&d, "treatment"}, {&z, "instrument"}, {&l0, "l0"}, {&l1, "l1"}, {&p0, "p0"},
                           {&p1, "p1"}, {&r_hat, "r_hat"}})
        check_length(n, v->size(), what);
    require_binary(d, "treatment");
    require_binary(z, "instrument");
    Estimate est = base_estimate(ModelKind::InteractiveIV, n, vce);
    est.names = {"LATE"};
    const Vector r = trim_all(r_hat, trim, est);
    Vector num(n), den(n);
    for (Index i = 0; i < n; ++i) {
        num[i] = z[i] * (y[i] - l1[i]) / r[i] - (1.0 - z[i]) * (y[i] - l0[i]) / (1.0 - r[i]) + l1[i] - l0[i];
        den[i] = z[i] * (d[i] - p1[i]) / r[i] - (1.0 - z[i]) * (d[i] - p0[i]) / (1.0 - r[i]) + p1[i] - p0[i];
    }
    const double den_mean = den.mean();
    const double scale = den.cwiseAbs().mean();
    if (!(den_mean > kDegenerate * std::max(scale, 1e-300)))
        throw DegenerateError("late: denominator mean is not positive (weak or reversed instrument)");
    const double theta = num.mean() / den_mean;
    const Vector phi = (num - theta * den) / den_mean;
    est.theta = Vector::Constant(1, theta);
    est.se = Vector::Constant(1, influence_se(phi, vce));
    return est;
}

Estimate aggregate_reps(const std::vector<Estimate>& reps, AggregateMode mode) {
    if (reps.empty()) throw DegenerateError("cannot aggregate zero repetitions");
    const Index p = reps.front().theta.size();
    for (const auto& r : reps)
        if (r.theta.size() != p || r.se.size() != p) throw DataError("repetitions disagree on coefficient count");
    Estimate out = reps.front();
    out.tag = mode == AggregateMode::Median ? "md" : "mn";
    out.rep = -1;
    out.warnings.clear();
    for (Index j = 0; j < p; ++j) {
        std::vector<double> th;
        for (const auto& r : reps) th.push_back(r.theta[j]);
        double center = 0.0;
        if (mode == AggregateMode::Median) {
            center = median_of(th);
        } else {
            for (double t : th) center += t;
            center /= static_cast<double>(th.size());
        }
        std::vector<double> terms;
        for (const auto& r : reps) terms.push_back(r.se[j] * r.se[j] + (r.theta[j] - center) * (r.theta[j] - center));
        double spread = 0.0;
        if (mode == AggregateMode::Median) {
            spread = median_of(terms);
        } else {
            double inv = 0.0;
            bool zero = false;
            for (double t : terms) {
                if (t == 0.0) zero = true;
                inv += 1.0 / t;
            }
            spread = zero ? 0.0 : static_cast<double>(terms.size()) / inv;
        }
        out.theta[j] = center;
        out.se[j] = std::sqrt(spread);
    }
    return out;
}

}  // namespace ddml
