#include "ddml/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>

#include "ddml/error.hpp"
#include "ddml/parallel.hpp"
#include "ddml/random.hpp"

namespace ddml {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr Index kCalibrationDraws = 100000;
constexpr std::uint64_t kCalibrationSeed = 0xCA1B2A7EULL;

Matrix draw_controls(Index n, Index p, Rng& rng) {
    Matrix sigma(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) sigma(i, j) = std::pow(0.5, static_cast<double>(std::abs(i - j)));
    const Matrix chol = sigma.llt().matrixL();
    Matrix z(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    return z * chol.transpose();
}

Vector g_of(int dgp, const Matrix& x) {
    Vector g(x.rows());
    for (Index i = 0; i < x.rows(); ++i) g[i] = dgp_g(dgp, x.row(i).transpose());
    return g;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

Estimate hc1_ols(const SimData& sim, const Matrix& controls, const std::string& label) {
    const Index n = sim.data.n();
    Matrix x(n, 2 + controls.cols());
    x.col(0).setOnes();
    x.col(1) = sim.data.d.col(0);
    x.rightCols(controls.cols()) = controls;
    const LinearFit fit = ols_fit(sim.data.y, x, Vce{VceKind::HC1, std::nullopt});
    Estimate est;
    est.model = ModelKind::Partial;
    est.label = label;
    est.names = {"D"};
    est.theta = Vector::Constant(1, fit.coef[1]);
    est.se = Vector::Constant(1, std::sqrt(std::max(fit.vcov(1, 1), 0.0)));
    est.n_used = n;
    est.vce = VceKind::HC1;
    return est;
}

}  // namespace

Index DgpSpec::resolved_p() const { return p > 0 ? p : (dgp == 5 ? 7 : 50); }

void DgpSpec::validate() const {
    if (dgp < 1 || dgp > 5) throw ConfigError("dgp must be 1..5, got " + std::to_string(dgp));
    if (n < 2) throw ConfigError("n must be >= 2");
    if (!std::isfinite(theta0)) throw ConfigError("theta0 must be finite");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be finite and >= 0");
    const Index need = dgp == 2 ? 13 : dgp == 3 ? 3 : dgp == 1 ? 1 : 7;
    if (resolved_p() < need)
        throw ConfigError("dgp " + std::to_string(dgp) + " needs p >= " + std::to_string(need));
}

double dgp_g(int dgp, const Eigen::Ref<const Vector>& x) {
    auto X = [&](int j) { return x[j - 1]; };  // 1-based, as in the design formulas
    switch (dgp) {
        case 1: {
            double g = 0.0, w = 1.0;
            for (Index j = 0; j < x.size(); ++j) {
                w *= 0.9;
                g += w * x[j];
            }
            return g;
        }
        case 2:
            return X(1) * X(2) + X(3) * X(3) + X(4) * X(5) + X(6) * X(7) + X(8) * X(9) + X(10) + X(11) * X(11) +
                   X(12) * X(13);
        case 3: return (X(1) > 0.3 && X(2) > 0.0 && X(3) > -1.0) ? 1.0 : 0.0;
        case 4:
        case 5:
            return X(1) + std::sqrt(std::abs(X(2))) + std::sin(X(3)) + 0.3 * X(4) * X(5) + X(6) + 0.3 * X(7) * X(7);
        default: throw ConfigError("dgp must be 1..5, got " + std::to_string(dgp));
    }
}

Calibration calibrate(int dgp, Index p, double theta0) {
    static std::mutex mutex;
    static std::map<std::tuple<int, Index, double>, Calibration> cache;
    const auto key = std::make_tuple(dgp, p, theta0);
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    Rng rng(derive_seed({kCalibrationSeed, static_cast<std::uint64_t>(dgp), static_cast<std::uint64_t>(p)}));
    const Vector g = g_of(dgp, draw_controls(kCalibrationDraws, p, rng));
    Calibration cal;
    cal.var_g = (g.array() - g.mean()).square().mean();
    if (!(cal.var_g > 0.0)) throw DegenerateError("calibration: g(X) has zero variance");
    // Unit-mean noise variances: c_D^2 Var(g) = 1, and the Y signal
    // (theta0 c_D + c_Y) g + theta0 s_D u must carry variance 1.
    cal.c_d = 1.0 / std::sqrt(cal.var_g);
    const double signal = std::max(1.0 - theta0 * theta0, 0.0);
    cal.c_y = std::sqrt(signal / cal.var_g) - theta0 * cal.c_d;
    std::lock_guard lock(mutex);
    cache.emplace(key, cal);
    return cal;
}

SimData gen_dgp(const DgpSpec& spec) {
    spec.validate();
    const Index n = spec.n, p = spec.resolved_p();
    SimData sim;
    sim.calibration = calibrate(spec.dgp, p, spec.theta0);
    const auto& cal = sim.calibration;

    Rng rng(derive_seed({spec.seed, 0xD69ULL, static_cast<std::uint64_t>(spec.dgp)}));
    Matrix x = draw_controls(n, p, rng);
    Vector u(n), e(n);
    for (Index i = 0; i < n; ++i) u[i] = rng.normal();
    for (Index i = 0; i < n; ++i) e[i] = rng.normal();

    sim.g = g_of(spec.dgp, x);
    const Vector one_g = (1.0 + sim.g.array()).matrix();
    sim.sigma_d = one_g.cwiseAbs() / std::sqrt(one_g.squaredNorm() / static_cast<double>(n));
    Vector d = cal.c_d * sim.g + sim.sigma_d.cwiseProduct(u);
    const Vector one_dg = (1.0 + spec.theta0 * d.array() + sim.g.array()).matrix();
    sim.sigma_y = one_dg.cwiseAbs() / std::sqrt(one_dg.squaredNorm() / static_cast<double>(n));
    Vector y = spec.theta0 * d + cal.c_y * sim.g + spec.noise * sim.sigma_y.cwiseProduct(e);

    sim.m0 = cal.c_d * sim.g;
    sim.l0 = (spec.theta0 * cal.c_d + cal.c_y) * sim.g;

    auto& data = sim.data;
    data.y = std::move(y);
    data.d = std::move(d);
    data.x = std::move(x);
    data.z = Matrix(n, 0);
    data.names.y = "y";
    data.names.d = {"d"};
    for (Index j = 0; j < p; ++j) data.names.x.push_back("x" + std::to_string(j + 1));
    return sim;
}

Estimate oracle_estimate(const SimData& sim) { return hc1_ols(sim, sim.g, "oracle"); }

Estimate ols_estimate(const SimData& sim) { return hc1_ols(sim, sim.data.x, "ols"); }

const McRow* McReport::find(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return &r;
    return nullptr;
}

McReport run_mc(const DgpSpec& dgp, const McOptions& options) {
    dgp.validate();
    if (options.reps < 1) throw ConfigError("reps must be >= 1");
    McReport report;
    report.dgp = dgp;
    report.reps = options.reps;
    report.seed = options.seed;

    PipelineSpec base = options.pipeline;
    if (base.k <= 0) base.k = dgp.n == 100 ? 20 : 5;
    if (options.threads > 1) base.threads = 1;
    if (options.ddml && base.learners.empty() && base.cef_learners.empty())
        throw ConfigError("simulate: the ddml estimator needs at least one learner");

    struct RepOut {
        std::vector<std::pair<std::string, std::pair<double, double>>> values;
        std::string failure;
    };
    std::vector<RepOut> outs(static_cast<std::size_t>(options.reps));
    const std::string agg_tag = base.aggregate == AggregateMode::Median ? "md" : "mn";

    parallel_for(outs.size(), options.threads, [&](std::size_t r) {
        auto& out = outs[r];
        DgpSpec spec = dgp;
        spec.seed = derive_seed({options.seed, 0x5EEDULL, static_cast<std::uint64_t>(r)});
        const SimData sim = gen_dgp(spec);
        auto add = [&](const Estimate& e) { out.values.push_back({e.label, {e.theta[0], e.se[0]}}); };
        if (options.oracle) add(oracle_estimate(sim));
        if (options.ols) add(ols_estimate(sim));
        if (!options.ddml) return;
        PipelineSpec ps = base;
        ps.seed = derive_seed({options.seed, 0xCFULL, static_cast<std::uint64_t>(r)});
        try {
            const PipelineResult res = run_pipeline(sim.data, ps);
            for (const auto& e : res.aggregates)
                if (e.tag == agg_tag) add(e);
        } catch (const Error& e) {
            out.failure = "replication " + std::to_string(r + 1) + ": " + e.what();
        }
    });

    std::vector<std::string> labels;
    for (const auto& out : outs)
        for (const auto& [label, v] : out.values)
            if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
    for (const auto& label : labels) {
        McRow row;
        row.label = label;
        std::vector<double> abs_bias;
        int covered = 0;
        for (const auto& out : outs) {
            double th = kNaN, se = kNaN;
            for (const auto& [l, v] : out.values)
                if (l == label) std::tie(th, se) = v;
            row.theta.push_back(th);
            row.se.push_back(se);
            if (std::isnan(th)) {
                ++row.failures;
                continue;
            }
            ++row.reps_ok;
            abs_bias.push_back(std::abs(th - dgp.theta0));
            if (std::abs(th - dgp.theta0) <= 1.96 * se) ++covered;
        }
        if (row.reps_ok > 0) {
            row.mab = median_of(abs_bias);
            row.coverage = static_cast<double>(covered) / row.reps_ok;
        } else {
            row.mab = kNaN;
            row.coverage = kNaN;
        }
        report.rows.push_back(std::move(row));
    }
    for (const auto& out : outs)
        if (!out.failure.empty()) report.failures.push_back(out.failure);
    return report;
}

void write_mc_csv(const std::filesystem::path& path, const McReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "rep,estimator,theta,se\n";
    for (int r = 0; r < report.reps; ++r)
        for (const auto& row : report.rows)
            out << r + 1 << ',' << row.label << ',' << format_double(row.theta[static_cast<std::size_t>(r)]) << ','
                << format_double(row.se[static_cast<std::size_t>(r)]) << '\n';
}

}  // namespace ddml
