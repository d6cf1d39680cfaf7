#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddml/data.hpp"
#include "ddml/estimators.hpp"
#include "ddml/pipeline.hpp"

namespace ddml {

/// Partially linear design Y = theta0 D + c_Y g(X) + s_Y e, D = c_D g(X) + s_D u
/// with X ~ N(0, Sigma), Sigma_ij = 0.5^|i-j|.
struct DgpSpec {
    int dgp = 1;  // 1..5
    Index n = 1000;
    double theta0 = 0.5;
    Index p = 0;  // 0 -> 50 (DGPs 1-4) or 7 (DGP 5)
    std::uint64_t seed = 0;
    double noise = 1.0;  // scales the outcome error; 0 makes Y exact given (D, g)

    Index resolved_p() const;
    void validate() const;  // throws ConfigError
};

/// g(x) for one row of controls.
double dgp_g(int dgp, const Eigen::Ref<const Vector>& x);

struct Calibration {
    double c_d = 0.0;
    double c_y = 0.0;
    double var_g = 0.0;
};

/// Constants giving R^2 ~ 0.5 in both equations, computed once per
/// (dgp, p, theta0) on a fixed 10^5-draw sample and cached.
Calibration calibrate(int dgp, Index p, double theta0);

struct SimData {
    Dataset data;
    Vector g;   // g(X)
    Vector m0;  // E[D|X] = c_D g
    Vector l0;  // E[Y|X] = (theta0 c_D + c_Y) g
    Vector sigma_d;
    Vector sigma_y;
    Calibration calibration;
};

SimData gen_dgp(const DgpSpec& spec);

/// Infeasible benchmark: OLS of Y on (1, D, g(X)) with HC1 errors.
Estimate oracle_estimate(const SimData& sim);

/// Full-sample OLS of Y on (1, D, X) with HC1 errors.
Estimate ols_estimate(const SimData& sim);

struct McRow {
    std::string label;
    double mab = 0.0;       // median |theta_hat - theta0|
    double coverage = 0.0;  // share of 95% intervals containing theta0
    int reps_ok = 0;
    int failures = 0;
    std::vector<double> theta;  // NaN for failed replications
    std::vector<double> se;
};

struct McReport {
    DgpSpec dgp;
    int reps = 0;
    std::uint64_t seed = 0;
    std::vector<McRow> rows;
    std::vector<std::string> failures;

    const McRow* find(const std::string& label) const;
};

struct McOptions {
    int reps = 100;
    std::uint64_t seed = 0;
    bool oracle = true;
    bool ols = true;
    bool ddml = true;       // run the pipeline; rows for every estimate label
    PipelineSpec pipeline;  // k <= 0 selects 20 for n = 100, else 5
    int threads = 1;        // across replications
};

/// Monte Carlo over fresh datasets. Replication r draws its data and its
/// pipeline seed from (seed, r), so results are independent of scheduling.
McReport run_mc(const DgpSpec& dgp, const McOptions& options);

/// One row per replication and estimator: rep, label, theta, se.
void write_mc_csv(const std::filesystem::path& path, const McReport& report);

}  // namespace ddml
