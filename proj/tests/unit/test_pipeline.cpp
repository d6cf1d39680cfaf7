#include <doctest.h>

#include "ddml/error.hpp"
#include "ddml/pipeline.hpp"
#include "ddml/simulate.hpp"
#include "helpers.hpp"

using namespace ddml;
using namespace testutil;

namespace {

std::shared_ptr<const Learner> preset(const char* name) { return make_learner(preset_learner(name)); }

std::shared_ptr<const Learner> small_rf(const char* name = "rf-medium") {
    LearnerSpec s = preset_learner(name);
    s.forest.n_trees = 40;
    return make_learner(s);
}

std::size_t count_rep(const PipelineResult& r, int rep) {
    std::size_t c = 0;
    for (const auto& e : r.estimates) c += e.rep == rep;
    return c;
}

}  // namespace

TEST_CASE("one learner per CEF gives one specification with opt equal to it") {
    const Dataset data = linear_dataset(120, 3, 1);
    PipelineSpec spec;
    spec.learners = {preset("ols")};
    spec.combos = Combos::All;
    const auto r = run_pipeline(data, spec);
    REQUIRE(r.estimates.size() == 2);
    const Estimate* only = r.find("ols", 0);
    const Estimate* opt = r.find("opt", 0);
    REQUIRE(only);
    REQUIRE(opt);
    CHECK(only->theta == opt->theta);
    CHECK(only->se == opt->se);
    CHECK(r.aggregate("opt", "md")->theta == opt->theta);
}

TEST_CASE("two learners with all combinations give four specifications plus ss") {
    const Dataset data = linear_dataset(150, 3, 2);
    PipelineSpec spec;
    spec.learners = {preset("ols"), preset("lassocv")};
    spec.combos = Combos::All;
    spec.shortstack = true;
    spec.reps = 2;
    const auto r = run_pipeline(data, spec);
    for (int rep = 0; rep < 2; ++rep) CHECK(count_rep(r, rep) == 4 + 2);  // combos, opt, ss
    for (const char* label : {"ols", "lassocv", "ols/lassocv", "lassocv/ols", "opt", "ss"}) {
        CAPTURE(label);
        CHECK(r.find(label, 1) != nullptr);
        CHECK(r.aggregate(label, "md") != nullptr);
        CHECK(r.aggregate(label, "mn") != nullptr);
    }
    spec.combos = Combos::Diagonal;
    CHECK(count_rep(run_pipeline(data, spec), 0) == 2 + 2);
    spec.combos = Combos::None;
    CHECK(count_rep(run_pipeline(data, spec), 0) == 2);
}

TEST_CASE("short-stack MSPE is at most every learner's MSPE on a nonlinear design") {
    const SimData sim = gen_dgp({.dgp = 2, .n = 400, .seed = 3});
    PipelineSpec spec;
    spec.learners = {preset("ols"), preset("lassocv"), small_rf()};
    spec.shortstack = true;
    spec.seed = 5;
    const auto r = run_pipeline(sim.data, spec);
    const auto rows = mspe_report(r.crossfit);
    for (const auto& ss : rows) {
        if (ss.learner != "ss") continue;
        for (const auto& base : rows)
            if (base.cef == ss.cef && base.rep == ss.rep && base.learner != "ss")
                CHECK(ss.mspe <= base.mspe + 1e-12);
    }
}

TEST_CASE("opt picks the minimum-MSPE learner for every CEF and repetition") {
    const SimData sim = gen_dgp({.dgp = 3, .n = 300, .seed = 4});
    PipelineSpec spec;
    spec.learners = {preset("ols"), small_rf("rf-high"), preset("ridgecv")};
    spec.reps = 3;
    const auto r = run_pipeline(sim.data, spec);
    const auto rows = mspe_report(r.crossfit);
    for (int rep = 0; rep < 3; ++rep) {
        const Estimate* opt = r.find("opt", rep);
        REQUIRE(opt);
        for (std::size_t s = 0; s < r.crossfit.slots.size(); ++s) {
            std::string best;
            double best_mspe = std::numeric_limits<double>::infinity();
            for (const auto& row : rows)
                if (row.cef == r.crossfit.slot_labels[s] && row.rep == rep && row.mspe < best_mspe) {
                    best_mspe = row.mspe;
                    best = row.learner;
                }
            CHECK(opt->learners[s] == best);
        }
    }
}

TEST_CASE("identical specs rerun bit-identically, serial or threaded") {
    const SimData sim = gen_dgp({.dgp = 4, .n = 200, .seed = 6});
    PipelineSpec spec;
    LearnerSpec gb = preset_learner("gb-medium");
    gb.boost.n_trees = 60;
    spec.learners = {preset("ridgecv"), small_rf(), make_learner(gb)};
    spec.shortstack = true;
    spec.stacking = StackingMode::CLS;
    spec.stack_folds = 3;
    spec.reps = 2;
    spec.seed = 99;
    const auto a = run_pipeline(sim.data, spec);
    const auto b = run_pipeline(sim.data, spec);
    spec.threads = 3;
    const auto c = run_pipeline(sim.data, spec);
    REQUIRE(a.estimates.size() == b.estimates.size());
    REQUIRE(a.estimates.size() == c.estimates.size());
    for (std::size_t i = 0; i < a.estimates.size(); ++i) {
        CHECK(a.estimates[i].label == b.estimates[i].label);
        CHECK(a.estimates[i].theta == b.estimates[i].theta);
        CHECK(a.estimates[i].se == b.estimates[i].se);
        CHECK(a.estimates[i].theta == c.estimates[i].theta);
        CHECK(a.estimates[i].se == c.estimates[i].se);
    }
    CHECK(a.folds.assignment == c.folds.assignment);
    spec.seed = 100;
    CHECK(run_pipeline(sim.data, spec).estimates[0].theta != a.estimates[0].theta);
}

TEST_CASE("every model kind runs end to end") {
    Rng rng(7);
    const Index n = 300;
    Dataset data;
    data.x = normal_matrix(n, 3, rng);
    data.z = Matrix(n, 1);
    data.d = Matrix(n, 1);
    data.y = Vector(n);
    for (Index i = 0; i < n; ++i) {
        data.z(i, 0) = rng.uniform() < 0.5 ? 1.0 : 0.0;
        const double latent = 0.4 * data.x(i, 0) + 1.2 * data.z(i, 0) - 0.6 + rng.normal();
        data.d(i, 0) = latent > 0 ? 1.0 : 0.0;
        data.y(i) = 0.5 * data.d(i, 0) + data.x(i, 1) + 0.5 * rng.normal();
    }
    data.names = {"y", {"d"}, {"a", "b", "c"}, {"z"}, std::nullopt};
    for (ModelKind model : {ModelKind::Partial, ModelKind::Interactive, ModelKind::IV, ModelKind::FIV,
                            ModelKind::InteractiveIV}) {
        CAPTURE(to_string(model));
        Dataset local = data;
        if (!needs_instruments(model)) {
            local.z.resize(n, 0);
            local.names.z.clear();
        }
        PipelineSpec spec;
        spec.model = model;
        spec.learners = {preset("ols"), preset("lassocv")};
        spec.shortstack = true;
        const auto r = run_pipeline(local, spec);
        const Estimate* ss = r.aggregate("ss", "md");
        REQUIRE(ss);
        CHECK(std::isfinite(ss->theta[0]));
        CHECK(ss->se[0] > 0.0);
        CHECK(std::abs(ss->theta[0] - 0.5) < 6.0 * ss->se[0]);
    }
}

TEST_CASE("per-CEF learner overrides and imported folds") {
    const Dataset data = linear_dataset(60, 2, 8);
    PipelineSpec spec;
    spec.learners = {preset("ols")};
    spec.cef_learners[CefKind::DgivenX] = {preset("ridgecv")};
    Eigen::MatrixXi ids(60, 1);
    for (Index i = 0; i < 60; ++i) ids(i, 0) = static_cast<int>(i % 3) + 1;
    spec.fold_ids = ids;
    const auto r = run_pipeline(data, spec);
    CHECK(r.folds.k == 3);
    CHECK(r.folds.imported);
    const Estimate* opt = r.find("opt", 0);
    REQUIRE(opt);
    CHECK(opt->learners == std::vector<std::string>{"ols", "ridgecv"});

    spec.fold_ids = Eigen::MatrixXi::Ones(59, 1);
    CHECK_THROWS_AS(run_pipeline(data, spec), DataError);
}

TEST_CASE("errors carry the failing step") {
    Dataset data = linear_dataset(40, 2, 9);
    data.d.col(0) = data.x.col(0);  // D is an exact linear function of X
    PipelineSpec spec;
    spec.learners = {preset("ols")};
    try {
        (void)run_pipeline(data, spec);
        FAIL("expected DegenerateError");
    } catch (const DegenerateError& e) {
        CHECK(std::string(e.what()).find("step estimate") != std::string::npos);
    }
}
