#include <doctest.h>

#include <algorithm>
#include <set>

#include "ddml/crossfit.hpp"
#include "ddml/error.hpp"
#include "helpers.hpp"
#include "instrumented.hpp"

using namespace ddml;
using namespace testutil;

namespace {

std::vector<int> sorted_ids(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<int> as_ints(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

/// Every out-of-sample value of every (CEF, learner, rep) came from a model
/// trained on exactly the other folds (within the arm), and every fold model
/// predicted exactly its own fold.
void check_no_leakage(const Dataset& data, ModelKind model, const CrossFitResult& res, const FoldAssignment& folds,
                      FitLog& log) {
    std::vector<int> prediction_count(static_cast<std::size_t>(data.n()), 0);
    for (const auto& e : log.entries)
        for (int id : e.predicted_ids) ++prediction_count[static_cast<std::size_t>(id)];

    std::size_t oos_models = 0;
    for (std::size_t s = 0; s < res.slots.size(); ++s) {
        const CefProblem problem = make_problem(data, res.slots[s]);
        const bool fiv_m = model == ModelKind::FIV && res.slots[s].kind == CefKind::DgivenX;
        for (int r = 0; r < res.reps; ++r)
            for (const auto& fit : res.fits[s][static_cast<std::size_t>(r)]) {
                std::set<int> serials;
                for (Index i = 0; i < data.n(); ++i) {
                    const int serial = FitLog::serial_of(fit.oos(i));
                    REQUIRE(FitLog::id_of(fit.oos(i)) == i);
                    serials.insert(serial);
                    const auto& e = log.entries[static_cast<std::size_t>(serial)];
                    const int fold = folds.fold_of(i, r);
                    auto train = folds.complement(fold, r);
                    if (!problem.arm.empty())
                        std::erase_if(train, [&](Index t) { return !problem.arm[static_cast<std::size_t>(t)]; });
                    CHECK(sorted_ids(e.train_ids) == as_ints(train));
                    CHECK(std::find(e.train_ids.begin(), e.train_ids.end(), i) == e.train_ids.end());
                    if (!fiv_m)
                        for (std::size_t t = 0; t < e.train_ids.size(); ++t)
                            CHECK(e.train_targets[t] == problem.target(e.train_ids[t]));
                    auto predicted = sorted_ids(e.predicted_ids);
                    if (res.slots[s].kind == CefKind::DgivenXZ && model == ModelKind::FIV) {
                        // Out-of-sample on I_k plus in-sample on I_k^c: each row once.
                        std::vector<int> all(static_cast<std::size_t>(data.n()));
                        for (int a = 0; a < data.n(); ++a) all[static_cast<std::size_t>(a)] = a;
                        CHECK(predicted == all);
                    } else {
                        CHECK(predicted == as_ints(folds.members(fold, r)));
                    }
                }
                CHECK(serials.size() == static_cast<std::size_t>(folds.k));
                oos_models += serials.size();
            }
    }
    CHECK(oos_models == log.entries.size());
    // Each row predicted once per (CEF, learner, rep); the FIV D|X,Z models
    // also predict their training rows, once each.
    std::size_t expected = 0;
    for (std::size_t s = 0; s < res.slots.size(); ++s) {
        const bool fiv_p = model == ModelKind::FIV && res.slots[s].kind == CefKind::DgivenXZ;
        expected += res.learners[s].size() * static_cast<std::size_t>(res.reps) *
                    (fiv_p ? static_cast<std::size_t>(folds.k) : 1);
    }
    for (int c : prediction_count) CHECK(static_cast<std::size_t>(c) == expected);
}

}  // namespace

TEST_CASE("no model sees its own fold, for every model kind") {
    const auto folds = assign_folds(60, 4, 2, 9);
    for (ModelKind model : {ModelKind::Partial, ModelKind::Interactive, ModelKind::IV, ModelKind::FIV,
                            ModelKind::InteractiveIV}) {
        CAPTURE(to_string(model));
        Dataset data = id_dataset(60, 1);
        if (!needs_instruments(model)) {
            data.z.resize(60, 0);
            data.names.z.clear();
        }
        FitLog log;
        const auto a = std::make_shared<RecordingLearner>("a", log);
        const auto b = std::make_shared<RecordingLearner>("b", log);
        const auto slots = model_slots(data, model);
        std::vector<std::vector<std::shared_ptr<const Learner>>> sets(slots.size(), {a, b});
        CrossFitOptions opt;
        opt.seed = 3;
        opt.threads = 2;
        const auto res = crossfit_all(data, model, sets, folds, opt);
        check_no_leakage(data, model, res, folds, log);
    }
}

TEST_CASE("flexible IV: D|X is trained on the in-sample D|X,Z predictions") {
    const Dataset data = id_dataset(40, 2);
    const auto folds = assign_folds(data.n(), 5, 1, 4);
    FitLog log;
    const RecordingLearner learner("rec", log);
    const auto fit = crossfit_fiv(data, learner, 0, folds, 0, 1);
    REQUIRE(fit.p.insample.size() == 5);
    for (int k = 1; k <= 5; ++k) {
        const auto train = folds.complement(k, 0);
        const auto test = folds.members(k, 0);
        const Vector& ins = fit.p.insample[static_cast<std::size_t>(k - 1)];
        for (Index i : test) CHECK(std::isnan(ins(i)));
        const int p_serial = FitLog::serial_of(ins(train.front()));
        const int m_serial = FitLog::serial_of(fit.m.oos(test.front()));
        CHECK(p_serial != m_serial);
        const auto& pe = log.entries[static_cast<std::size_t>(p_serial)];
        const auto& me = log.entries[static_cast<std::size_t>(m_serial)];
        CHECK(pe.feature_cols == 3);
        CHECK(me.feature_cols == 2);
        // The p model is the one that produced the out-of-sample p on I_k.
        for (Index i : test) CHECK(FitLog::serial_of(fit.p.oos(i)) == p_serial);
        for (Index i : train) CHECK(FitLog::serial_of(ins(i)) == p_serial);
        // Step (c): the m target is the in-sample p, row for row.
        REQUIRE(me.train_ids.size() == train.size());
        for (std::size_t t = 0; t < train.size(); ++t) {
            CHECK(me.train_ids[t] == train[t]);
            CHECK(me.train_targets[t] == ins(train[t]));
        }
        for (Index i : test) CHECK(FitLog::serial_of(fit.m.oos(i)) == m_serial);
    }
}

TEST_CASE("flexible IV short-stack stages use in-sample p and then p*") {
    Dataset data = id_dataset(50, 3);
    const auto folds = assign_folds(data.n(), 5, 1, 5);
    FitLog log;
    // Replace the decoded ids by smooth predictions so CLS has work to do.
    const auto ols = make_learner(preset_learner("ols"));
    const auto ridge = make_learner(preset_learner("ridgecv"));
    Rng rng(7);
    for (Index i = 0; i < data.n(); ++i) data.d(i, 0) = data.z(i, 0) + 0.5 * data.x(i, 1) + rng.normal();
    CrossFitOptions opt;
    opt.shortstack = true;
    const auto slots = model_slots(data, ModelKind::FIV);
    std::vector<std::vector<std::shared_ptr<const Learner>>> sets(slots.size(), {ols, ridge});
    const auto res = crossfit_all(data, ModelKind::FIV, sets, folds, opt);
    const Index ps = res.slot_index(CefKind::DgivenXZ), ms = res.slot_index(CefKind::DgivenX);
    const auto& pfits = res.fits[static_cast<std::size_t>(ps)][0];
    const auto& mfits = res.fits[static_cast<std::size_t>(ms)][0];
    const auto& pss = res.shortstack[static_cast<std::size_t>(ps)][0];
    // First weight set is the full-sample stack; then one per fold.
    REQUIRE(pss.weights.size() == 6);
    Vector pstar = Vector::Zero(data.n());
    for (int k = 1; k <= 5; ++k) {
        const auto train = folds.complement(k, 0);
        const auto test = folds.members(k, 0);
        Matrix tilde(static_cast<Index>(train.size()), 2);
        for (int j = 0; j < 2; ++j)
            tilde.col(j) = pfits[static_cast<std::size_t>(j)].insample[static_cast<std::size_t>(k - 1)](train);
        const auto wk = cls_weights(tilde, data.d.col(0)(train));
        CHECK((wk.weights - pss.weights[static_cast<std::size_t>(k)].weights).cwiseAbs().maxCoeff() < 1e-12);
        for (Index i : test)
            pstar(i) = pfits[0].oos(i) * wk.weights(0) + pfits[1].oos(i) * wk.weights(1);
    }
    CHECK((pstar - res.fiv_pstar_oos[0]).cwiseAbs().maxCoeff() < 1e-12);
    Matrix pm(data.n(), 2);
    pm << mfits[0].oos, mfits[1].oos;
    const auto wm = short_stack(pm, pstar);
    const auto& mss = res.shortstack[static_cast<std::size_t>(ms)][0];
    CHECK((mss.weights.front().weights - wm.weights).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((mss.oos - pm * wm.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("split kinds train on their arm but predict every row") {
    const Dataset data = id_dataset(30, 4);
    const auto folds = assign_folds(data.n(), 3, 1, 1);
    FitLog log;
    const RecordingLearner learner("rec", log);
    const auto fit = crossfit_cef(data, {CefKind::YgivenXD1, 0}, learner, 0, folds, 0, 1);
    for (const auto& e : log.entries)
        for (int id : e.train_ids) CHECK(data.d(id, 0) == 1.0);
    CHECK(fit.oos.allFinite());
    Index arm = 0;
    for (Index i = 0; i < data.n(); ++i) arm += data.d(i, 0) == 1.0;
    Index counted = 0;
    for (Index c : fit.fold_count) counted += c;
    CHECK(counted == arm);
}

TEST_CASE("cross-fitted OLS equals OLS fit on the complement") {
    const Dataset data = linear_dataset(50, 3, 5);
    const auto folds = assign_folds(data.n(), 5, 1, 2);
    const BuiltinLearner ols(preset_learner("ols"));
    const auto fit = crossfit_cef(data, {CefKind::YgivenX, 0}, ols, 0, folds, 0, 1);
    for (int k = 1; k <= 5; ++k) {
        const auto train = folds.complement(k, 0);
        const auto test = folds.members(k, 0);
        const Matrix xt = data.x(train, Eigen::all);
        Matrix a(xt.rows(), xt.cols() + 1);
        a << Vector::Ones(xt.rows()), xt;
        const Vector beta = a.colPivHouseholderQr().solve(data.y(train));
        for (Index i : test) {
            const double expect = beta(0) + data.x.row(i).dot(beta.tail(3));
            CHECK(fit.oos(i) == doctest::Approx(expect).epsilon(1e-10));
        }
    }
}

TEST_CASE("MSPE is the count-weighted average of fold MSPEs") {
    const Dataset data = linear_dataset(53, 2, 6);
    const auto folds = assign_folds(data.n(), 4, 1, 2);
    const BuiltinLearner l(preset_learner("ridgecv"));
    const auto fit = crossfit_cef(data, {CefKind::YgivenX, 0}, l, 0, folds, 0, 1);
    double num = 0, den = 0, direct = 0;
    for (int k = 0; k < 4; ++k) {
        num += fit.fold_mspe(k) * static_cast<double>(fit.fold_count[static_cast<std::size_t>(k)]);
        den += static_cast<double>(fit.fold_count[static_cast<std::size_t>(k)]);
    }
    for (Index i = 0; i < data.n(); ++i) direct += (data.y(i) - fit.oos(i)) * (data.y(i) - fit.oos(i));
    CHECK(fit.mspe == doctest::Approx(num / den).epsilon(1e-12));
    CHECK(fit.mspe == doctest::Approx(direct / 53.0).epsilon(1e-12));
}

TEST_CASE("a constant learner on unit-variance noise has MSPE near one") {
    Rng rng(7);
    Dataset data;
    data.x = normal_matrix(4000, 2, rng);
    data.y = normal_vector(4000, rng);
    data.d = normal_matrix(4000, 1, rng);
    data.names = {"y", {"d"}, {"a", "b"}, {}, std::nullopt};
    LearnerSpec depth0 = preset_learner("rf");
    depth0.forest.max_depth = 0;
    depth0.forest.n_trees = 1;
    depth0.forest.bootstrap = false;
    const auto folds = assign_folds(4000, 5, 1, 1);
    const auto fit = crossfit_cef(data, {CefKind::YgivenX, 0}, BuiltinLearner(depth0), 0, folds, 0, 1);
    CHECK(fit.mspe == doctest::Approx(1.0).epsilon(0.06));
}

TEST_CASE("short-stacking one learner reproduces it") {
    const Dataset data = linear_dataset(60, 3, 8);
    const auto folds = assign_folds(60, 5, 2, 3);
    CrossFitOptions opt;
    opt.shortstack = true;
    const auto ols = make_learner(preset_learner("ols"));
    const auto res = crossfit_all(data, ModelKind::Partial, {{ols}, {ols}}, folds, opt);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(res.shortstack[s][r].oos == res.fits[s][r][0].oos);
            CHECK(res.shortstack[s][r].mspe == res.fits[s][r][0].mspe);
        }
    const auto rows = mspe_report(res);
    CHECK(rows.size() == 2 * 2 * 2);
}

TEST_CASE("short-stack MSPE is no worse than any base learner") {
    const Dataset data = linear_dataset(200, 4, 9);
    const auto folds = assign_folds(200, 5, 1, 3);
    CrossFitOptions opt;
    opt.shortstack = true;
    LearnerSpec rf = preset_learner("rf-medium");
    rf.forest.n_trees = 30;
    std::vector<std::shared_ptr<const Learner>> set{make_learner(preset_learner("ols")), make_learner(rf),
                                                    make_learner(preset_learner("lassocv"))};
    const auto res = crossfit_all(data, ModelKind::Partial, {set, set}, folds, opt);
    for (std::size_t s = 0; s < 2; ++s)
        for (const auto& f : res.fits[s][0]) CHECK(res.shortstack[s][0].mspe <= f.mspe + 1e-12);
}

TEST_CASE("results do not depend on the thread count") {
    const Dataset data = linear_dataset(80, 3, 10);
    const auto folds = assign_folds(80, 4, 2, 3);
    LearnerSpec rf = preset_learner("rf");
    rf.forest.n_trees = 15;
    std::vector<std::shared_ptr<const Learner>> set{make_learner(rf), make_learner(preset_learner("gb-medium"))};
    CrossFitOptions opt;
    opt.shortstack = true;
    opt.stacking = StackingMode::CLS;
    opt.seed = 77;
    const auto a = crossfit_all(data, ModelKind::Partial, {set, set}, folds, opt);
    opt.threads = 3;
    const auto b = crossfit_all(data, ModelKind::Partial, {set, set}, folds, opt);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t j = 0; j < 2; ++j) CHECK(a.fits[s][r][j].oos == b.fits[s][r][j].oos);
            CHECK(a.stacked[s][r].oos == b.stacked[s][r].oos);
            CHECK(a.shortstack[s][r].oos == b.shortstack[s][r].oos);
        }
}

TEST_CASE("a training arm smaller than two raises a data error naming the fold") {
    Dataset data = id_dataset(20, 5);
    data.d.setZero();
    data.d(0, 0) = 1.0;
    data.d(1, 0) = 1.0;
    const auto folds = assign_folds(20, 2, 1, 1);
    FitLog log;
    const RecordingLearner learner("rec", log);
    try {
        (void)crossfit_cef(data, {CefKind::YgivenXD1, 0}, learner, 0, folds, 0, 1);
        // Both treated rows landing in different folds leaves one row per side.
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("D=1") != std::string::npos);
    }
}
