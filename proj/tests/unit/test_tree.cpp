#include <doctest.h>

#include <numeric>

#include "ddml/tree.hpp"
#include "helpers.hpp"

using namespace ddml;
using namespace testutil;

namespace {

struct Stump {
    int feature = -1;
    double threshold = 0.0;
    double sse = 0.0;
    double left = 0.0, right = 0.0;
};

// Brute force over every feature and every midpoint between distinct values.
Stump best_stump(const Matrix& x, const Vector& y, const std::vector<double>& w) {
    double tw = 0.0, ts = 0.0, tss = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        tw += w[static_cast<std::size_t>(i)];
        ts += w[static_cast<std::size_t>(i)] * y(i);
        tss += w[static_cast<std::size_t>(i)] * y(i) * y(i);
    }
    Stump best;
    best.sse = tss - ts * ts / tw;
    best.left = best.right = ts / tw;
    for (Index f = 0; f < x.cols(); ++f) {
        std::vector<double> vals;
        for (Index i = 0; i < x.rows(); ++i)
            if (w[static_cast<std::size_t>(i)] > 0) vals.push_back(x(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
            const double thr = 0.5 * (vals[v] + vals[v + 1]);
            double lw = 0, ls = 0, lss = 0, rw = 0, rs = 0, rss = 0;
            for (Index i = 0; i < x.rows(); ++i) {
                const double wi = w[static_cast<std::size_t>(i)];
                if (wi <= 0) continue;
                if (x(i, f) <= thr) {
                    lw += wi, ls += wi * y(i), lss += wi * y(i) * y(i);
                } else {
                    rw += wi, rs += wi * y(i), rss += wi * y(i) * y(i);
                }
            }
            const double sse = (lss - ls * ls / lw) + (rss - rs * rs / rw);
            if (sse < best.sse - 1e-9) best = {static_cast<int>(f), thr, sse, ls / lw, rs / rw};
        }
    }
    return best;
}

RegressionTree grow(const Matrix& x, const Vector& y, const std::vector<double>& w, int depth, std::uint64_t seed = 1) {
    PresortedFeatures sorted(x);
    TreeGrowth g;
    g.max_depth = depth;
    Rng rng(seed);
    return grow_tree(x, sorted, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), w, g, rng);
}

}  // namespace

TEST_CASE("depth-1 tree equals the enumerated best stump") {
    Rng rng(1);
    for (int t = 0; t < 60; ++t) {
        const Index n = 6 + static_cast<Index>(rng.below(20));
        const Matrix x = normal_matrix(n, 3, rng);
        const Vector y = normal_vector(n, rng);
        std::vector<double> w(static_cast<std::size_t>(n));
        for (auto& wi : w) wi = static_cast<double>(rng.below(3));
        w[0] = w[1] = 1.0;
        const auto tree = grow(x, y, w, 1);
        const Stump s = best_stump(x, y, w);
        if (s.feature < 0) {
            CHECK(tree.nodes.size() == 1);
            continue;
        }
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].feature == s.feature);
        CHECK(tree.nodes[0].threshold == doctest::Approx(s.threshold).epsilon(1e-12));
        CHECK(tree.nodes[1].value == doctest::Approx(s.left).epsilon(1e-10));
        CHECK(tree.nodes[2].value == doctest::Approx(s.right).epsilon(1e-10));
    }
}

TEST_CASE("deep tree interpolates distinct training points") {
    Matrix x(5, 1);
    x << 0.3, -1.0, 2.5, 0.9, 1.7;
    Vector y(5);
    y << 1.0, -2.0, 0.5, 4.0, 3.0;
    ForestParams fp;
    fp.n_trees = 1;
    fp.bootstrap = false;
    fp.max_depth = 50;
    fp.max_features = 1;
    const auto m = fit_random_forest(x, y, fp, 3);
    CHECK((m->predict(x) - y).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m->trees().front().leaves() == 5);
}

TEST_CASE("equal gains go to the lowest feature index") {
    Matrix x(6, 2);
    x.col(0) << 1, 2, 3, 4, 5, 6;
    x.col(1) = x.col(0);
    Vector y(6);
    y << 0, 0, 0, 1, 1, 1;
    const auto tree = grow(x, y, std::vector<double>(6, 1.0), 1);
    CHECK(tree.nodes[0].feature == 0);
    CHECK(tree.nodes[0].threshold == 3.5);
}

TEST_CASE("zero-weight rows never influence the tree") {
    Rng rng(2);
    const Matrix x = normal_matrix(30, 2, rng);
    const Vector y = normal_vector(30, rng);
    std::vector<double> w(30, 1.0);
    for (int i = 0; i < 30; i += 3) w[static_cast<std::size_t>(i)] = 0.0;
    Vector y2 = y;
    for (int i = 0; i < 30; i += 3) y2(i) = 1e6;
    const auto a = grow(x, y, w, 4), b = grow(x, y2, w, 4);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t k = 0; k < a.nodes.size(); ++k) {
        CHECK(a.nodes[k].feature == b.nodes[k].feature);
        CHECK(a.nodes[k].value == b.nodes[k].value);
    }
}

TEST_CASE("depth limit and leaf counts") {
    Rng rng(3);
    const Matrix x = normal_matrix(100, 4, rng);
    const Vector y = normal_vector(100, rng);
    for (int d : {0, 1, 2, 5}) {
        const auto t = grow(x, y, std::vector<double>(100, 1.0), d);
        CHECK(t.depth() <= d);
        CHECK(t.leaves() <= (1 << d));
    }
}

TEST_CASE("depth-0 forest predicts an average of bootstrap means") {
    Rng rng(4);
    const Matrix x = normal_matrix(200, 3, rng);
    const Vector y = normal_vector(200, rng).array() + 5.0;
    ForestParams fp;
    fp.max_depth = 0;
    fp.n_trees = 200;
    const auto m = fit_random_forest(x, y, fp, 9);
    const Vector p = m->predict(x);
    CHECK(p.maxCoeff() - p.minCoeff() < 1e-12);
    CHECK(p(0) == doctest::Approx(y.mean()).epsilon(0.01));
    for (const auto& t : m->trees()) CHECK(t.nodes.size() == 1);
}

TEST_CASE("forest and boosting are deterministic under a seed") {
    Rng rng(5);
    const Matrix x = normal_matrix(80, 4, rng);
    const Vector y = x.col(0).array().sin().matrix() + 0.3 * normal_vector(80, rng);
    ForestParams fp;
    fp.n_trees = 20;
    CHECK(fit_random_forest(x, y, fp, 1)->predict(x) == fit_random_forest(x, y, fp, 1)->predict(x));
    CHECK(fit_random_forest(x, y, fp, 1)->predict(x) != fit_random_forest(x, y, fp, 2)->predict(x));
    BoostParams bp;
    bp.n_trees = 50;
    CHECK(fit_gradient_boost(x, y, bp, 1)->predict(x) == fit_gradient_boost(x, y, bp, 1)->predict(x));
}

TEST_CASE("boosting with no stages predicts the training mean") {
    Rng rng(6);
    const Matrix x = normal_matrix(20, 2, rng);
    const Vector y = normal_vector(20, rng);
    BoostParams bp;
    bp.n_trees = 0;
    bp.early_stop = false;
    const Vector p = fit_gradient_boost(x, y, bp, 1)->predict(x);
    for (Index i = 0; i < 20; ++i) CHECK(p(i) == doctest::Approx(y.mean()).epsilon(1e-14));
}

TEST_CASE("one boosting stump is mean plus rate times the best stump on residuals") {
    Rng rng(7);
    Matrix x(40, 2);
    x.col(0) = normal_vector(40, rng);
    x.col(1) = normal_vector(40, rng);
    Vector y(40);
    for (Index i = 0; i < 40; ++i) y(i) = x(i, 1) > 0.2 ? 3.0 : -1.0;
    BoostParams bp;
    bp.n_trees = 1;
    bp.max_depth = 1;
    bp.learning_rate = 0.3;
    bp.early_stop = false;
    const Vector p = fit_gradient_boost(x, y, bp, 1)->predict(x);
    const double mean = y.mean();
    const Vector resid = (y.array() - mean).matrix();
    const Stump s = best_stump(x, resid, std::vector<double>(40, 1.0));
    CHECK(s.feature == 1);
    for (Index i = 0; i < 40; ++i) {
        const double leaf = x(i, s.feature) <= s.threshold ? s.left : s.right;
        CHECK(p(i) == doctest::Approx(mean + 0.3 * leaf).epsilon(1e-12));
    }
}

TEST_CASE("early stopping halts on pure noise") {
    int stopped = 0;
    const int runs = 20;
    for (int r = 0; r < runs; ++r) {
        Rng rng(100 + static_cast<std::uint64_t>(r));
        const Matrix x = normal_matrix(200, 5, rng);
        const Vector y = normal_vector(200, rng);
        BoostParams bp;
        bp.n_trees = 300;
        const auto m = fit_gradient_boost(x, y, bp, static_cast<std::uint64_t>(r));
        if (m->stages_run < bp.n_trees) ++stopped;
        // Kept stages index the best validation score; stage 0 is the base model.
        const auto best = std::min_element(m->validation_mse.begin(), m->validation_mse.end());
        CHECK(static_cast<std::ptrdiff_t>(m->trees().size()) == best - m->validation_mse.begin());
    }
    CHECK(stopped >= runs * 9 / 10);
}

TEST_CASE("tree ensemble predictions are row-permutation equivariant") {
    Rng rng(8);
    const Matrix x = normal_matrix(60, 3, rng);
    const Vector y = normal_vector(60, rng);
    ForestParams fp;
    fp.n_trees = 10;
    const auto m = fit_random_forest(x, y, fp, 4);
    const Vector p = m->predict(x);
    std::vector<Index> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(std::span<Index>(perm), rng);
    const Vector pp = m->predict(x(perm, Eigen::all));
    for (Index i = 0; i < 60; ++i) CHECK(pp(i) == p(perm[static_cast<std::size_t>(i)]));
}
