#include "ddml/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddml/error.hpp"

namespace ddml {

PresortedFeatures::PresortedFeatures(const Matrix& x) : order_(static_cast<std::size_t>(x.cols())) {
    for (Index f = 0; f < x.cols(); ++f) {
        auto& ord = order_[static_cast<std::size_t>(f)];
        ord.resize(static_cast<std::size_t>(x.rows()));
        std::iota(ord.begin(), ord.end(), 0);
        const double* col = x.col(f).data();
        std::stable_sort(ord.begin(), ord.end(), [col](int a, int b) { return col[a] < col[b]; });
    }
}

double RegressionTree::predict_row(const Matrix& x, Index row) const {
    int node = 0;
    for (;;) {
        const auto& nd = nodes[static_cast<std::size_t>(node)];
        if (nd.feature < 0) return nd.value;
        node = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
}

int RegressionTree::depth() const {
    std::vector<int> level(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].feature < 0) continue;
        for (int c : {nodes[i].left, nodes[i].right}) {
            level[static_cast<std::size_t>(c)] = level[i] + 1;
            deepest = std::max(deepest, level[i] + 1);
        }
    }
    return deepest;
}

int RegressionTree::leaves() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

struct NodeStats {
    double w = 0.0;
    double s = 0.0;
    double ss = 0.0;

    void add(double weight, double y) {
        w += weight;
        s += weight * y;
        ss += weight * y * y;
    }
    double sse() const { return w > 0.0 ? ss - s * s / w : 0.0; }
};

struct OpenNode {
    int node;
    NodeStats stats;
};

}  // namespace

RegressionTree grow_tree(const Matrix& x, const PresortedFeatures& sorted, std::span<const double> target,
                         std::span<const double> weight, const TreeGrowth& growth, Rng& rng) {
    const Index n = x.rows();
    const int p = static_cast<int>(x.cols());
    const double min_leaf = std::max(1, growth.min_leaf);
    RegressionTree tree;

    NodeStats root;
    for (Index i = 0; i < n; ++i)
        if (weight[static_cast<std::size_t>(i)] > 0.0)
            root.add(weight[static_cast<std::size_t>(i)], target[static_cast<std::size_t>(i)]);
    tree.nodes.push_back(TreeNode{.value = root.w > 0.0 ? root.s / root.w : 0.0});

    auto splittable = [&](const NodeStats& st, int depth) {
        if (depth >= growth.max_depth || st.w < 2.0 * min_leaf) return false;
        const double sse = st.sse();
        return sse > 1e-12 * std::abs(st.ss) && sse > 0.0;
    };
    if (!splittable(root, 0) || p == 0) return tree;

    struct RowData {
        double w;
        double wy;
    };
    std::vector<RowData> rows(static_cast<std::size_t>(n));
    std::vector<int> slot(static_cast<std::size_t>(n), -1);
    std::size_t stride = 0;
    for (Index i = 0; i < n; ++i) {
        const double w = weight[static_cast<std::size_t>(i)];
        rows[static_cast<std::size_t>(i)] = {w, w * target[static_cast<std::size_t>(i)]};
        if (w > 0.0) {
            slot[static_cast<std::size_t>(i)] = 0;
            ++stride;
        }
    }

    // For every feature, the rows of open nodes in presorted order, grouped
    // into one contiguous segment per node. Segment bounds are shared by all
    // features; regrouping is a stable partition, so order within a segment
    // stays sorted.
    // The element past the last feature is a write sink for dropped rows.
    thread_local std::vector<int> buf, next_buf;
    const std::size_t sink = stride * static_cast<std::size_t>(p);
    buf.resize(sink + 1);
    next_buf.resize(sink + 1);
    for (int f = 0; f < p; ++f) {
        int* out = buf.data() + static_cast<std::size_t>(f) * stride;
        std::size_t k = 0;
        for (int i : sorted.order(f))
            if (slot[static_cast<std::size_t>(i)] >= 0) out[k++] = i;
    }
    std::vector<OpenNode> open{{0, root}};
    std::vector<std::size_t> seg_begin{0}, seg_end{stride};

    const int mtry = (growth.max_features <= 0 || growth.max_features >= p) ? p : growth.max_features;
    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::uint8_t> selected;

    for (int depth = 0; !open.empty(); ++depth) {
        const std::size_t m = open.size();
        // selected[s * p + f]: node s considers feature f.
        selected.assign(m * static_cast<std::size_t>(p), mtry == p ? 1 : 0);
        if (mtry < p)
            for (std::size_t s = 0; s < m; ++s)
                for (int a = 0; a < mtry; ++a) {
                    const int b = a + static_cast<int>(rng.below(static_cast<std::uint64_t>(p - a)));
                    std::swap(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
                    selected[s * p + static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])] = 1;
                }

        std::vector<int> best_feature(m, -1);
        std::vector<double> best_thr(m, 0.0);
        for (std::size_t s = 0; s < m; ++s) {
            const auto& st = open[s].stats;
            const double parent = st.s * st.s / st.w;
            // A candidate must beat the incumbent by a margin, so rounding
            // noise cannot overturn the lowest-feature, lowest-threshold tie rule.
            const double margin = 1e-10 * st.sse() + 1e-14 * std::abs(parent);
            double best_gain = parent;
            for (int f = 0; f < p; ++f) {
                if (!selected[s * p + static_cast<std::size_t>(f)]) continue;
                const int* e = buf.data() + static_cast<std::size_t>(f) * stride;
                const double* col = x.col(f).data();
                double wl = 0.0, sl = 0.0, last = col[e[seg_begin[s]]];
                for (std::size_t k = seg_begin[s]; k < seg_end[s]; ++k) {
                    const double xv = col[e[k]];
                    if (xv > last && wl >= min_leaf) {
                        const double wr = st.w - wl;
                        if (wr >= min_leaf) {
                            const double sr = st.s - sl;
                            const double gain = sl * sl / wl + sr * sr / wr;
                            if (gain > best_gain + margin) {
                                best_gain = gain;
                                best_feature[s] = f;
                                double thr = last + (xv - last) / 2.0;
                                if (!(thr < xv)) thr = last;
                                best_thr[s] = thr;
                            }
                        }
                    }
                    const RowData& rd = rows[static_cast<std::size_t>(e[k])];
                    wl += rd.w;
                    sl += rd.wy;
                    last = xv;
                }
            }
        }

        // Apply splits; child c of slot s is 2s (left) or 2s+1 (right).
        std::vector<NodeStats> child_stats(2 * m);
        std::vector<std::size_t> child_rows(2 * m, 0);
        std::vector<int> child_node(2 * m, -1);
        for (std::size_t s = 0; s < m; ++s) {
            if (best_feature[s] < 0) continue;
            const int parent = open[s].node;
            const int left = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& nd = tree.nodes[static_cast<std::size_t>(parent)];
            nd.feature = best_feature[s];
            nd.threshold = best_thr[s];
            nd.left = left;
            nd.right = left + 1;
            child_node[2 * s] = left;
            child_node[2 * s + 1] = left + 1;
        }
        for (Index i = 0; i < n; ++i) {
            int& sl = slot[static_cast<std::size_t>(i)];
            if (sl < 0) continue;
            const auto s = static_cast<std::size_t>(sl);
            if (best_feature[s] < 0) {
                sl = -1;
                continue;
            }
            const std::size_t c = 2 * s + (x(i, best_feature[s]) <= best_thr[s] ? 0 : 1);
            child_stats[c].add(weight[static_cast<std::size_t>(i)], target[static_cast<std::size_t>(i)]);
            ++child_rows[c];
            sl = static_cast<int>(c);
        }
        std::vector<int> next_slot(2 * m, -1);
        std::vector<OpenNode> next_open;
        std::vector<std::size_t> next_begin, next_end;
        std::size_t offset = 0;
        for (std::size_t c = 0; c < 2 * m; ++c) {
            if (child_node[c] < 0) continue;
            const auto& st = child_stats[c];
            tree.nodes[static_cast<std::size_t>(child_node[c])].value = st.w > 0.0 ? st.s / st.w : 0.0;
            if (splittable(st, depth + 1)) {
                next_slot[c] = static_cast<int>(next_open.size());
                next_open.push_back({child_node[c], st});
                next_begin.push_back(offset);
                offset += child_rows[c];
                next_end.push_back(offset);
            }
        }
        for (auto& sl : slot)
            if (sl >= 0) sl = next_slot[static_cast<std::size_t>(sl)];
        open = std::move(next_open);
        if (open.empty()) break;

        // cursor[0] is the sink; cursor[s + 1] the next write position of slot s.
        std::vector<std::size_t> cursor(open.size() + 1);
        for (int f = 0; f < p; ++f) {
            const int* in = buf.data() + static_cast<std::size_t>(f) * stride;
            const std::size_t base = static_cast<std::size_t>(f) * stride;
            cursor[0] = sink;
            for (std::size_t s = 0; s < open.size(); ++s) cursor[s + 1] = base + next_begin[s];
            for (std::size_t k = 0; k < seg_end[m - 1]; ++k) {
                const int r = in[k];
                const int s = slot[static_cast<std::size_t>(r)];
                std::size_t& c = cursor[static_cast<std::size_t>(s + 1)];
                next_buf[c] = r;
                c += s >= 0;
            }
        }
        buf.swap(next_buf);
        seg_begin = std::move(next_begin);
        seg_end = std::move(next_end);
    }
    return tree;
}

Vector TreeEnsembleModel::predict_features(const Matrix& features) const {
    Vector out(features.rows());
    for (Index i = 0; i < features.rows(); ++i) {
        double acc = 0.0;
        for (const auto& t : trees_) acc += t.predict_row(features, i);
        if (combine_ == Combine::Average)
            out[i] = trees_.empty() ? base_ : acc / static_cast<double>(trees_.size());
        else
            out[i] = base_ + learning_rate_ * acc;
    }
    return out;
}

std::unique_ptr<TreeEnsembleModel> fit_random_forest(const Matrix& x, const Vector& y, const ForestParams& params,
                                                     std::uint64_t seed) {
    const Index n = x.rows();
    if (n < 1) throw DataError("random forest needs at least one observation");
    const PresortedFeatures sorted(x);
    TreeGrowth growth;
    growth.max_depth = params.max_depth;
    growth.min_leaf = params.min_leaf;
    growth.max_features = params.max_features > 0
                              ? params.max_features
                              : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(x.cols())))));
    std::vector<RegressionTree> trees;
    trees.reserve(static_cast<std::size_t>(params.n_trees));
    std::vector<double> weight(static_cast<std::size_t>(n));
    const std::span<const double> target(y.data(), static_cast<std::size_t>(n));
    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(derive_seed({seed, 0x7EEULL, static_cast<std::uint64_t>(t)}));
        if (params.bootstrap) {
            std::fill(weight.begin(), weight.end(), 0.0);
            for (Index draw = 0; draw < n; ++draw) weight[rng.below(static_cast<std::uint64_t>(n))] += 1.0;
        } else {
            std::fill(weight.begin(), weight.end(), 1.0);
        }
        trees.push_back(grow_tree(x, sorted, target, weight, growth, rng));
    }
    return std::make_unique<TreeEnsembleModel>(TreeEnsembleModel::Combine::Average, x.cols(), std::move(trees),
                                               y.mean(), 1.0);
}

std::unique_ptr<TreeEnsembleModel> fit_gradient_boost(const Matrix& x, const Vector& y, const BoostParams& params,
                                                      std::uint64_t seed) {
    const Index n = x.rows();
    if (n < 1) throw DataError("gradient boosting needs at least one observation");
    Rng rng(derive_seed({seed, 0xB0057ULL}));

    std::vector<double> weight(static_cast<std::size_t>(n), 1.0);
    std::vector<Index> validation;
    const bool early_stop = params.early_stop && n >= 5;
    if (early_stop) {
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Index{0});
        shuffle(std::span<Index>(idx), rng);
        const auto n_val = std::clamp<Index>(static_cast<Index>(std::lround(params.validation_fraction * n)), 1, n - 1);
        validation.assign(idx.begin(), idx.begin() + n_val);
        std::sort(validation.begin(), validation.end());
        for (Index i : validation) weight[static_cast<std::size_t>(i)] = 0.0;
    }

    double base = 0.0, w_sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        base += weight[static_cast<std::size_t>(i)] * y[i];
        w_sum += weight[static_cast<std::size_t>(i)];
    }
    base /= w_sum;

    const PresortedFeatures sorted(x);
    TreeGrowth growth;
    growth.max_depth = params.max_depth;
    growth.min_leaf = params.min_leaf;
    growth.max_features = 0;

    Vector fitted = Vector::Constant(n, base);
    Vector residual(n);
    auto validation_mse = [&] {
        double acc = 0.0;
        for (Index i : validation) acc += (y[i] - fitted[i]) * (y[i] - fitted[i]);
        return acc / static_cast<double>(validation.size());
    };

    std::vector<RegressionTree> trees;
    std::vector<double> history;
    if (early_stop) history.push_back(validation_mse());
    double reference = early_stop ? history.front() : 0.0;
    int stale = 0;
    for (int t = 0; t < params.n_trees; ++t) {
        residual = y - fitted;
        trees.push_back(grow_tree(x, sorted, std::span<const double>(residual.data(), static_cast<std::size_t>(n)),
                                  weight, growth, rng));
        const auto& tree = trees.back();
        for (Index i = 0; i < n; ++i) fitted[i] += params.learning_rate * tree.predict_row(x, i);
        if (!early_stop) continue;
        const double mse = validation_mse();
        history.push_back(mse);
        if (mse < reference * (1.0 - params.tol)) {
            reference = mse;
            stale = 0;
        } else if (++stale >= params.patience) {
            break;
        }
    }

    const int stages_run = static_cast<int>(trees.size());
    if (early_stop) {
        const auto best = std::min_element(history.begin(), history.end()) - history.begin();
        trees.resize(static_cast<std::size_t>(best));
    }
    auto model = std::make_unique<TreeEnsembleModel>(TreeEnsembleModel::Combine::Boosted, x.cols(), std::move(trees),
                                                     base, params.learning_rate);
    model->stages_run = stages_run;
    model->validation_mse = std::move(history);
    return model;
}

}  // namespace ddml
