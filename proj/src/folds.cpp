#include "ddml/folds.hpp"

#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>

#include "ddml/error.hpp"
#include "ddml/random.hpp"

namespace ddml {

std::vector<Eigen::Index> FoldAssignment::members(int fold, int rep) const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < n(); ++i)
        if (assignment(i, rep) == fold) out.push_back(i);
    return out;
}

std::vector<Eigen::Index> FoldAssignment::complement(int fold, int rep) const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < n(); ++i)
        if (assignment(i, rep) != fold) out.push_back(i);
    return out;
}

std::vector<Eigen::Index> FoldAssignment::fold_sizes(int rep) const {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n(); ++i) ++sizes[static_cast<std::size_t>(assignment(i, rep) - 1)];
    return sizes;
}

FoldAssignment assign_folds(Eigen::Index n, int k, int reps, std::uint64_t seed,
                            std::optional<std::span<const std::int64_t>> cluster) {
    if (k < 2) throw DataError("number of folds must be at least 2, got " + std::to_string(k));
    if (reps < 1) throw DataError("number of repetitions must be at least 1");
    if (k > n)
        throw DataError("number of folds (" + std::to_string(k) + ") exceeds number of observations (" +
                        std::to_string(n) + ")");

    FoldAssignment out;
    out.k = k;
    out.reps = reps;
    out.seed = seed;
    out.assignment.resize(n, reps);

    // Unit of randomization: observation, or cluster in first-appearance order.
    std::vector<int> unit_of(static_cast<std::size_t>(n));
    int n_units = 0;
    if (cluster) {
        if (static_cast<Eigen::Index>(cluster->size()) != n) throw DataError("cluster ids must have length n");
        std::unordered_map<std::int64_t, int> first_seen;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto [it, inserted] = first_seen.emplace((*cluster)[static_cast<std::size_t>(i)], n_units);
            if (inserted) ++n_units;
            unit_of[static_cast<std::size_t>(i)] = it->second;
        }
        if (k > n_units)
            throw DataError("number of folds (" + std::to_string(k) + ") exceeds number of clusters (" +
                            std::to_string(n_units) + ")");
    } else {
        std::iota(unit_of.begin(), unit_of.end(), 0);
        n_units = static_cast<int>(n);
    }

    std::vector<int> order(static_cast<std::size_t>(n_units));
    std::vector<int> fold_of_unit(static_cast<std::size_t>(n_units));
    for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed({seed, 0xF01D5ULL, static_cast<std::uint64_t>(r)}));
        std::iota(order.begin(), order.end(), 0);
        shuffle(std::span<int>(order), rng);
        for (int rank = 0; rank < n_units; ++rank)
            fold_of_unit[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] = rank % k + 1;
        for (Eigen::Index i = 0; i < n; ++i)
            out.assignment(i, r) = fold_of_unit[static_cast<std::size_t>(unit_of[static_cast<std::size_t>(i)])];
    }
    return out;
}

FoldAssignment import_folds(const Eigen::MatrixXi& assignment) {
    if (assignment.rows() < 1 || assignment.cols() < 1) throw DataError("fold assignment is empty");
    const int k = assignment.maxCoeff();
    if (assignment.minCoeff() < 1)
        throw DataError("fold index " + std::to_string(assignment.minCoeff()) + " out of range (must be >= 1)");
    if (k < 2) throw DataError("imported folds define fewer than 2 folds");
    FoldAssignment out;
    out.k = k;
    out.reps = static_cast<int>(assignment.cols());
    out.assignment = assignment;
    out.imported = true;
    for (int r = 0; r < out.reps; ++r) {
        const auto sizes = out.fold_sizes(r);
        for (int f = 0; f < k; ++f)
            if (sizes[static_cast<std::size_t>(f)] == 0)
                throw DataError("fold " + std::to_string(f + 1) + " empty in repetition " + std::to_string(r + 1));
    }
    return out;
}

void write_folds_csv(const std::filesystem::path& path, const FoldAssignment& folds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (int r = 0; r < folds.reps; ++r) out << (r ? "," : "") << "fold_" << (r + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < folds.n(); ++i) {
        for (int r = 0; r < folds.reps; ++r) out << (r ? "," : "") << folds.assignment(i, r);
        out << '\n';
    }
}

}  // namespace ddml
