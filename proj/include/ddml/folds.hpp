#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ddml {

/// Fold index (1-based) of every observation for each cross-fit repetition.
struct FoldAssignment {
    int k = 0;
    int reps = 0;
    Eigen::MatrixXi assignment;  // n x reps, entries in 1..k
    std::uint64_t seed = 0;
    bool imported = false;

    Eigen::Index n() const { return assignment.rows(); }
    int fold_of(Eigen::Index i, int rep) const { return assignment(i, rep); }

    /// Observation indices of fold `fold` (1-based) in repetition `rep` (0-based), ascending.
    std::vector<Eigen::Index> members(int fold, int rep) const;
    /// Complement of members(fold, rep), ascending.
    std::vector<Eigen::Index> complement(int fold, int rep) const;
    std::vector<Eigen::Index> fold_sizes(int rep) const;
};

/// Random fold assignment. Without clusters the observation indices are
/// shuffled and dealt round-robin, so fold sizes differ by at most one. With
/// clusters the distinct ids (in order of first appearance) are shuffled and
/// dealt the same way. Each repetition uses its own derived stream.
FoldAssignment assign_folds(Eigen::Index n, int k, int reps, std::uint64_t seed,
                            std::optional<std::span<const std::int64_t>> cluster = std::nullopt);

/// Wraps user-supplied fold ids (one column per repetition); K is the largest id.
FoldAssignment import_folds(const Eigen::MatrixXi& assignment);

/// One column per repetition, named fold_1..fold_R.
void write_folds_csv(const std::filesystem::path& path, const FoldAssignment& folds);

}  // namespace ddml
