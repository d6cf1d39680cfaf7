#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ddml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ModelKind { Partial, Interactive, IV, FIV, InteractiveIV };

/// Conditional expectation functions that a model may require. The split
/// kinds (..D0/..D1, ..Z0/..Z1) are trained on one arm only.
enum class CefKind {
    YgivenX,
    YgivenXD0,
    YgivenXD1,
    YgivenXZ0,
    YgivenXZ1,
    DgivenX,
    DgivenXZ,
    DgivenXZ0,
    DgivenXZ1,
    ZgivenX,
};

std::string_view to_string(ModelKind kind);
std::string_view to_string(CefKind kind);
ModelKind parse_model_kind(std::string_view name);
CefKind parse_cef_kind(std::string_view name);

/// CEF kinds each model needs, in reporting order.
std::vector<CefKind> required_cefs(ModelKind kind);

bool needs_instruments(ModelKind kind);
bool allows_multiple_treatments(ModelKind kind);

/// Column names for each role. Cluster is optional.
struct RoleMap {
    std::string y;
    std::vector<std::string> d;
    std::vector<std::string> x;
    std::vector<std::string> z;
    std::optional<std::string> cluster;
};

/// Immutable-after-construction dataset with named column roles.
struct Dataset {
    Vector y;
    Matrix d;
    Matrix x;
    Matrix z;
    std::optional<std::vector<std::int64_t>> cluster;
    RoleMap names;

    Index n() const { return y.size(); }
    Index p() const { return x.cols(); }
};

/// Checks shapes and finiteness. Throws DataError.
void validate(const Dataset& data);

/// Checks that `data` carries the roles `kind` needs, including the binary
/// treatment / instrument restrictions of the interactive models.
void validate_for(const Dataset& data, ModelKind kind);

/// Reads a comma-delimited file with a header row. Row order is preserved.
Dataset load_csv(const std::filesystem::path& path, const RoleMap& roles);

/// Writes y, d, x, z (and cluster) with shortest round-trip number
/// formatting, so load_csv returns bitwise-equal arrays.
void write_csv(const std::filesystem::path& path, const Dataset& data);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace ddml
