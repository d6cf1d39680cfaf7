#include "ddml/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ddml/error.hpp"

namespace ddml {

namespace {

struct KindName {
    ModelKind kind;
    std::string_view name;
};
constexpr KindName kModelNames[] = {
    {ModelKind::Partial, "partial"},
    {ModelKind::Interactive, "interactive"},
    {ModelKind::IV, "iv"},
    {ModelKind::FIV, "fiv"},
    {ModelKind::InteractiveIV, "interactiveiv"},
};

struct CefName {
    CefKind kind;
    std::string_view name;
};
constexpr CefName kCefNames[] = {
    {CefKind::YgivenX, "Y|X"},       {CefKind::YgivenXD0, "Y|X,D=0"}, {CefKind::YgivenXD1, "Y|X,D=1"},
    {CefKind::YgivenXZ0, "Y|X,Z=0"}, {CefKind::YgivenXZ1, "Y|X,Z=1"}, {CefKind::DgivenX, "D|X"},
    {CefKind::DgivenXZ, "D|X,Z"},    {CefKind::DgivenXZ0, "D|X,Z=0"}, {CefKind::DgivenXZ1, "D|X,Z=1"},
    {CefKind::ZgivenX, "Z|X"},
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                  : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string column_name(const std::vector<std::string>& names, std::size_t j, std::string_view fallback) {
    return j < names.size() ? names[j] : std::string(fallback);
}

bool is_binary(const auto& column) {
    for (Index i = 0; i < column.size(); ++i)
        if (column[i] != 0.0 && column[i] != 1.0) return false;
    return true;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    for (const auto& m : kModelNames)
        if (m.kind == kind) return m.name;
    return "?";
}

std::string_view to_string(CefKind kind) {
    for (const auto& c : kCefNames)
        if (c.kind == kind) return c.name;
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    for (const auto& m : kModelNames)
        if (m.name == name) return m.kind;
    if (name == "late") return ModelKind::InteractiveIV;
    throw ConfigError("unknown model '" + std::string(name) + "'");
}

CefKind parse_cef_kind(std::string_view name) {
    for (const auto& c : kCefNames)
        if (c.name == name) return c.kind;
    static const std::unordered_map<std::string_view, CefKind> aliases = {
        {"YgivenX", CefKind::YgivenX},     {"YgivenXD0", CefKind::YgivenXD0}, {"YgivenXD1", CefKind::YgivenXD1},
        {"YgivenXZ0", CefKind::YgivenXZ0}, {"YgivenXZ1", CefKind::YgivenXZ1}, {"DgivenX", CefKind::DgivenX},
        {"DgivenXZ", CefKind::DgivenXZ},   {"DgivenXZ0", CefKind::DgivenXZ0}, {"DgivenXZ1", CefKind::DgivenXZ1},
        {"ZgivenX", CefKind::ZgivenX},
    };
    if (auto it = aliases.find(name); it != aliases.end()) return it->second;
    throw ConfigError("unknown conditional expectation '" + std::string(name) + "'");
}

std::vector<CefKind> required_cefs(ModelKind kind) {
    switch (kind) {
        case ModelKind::Partial:
            return {CefKind::YgivenX, CefKind::DgivenX};
        case ModelKind::Interactive:
            return {CefKind::YgivenXD0, CefKind::YgivenXD1, CefKind::DgivenX};
        case ModelKind::IV:
            return {CefKind::YgivenX, CefKind::DgivenX, CefKind::ZgivenX};
        case ModelKind::FIV:
            // E[D|X] is not fit directly: it is the projection of fitted E[D|X,Z] onto X.
            return {CefKind::YgivenX, CefKind::DgivenXZ, CefKind::DgivenX};
        case ModelKind::InteractiveIV:
            return {CefKind::YgivenXZ0, CefKind::YgivenXZ1, CefKind::DgivenXZ0, CefKind::DgivenXZ1,
                    CefKind::ZgivenX};
    }
    return {};
}

bool needs_instruments(ModelKind kind) {
    return kind == ModelKind::IV || kind == ModelKind::FIV || kind == ModelKind::InteractiveIV;
}

bool allows_multiple_treatments(ModelKind kind) { return kind == ModelKind::Partial || kind == ModelKind::IV; }

void validate(const Dataset& data) {
    const Index n = data.n();
    if (n < 1) throw DataError("dataset has no rows");
    if (data.d.rows() != n || data.x.rows() != n || (data.z.cols() > 0 && data.z.rows() != n))
        throw DataError("role columns have different lengths");
    if (data.cluster && static_cast<Index>(data.cluster->size()) != n)
        throw DataError("cluster column length differs from n");
    auto check_finite = [](const auto& m, const std::string& role) {
        if (!m.allFinite()) throw DataError("non-finite value in role " + role);
    };
    check_finite(data.y, "Y");
    check_finite(data.d, "D");
    check_finite(data.x, "X");
    check_finite(data.z, "Z");
}

void validate_for(const Dataset& data, ModelKind kind) {
    validate(data);
    const auto model = std::string(to_string(kind));
    if (data.d.cols() < 1) throw DataError("role D required for model " + model);
    if (data.x.cols() < 1) throw DataError("role X required for model " + model);
    if (needs_instruments(kind) && data.z.cols() < 1) throw DataError("role Z required for model " + model);
    if (!needs_instruments(kind) && data.z.cols() > 0)
        throw DataError("role Z is not used by model " + model);
    if (!allows_multiple_treatments(kind) && data.d.cols() != 1)
        throw DataError("model " + model + " requires exactly one treatment column");
    if (kind == ModelKind::InteractiveIV && data.z.cols() != 1)
        throw DataError("model interactiveiv requires exactly one instrument column");
    if (kind == ModelKind::IV && data.z.cols() < data.d.cols())
        throw DataError("model iv needs at least as many instruments as treatments");
    if ((kind == ModelKind::Interactive || kind == ModelKind::InteractiveIV) && !is_binary(data.d.col(0)))
        throw DataError("treatment column '" + column_name(data.names.d, 0, "D") + "' must be binary {0,1} for model " + model);
    if (kind == ModelKind::InteractiveIV && !is_binary(data.z.col(0)))
        throw DataError("instrument column '" + column_name(data.names.z, 0, "Z") + "' must be binary {0,1} for model " + model);
}

Dataset load_csv(const std::filesystem::path& path, const RoleMap& roles) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError("data file " + path.string() + " has no header row");
    const auto header = split_row(header_line);
    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t j = 0; j < header.size(); ++j) column_of.emplace(std::string(header[j]), j);

    auto locate = [&](const std::string& name, std::string_view role) {
        auto it = column_of.find(name);
        if (it == column_of.end())
            throw DataError("column '" + name + "' (role " + std::string(role) + ") not found in " + path.string());
        return it->second;
    };
    if (roles.y.empty()) throw DataError("role Y required");
    const auto y_col = locate(roles.y, "Y");
    std::vector<std::size_t> d_cols, x_cols, z_cols;
    for (const auto& c : roles.d) d_cols.push_back(locate(c, "D"));
    for (const auto& c : roles.x) x_cols.push_back(locate(c, "X"));
    for (const auto& c : roles.z) z_cols.push_back(locate(c, "Z"));
    std::optional<std::size_t> cluster_col;
    if (roles.cluster) cluster_col = locate(*roles.cluster, "cluster");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        std::vector<double> values(cells.size(), 0.0);
        auto parse_cell = [&](std::size_t j) {
            double v = 0.0;
            const auto cell = cells[j];
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            if (!cell.empty() && *first == '+') ++first;
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (cell.empty() || ec != std::errc() || ptr != last)
                throw DataError("non-numeric cell at row " + std::to_string(line_no) + ", column '" +
                                std::string(header[j]) + "': '" + std::string(cell) + "'");
            if (!std::isfinite(v))
                throw DataError("non-finite cell at row " + std::to_string(line_no) + ", column '" +
                                std::string(header[j]) + "': '" + std::string(cell) + "'");
            values[j] = v;
        };
        parse_cell(y_col);
        for (auto j : d_cols) parse_cell(j);
        for (auto j : x_cols) parse_cell(j);
        for (auto j : z_cols) parse_cell(j);
        if (cluster_col) {
            parse_cell(*cluster_col);
            if (values[*cluster_col] != std::floor(values[*cluster_col]))
                throw DataError("cluster id at row " + std::to_string(line_no) + " is not an integer");
        }
        rows.push_back(std::move(values));
    }

    Dataset data;
    const auto n = static_cast<Index>(rows.size());
    data.names = roles;
    data.y.resize(n);
    data.d.resize(n, static_cast<Index>(d_cols.size()));
    data.x.resize(n, static_cast<Index>(x_cols.size()));
    data.z.resize(n, static_cast<Index>(z_cols.size()));
    if (cluster_col) data.cluster.emplace(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        data.y[i] = r[y_col];
        for (std::size_t j = 0; j < d_cols.size(); ++j) data.d(i, static_cast<Index>(j)) = r[d_cols[j]];
        for (std::size_t j = 0; j < x_cols.size(); ++j) data.x(i, static_cast<Index>(j)) = r[x_cols[j]];
        for (std::size_t j = 0; j < z_cols.size(); ++j) data.z(i, static_cast<Index>(j)) = r[z_cols[j]];
        if (cluster_col) (*data.cluster)[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(r[*cluster_col]);
    }
    validate(data);
    return data;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const auto& nm = data.names;
    out << nm.y;
    for (const auto& c : nm.d) out << ',' << c;
    for (const auto& c : nm.x) out << ',' << c;
    for (const auto& c : nm.z) out << ',' << c;
    if (data.cluster) out << ',' << nm.cluster.value_or("cluster");
    out << '\n';
    for (Index i = 0; i < data.n(); ++i) {
        out << format_double(data.y[i]);
        for (Index j = 0; j < data.d.cols(); ++j) out << ',' << format_double(data.d(i, j));
        for (Index j = 0; j < data.x.cols(); ++j) out << ',' << format_double(data.x(i, j));
        for (Index j = 0; j < data.z.cols(); ++j) out << ',' << format_double(data.z(i, j));
        if (data.cluster) out << ',' << (*data.cluster)[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

}  // namespace ddml
