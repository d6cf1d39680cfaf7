#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "ddml/data.hpp"
#include "ddml/random.hpp"

namespace testutil {

using ddml::Index;
using ddml::Matrix;
using ddml::Vector;

inline Matrix normal_matrix(Index n, Index p, ddml::Rng& rng) {
    Matrix m(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) m(i, j) = rng.normal();
    return m;
}

inline Vector normal_vector(Index n, ddml::Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline Vector binary_vector(Index n, double p, ddml::Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.uniform() < p ? 1.0 : 0.0;
    return v;
}

/// Fresh directory under the build tree, removed and recreated per call.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::path(DDML_TEST_DIR) / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::string out;
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) return out;
    char buf[4096];
    for (std::size_t got; (got = std::fread(buf, 1, sizeof buf, f)) > 0;) out.append(buf, got);
    std::fclose(f);
    return out;
}

/// Partial-model dataset with linear CEFs.
inline ddml::Dataset linear_dataset(Index n, Index p, std::uint64_t seed, double theta = 0.5) {
    ddml::Rng rng(seed);
    ddml::Dataset data;
    data.x = normal_matrix(n, p, rng);
    data.d = Matrix(n, 1);
    data.y = Vector(n);
    for (Index i = 0; i < n; ++i) {
        const double g = data.x.row(i).sum() / static_cast<double>(p);
        data.d(i, 0) = g + rng.normal();
        data.y(i) = theta * data.d(i, 0) + g + rng.normal();
    }
    data.names.y = "y";
    data.names.d = {"d"};
    for (Index j = 0; j < p; ++j) data.names.x.push_back("x" + std::to_string(j + 1));
    return data;
}

}  // namespace testutil
