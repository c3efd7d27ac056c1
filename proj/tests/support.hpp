#pragma once

#include "mswitch/grid.hpp"
#include "mswitch/model.hpp"
#include "mswitch/qvi.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path source_dir() { return MSWITCH_SOURCE_DIR; }
inline std::filesystem::path desk(const std::string& name) { return source_dir() / "configs" / "desk" / (name + ".json"); }
inline std::filesystem::path negative(const std::string& name) {
    return source_dir() / "configs" / "negative" / (name + ".json");
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Brute-force fixed point of v_i = max(f_i / r, max_{j != i} v_j - g_ij) for
/// constant data, iterated from v = f / r.
inline std::vector<double> scalar_switching_fixed_point(const std::vector<double>& f,
                                                        const std::vector<std::vector<double>>& g, double r) {
    const std::size_t m = f.size();
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = f[i] / r;
    for (int sweep = 0; sweep < 10000; ++sweep) {
        std::vector<double> next(m);
        for (std::size_t i = 0; i < m; ++i) {
            next[i] = f[i] / r;
            for (std::size_t j = 0; j < m; ++j)
                if (j != i) next[i] = std::max(next[i], v[j] - g[i][j]);
        }
        if (next == v) break;
        v = next;
    }
    return v;
}

inline std::vector<std::vector<std::string>> constant_costs(const std::vector<std::vector<double>>& g) {
    std::vector<std::vector<std::string>> out;
    for (const auto& row : g) {
        out.emplace_back();
        for (double c : row) out.back().push_back(std::to_string(c));
    }
    return out;
}

/// sigma = b = 0 on a 1D grid: the zero operator.
inline mswitch::DiscreteOperator zero_operator(int cells = 8) {
    const auto diffusion = mswitch::DiffusionSpec::constant({0.0}, {0.0}, 1);
    const auto grid = mswitch::build_grid({{-1.0, 1.0}}, {cells}, mswitch::BoundaryPolicy::neumann_zero);
    return mswitch::discretize_generator(diffusion, grid);
}

inline double sup_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

} // namespace testing
