#pragma once

#include "mswitch/config.hpp"
#include "mswitch/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mswitch {

/// Exit statuses shared by every subcommand.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 1;
inline constexpr int validation_failed = 2;
inline constexpr int check_failed = 3;
inline constexpr int prerequisite_violated = 4;
inline constexpr int diverged = 5;
inline constexpr int coupled_generator = 6;
} // namespace exit_code

struct CliOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool quiet = false;

    std::optional<std::filesystem::path> field;  ///< simulate: value CSV (default <out>/values.csv)
    std::string axis;                             ///< sweep: shift | discount | cost_scale
    std::vector<double> values;                   ///< sweep values

    // Test hooks.
    bool corrupt_field = false;   ///< verify: lift one node of mode 1 above the upper envelope
    bool anti_diffusion = false;  ///< verify: non-monotone assembly in the refinement check

    std::ostream* out_stream = nullptr;  ///< summary lines; std::cout when null
    std::ostream* err_stream = nullptr;  ///< diagnostics; std::cerr when null
};

/// Sampled hypothesis checks used as the gate before any solve: grid nodes
/// (evenly strided) plus a Latin-hypercube oversample of the box.
ValidationReport validate_config(const RunConfig& config);

/// Sample points used by validate_config.
std::vector<Point> validation_points(const RunConfig& config);

int run_solve(const CliOptions& options);
int run_simulate(const CliOptions& options);
int run_verify(const CliOptions& options);
int run_sweep(const CliOptions& options);

} // namespace mswitch
