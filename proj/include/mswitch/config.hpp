#pragma once

#include "mswitch/grid.hpp"
#include "mswitch/io.hpp"
#include "mswitch/model.hpp"
#include "mswitch/qvi.hpp"
#include "mswitch/strategy.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mswitch {

struct ValidationSettings {
    std::size_t grid_points = 64;  ///< grid nodes used as sample points (evenly strided)
    std::size_t oversample = 10;   ///< Latin-hypercube points per grid sample point
    double probe_step = 0.5;
    DiscountCheckSettings discount;  ///< horizon defaults to max(10, 4/r)
};

struct VerifySettings {
    std::vector<int> resolutions;  ///< empty: cells/4, cells/2, cells
    double shift = 1.0;            ///< delta of the comparison sibling
};

struct McSettings {
    MonteCarloSettings mc;
    std::vector<TestPoint> test_points;
    double eps_disc = 1e-3;
    double eps_bind = 1e-9;
};

struct OutputSettings {
    std::string directory = "out";
    bool switch_log = false;
    bool paths = false;  ///< also dump the simulated states of the first test point
};

/// A parsed run configuration. Every section except "problem" and
/// "diffusion" is optional; omitted fields take the defaults above.
struct RunConfig {
    explicit RunConfig(SwitchingProblem p) : problem(std::move(p)) {}

    std::string source;  ///< file name used in error messages
    Json document;       ///< as parsed, after command-line overrides
    SwitchingProblem problem;
    DiffusionSpec diffusion;
    Grid grid;
    Point x0;            ///< reference state (box centre unless given)
    SolverConfig solver;
    McSettings mc;
    ValidationSettings validation;
    VerifySettings verify;
    OutputSettings output;

    /// FNV-1a of the canonical dump of `document` without the "output" section.
    std::string hash() const;
};

/// Parses a configuration document. Errors carry the JSON pointer of the
/// offending field ("config.json: /grid/cells/0: must be >= 2"); unknown keys
/// are rejected. `seed` overrides mc.seed and validation.seed.
RunConfig parse_config(std::string_view text, std::string_view source,
                       std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);

} // namespace mswitch
