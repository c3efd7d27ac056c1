#pragma once

#include "mswitch/model.hpp"
#include "mswitch/random.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace mswitch {

/// |X| above this is reported as NonFiniteState instead of drifting to inf.
constexpr double kExplosionBound = 1e12;

/// Simulated Euler-Maruyama paths, stored path-major:
/// states[(p * (n_steps + 1) + j) * dim + a].
struct PathBatch {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    int dim = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    Point x0;
    std::vector<double> states;

    double time(std::size_t step) const noexcept { return static_cast<double>(step) * dt; }
    std::vector<double> times() const;

    std::span<const double> state(std::size_t path, std::size_t step) const noexcept {
        return {states.data() + (path * (n_steps + 1) + step) * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }

    bool operator==(const PathBatch&) const = default;
};

/// One Euler-Maruyama step generator bound to a diffusion, a seed and a path.
/// Increments for (path, step) depend on nothing else, so a path can be
/// re-simulated in isolation and batch sizes never change individual paths.
class EulerStepper {
public:
    EulerStepper(const DiffusionSpec& diffusion, double dt, std::uint64_t seed);

    /// Advances x in place from step `step` to `step + 1` of path `path`.
    void advance(std::span<double> x, std::size_t path, std::size_t step);

private:
    const DiffusionSpec& diffusion_;
    double dt_;
    double sqrt_dt_;
    CounterRng rng_;
    std::vector<double> drift_, sigma_, noise_;
};

PathBatch simulate_paths(const DiffusionSpec& diffusion, const Point& x0, double dt, double horizon,
                         std::size_t n_paths, std::uint64_t seed, int threads = 1);

/// Number of Euler steps covering [0, horizon] with step dt.
std::size_t step_count(double dt, double horizon);

struct MomentReport {
    int q = 2;
    double t = 0.0;
    double mean = 0.0;
    double ci_low = 0.0;   ///< 99% bootstrap percentile interval
    double ci_high = 0.0;
    std::optional<double> reference;
    std::optional<bool> passed;  ///< set when a reference is supplied
};

/// Empirical E|X_t|^q with a 99% bootstrap interval. With a reference, passes
/// iff it lies in the interval widened by 5% of |reference| on each side.
MomentReport moment_check(const PathBatch& batch, int q, double t,
                          std::optional<double> reference = std::nullopt,
                          std::size_t resamples = 500);

/// CSV "path,step,t,x1..xk".
void write_paths_csv(std::ostream& out, const PathBatch& batch);

} // namespace mswitch
