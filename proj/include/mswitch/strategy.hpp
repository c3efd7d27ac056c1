#pragma once

#include "mswitch/grid.hpp"
#include "mswitch/model.hpp"
#include "mswitch/qvi.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mswitch {

/// Decision per (mode, node): kStay or the 0-based target mode.
class SwitchingPolicy {
public:
    static constexpr int kStay = -1;

    SwitchingPolicy() = default;
    SwitchingPolicy(Grid grid, int modes);

    const Grid& grid() const noexcept { return grid_; }
    int modes() const noexcept { return modes_; }
    int decision(int mode, std::size_t node) const {
        return decision_[static_cast<std::size_t>(mode) * grid_.num_nodes() + node];
    }
    /// Rejects targets equal to `mode` or out of range.
    void set(int mode, std::size_t node, int target);

    double bind_tolerance = 0.0;
    std::string source_hash;
    std::string label;

private:
    Grid grid_;
    int modes_ = 0;
    std::vector<int> decision_;
};

/// switch_to(argmax_j (v^j - g_ij)) where v^i <= max_{j != i}(v^j - g_ij) + eps_bind,
/// lowest index on ties; stay elsewhere.
SwitchingPolicy extract_policy(const ValueField& field, const SwitchingProblem& problem, const Grid& grid,
                               double eps_bind);

SwitchingPolicy never_switch_policy(const Grid& grid, int modes);

/// Switches to argmax_j v^j whenever that differs from the current mode,
/// ignoring switching costs.
SwitchingPolicy greedy_policy(const ValueField& field);

struct MonteCarloSettings {
    double dt = 0.01;
    std::optional<double> horizon;  ///< unset: solve e^{-rT} (1 + |x0|^gamma) scale = tail_tolerance
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;
    int max_switches = 1000;        ///< per path
    int threads = 1;
    double tail_tolerance = 1e-4;
    std::optional<double> growth_exponent;  ///< gamma; estimated from the generators when unset
    bool record_switches = false;
};

struct SwitchEvent {
    std::size_t path = 0;
    double t = 0.0;
    int from = 0;
    int to = 0;
    double cost = 0.0;

    bool operator==(const SwitchEvent&) const = default;
};

struct StrategyValueEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t n_paths = 0;
    double horizon = 0.0;
    double tail_bound = 0.0;        ///< e^{-rT} tail_cap
    std::string settings_hash;
    std::size_t switches = 0;
    double clamped_fraction = 0.0;  ///< share of lookups outside the grid box
    bool boundary_contaminated = false;
    std::vector<SwitchEvent> switch_log;

    bool operator==(const StrategyValueEstimate&) const = default;
};

/// Resolved horizon and its tail bound for x0 under the settings.
struct Horizon {
    double horizon = 0.0;
    double tail_cap = 0.0;
    double tail_bound = 0.0;
};
Horizon resolve_horizon(const SwitchingProblem& problem, const Point& x0, const MonteCarloSettings& mc);

StrategyValueEstimate evaluate_strategy(const SwitchingPolicy& policy, const SwitchingProblem& problem,
                                        const DiffusionSpec& diffusion, const Point& x0, int mode0,
                                        const MonteCarloSettings& mc);

/// Several policies on the same simulated paths; element p equals
/// evaluate_strategy(*policies[p], ...) exactly.
std::vector<StrategyValueEstimate> evaluate_strategies(std::span<const SwitchingPolicy* const> policies,
                                                       const SwitchingProblem& problem,
                                                       const DiffusionSpec& diffusion, const Point& x0,
                                                       int mode0, const MonteCarloSettings& mc);

struct TestPoint {
    Point x0;
    int mode = 0;  ///< 0-based
};

struct FeynmanKacEntry {
    TestPoint point;
    double pde_value = 0.0;
    StrategyValueEstimate optimal;
    std::vector<StrategyValueEstimate> perturbed;  ///< never-switch, greedy
    double gap = 0.0;                              ///< |v - J*|
    bool value_ok = false;
    bool dominance_ok = false;
    bool passed() const noexcept { return value_ok && dominance_ok; }
};

struct FeynmanKacReport {
    std::vector<FeynmanKacEntry> entries;
    double eps_disc = 0.0;
    double eps_bind = 0.0;
    bool passed() const noexcept;
};

/// Passes per point iff |v^i(x0) - J*| <= 3 SE + eps_disc and every perturbed
/// J_sub <= J* + 2 sqrt(SE*^2 + SE_sub^2).
FeynmanKacReport feynman_kac_check(const ValueField& field, const SwitchingProblem& problem,
                                   const DiffusionSpec& diffusion, const Grid& grid,
                                   std::span<const TestPoint> test_points, const MonteCarloSettings& mc,
                                   double eps_disc, double eps_bind);

/// CSV "path,t,from,to,cost" with 1-based modes.
void write_switch_log_csv(std::ostream& out, const std::vector<SwitchEvent>& log);

} // namespace mswitch
