#pragma once

#include "mswitch/grid.hpp"
#include "mswitch/io.hpp"
#include "mswitch/model.hpp"
#include "mswitch/qvi.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mswitch {

struct CheckWitness {
    std::size_t node = 0;
    int mode = 0;        ///< 0-based
    double value = 0.0;  ///< measured quantity
    double bound = 0.0;  ///< what it was compared against
};

struct CheckResult {
    std::string name;
    bool passed = true;
    bool prerequisite_failed = false;
    std::string error;   ///< error kind name when failed
    double margin = 0.0; ///< smallest slack of the checked inequality (negative when failed)
    std::map<std::string, double> tolerances;
    std::optional<CheckWitness> witness;
    std::string note;
    Json details = Json::object();

    Json to_json() const;
};

/// v^i >= max_{j != i}(v^j - g_ij) - 1e-8 (1 + |v^i|) at every node.
CheckResult obstacle_consistency(const ValueField& field, const SwitchingProblem& problem);

/// lower - 10 eps_out <= v^i <= upper + 10 eps_out at every node.
CheckResult envelope_check(const ValueField& field, const Eigen::VectorXd& upper, const Eigen::VectorXd& lower,
                           double outer_tol);

/// Solves both problems on `op` and checks v_lo <= v_hi + 10 eps_out. The
/// prerequisite f_lo <= f_hi is sampled at every node; a violation is
/// reported as a failed prerequisite (error PrerequisiteOrderViolated).
CheckResult comparison_test(const SwitchingProblem& lo, const SwitchingProblem& hi, const DiscreteOperator& op,
                            const SolverConfig& config);

struct RefinementOptions {
    bool anti_diffusion = false;  ///< test hook: non-monotone assembly
};

/// Solves at each cell count (every axis), restricts to the coarsest grid
/// and requires decreasing successive sup-differences with estimated order
/// >= 0.8. Identical solutions skip the order check. Throws Config unless
/// there are >= 3 resolutions, each double the previous.
CheckResult grid_refinement_check(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                  const std::vector<std::pair<double, double>>& bounds, BoundaryPolicy boundary,
                                  const std::vector<int>& resolutions, const SolverConfig& config,
                                  const RefinementOptions& options = {});

struct VerificationSuiteReport {
    std::vector<CheckResult> checks;
    std::map<std::string, std::string> hashes;

    bool passed() const noexcept;
    bool prerequisite_failed() const noexcept;
    /// 0 all pass, 4 prerequisite violated, 3 any other failure.
    int exit_code() const noexcept;
    Json to_json() const;
};

} // namespace mswitch
