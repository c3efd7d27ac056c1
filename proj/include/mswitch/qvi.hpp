#pragma once

#include "mswitch/grid.hpp"
#include "mswitch/model.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mswitch {

inline std::span<const double> as_span(const Eigen::VectorXd& v) noexcept {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

enum class InnerMethod { penalized, policy_iteration };

std::string_view to_string(InnerMethod m);

struct SolverConfig {
    InnerMethod inner = InnerMethod::policy_iteration;
    std::vector<double> penalty_schedule{1e1, 1e2, 1e3, 1e4};
    double outer_tol = 1e-6;   ///< epsilon_out, sup-norm change between Picard steps
    double inner_tol = 1e-9;   ///< epsilon_in, sup-norm change of the nonlinearity sweeps
    int max_outer = 500;
    int max_inner = 200;
    double damping = 0.0;      ///< v <- (1 - damping) v_new + damping v_old, in [0, 0.5]
    double linear_tol = 1e-10; ///< relative residual accepted from a direct solve before refinement
    /// Box-widths added on each side of the grid for the Dirichlet data solve;
    /// unset picks 100 in 1D and 2 in 2D.
    std::optional<double> envelope_pad;
    int threads = 1;

    /// Throws Config on out-of-range fields.
    void validate() const;
};

/// Nodewise generator f(x_node, v, z) of a single value component.
struct NodeGenerator {
    std::function<double(std::size_t node, double v, std::span<const double> z)> eval;
    bool reads_value = false;
    bool reads_gradient = false;

    bool state_only() const noexcept { return !reads_value && !reads_gradient; }
};

/// Wraps an expression over (x1..xk, y1, z1..zd).
NodeGenerator node_generator(const Expression& f, const DiscreteOperator& op);

struct ObstacleSolution {
    Eigen::VectorXd values;
    int iterations = 0;                   ///< linear solves performed
    std::vector<double> penalties;        ///< n_pen per stage (penalized only)
    std::vector<double> negative_parts;   ///< sup (v - phi)^- after each stage
};

/// Solves min{v - phi, r v - L_h v - f(x, v, sigma^T D_h v)} = 0 nodewise.
/// Dirichlet rows impose `boundary` (min{v - phi, v - boundary} = 0 there).
/// `phi` entries may be -infinity (no obstacle).
ObstacleSolution solve_single_obstacle(const Eigen::VectorXd& phi, const NodeGenerator& generator,
                                       const DiscreteOperator& op, double r, const SolverConfig& config,
                                       const Eigen::VectorXd* boundary = nullptr,
                                       const Eigen::VectorXd* warm_start = nullptr);

ObstacleSolution solve_single_obstacle(const Eigen::VectorXd& phi, const Expression& generator,
                                       const DiscreteOperator& op, double r, const SolverConfig& config);

struct Envelopes {
    Eigen::VectorXd upper;
    Eigen::VectorXd lower;
    /// Dirichlet data used by the switching solve; empty without Dirichlet rows.
    Eigen::VectorXd boundary;
    int sweeps = 0;
};

/// Obstacle-free solves with F = max_i f_i (upper) and F = min_i f_i (lower),
/// every value argument set to the unknown itself. Dirichlet data for a
/// dirichlet_envelope grid comes from the same solves on a padded
/// neumann_zero grid.
Envelopes solve_envelopes(const SwitchingProblem& problem, const DiscreteOperator& op,
                          const SolverConfig& config);

struct ValueField {
    Grid grid;
    int modes = 0;
    int noise_dim = 0;
    std::vector<Eigen::VectorXd> values;                  ///< [mode][node]
    std::vector<std::vector<Eigen::VectorXd>> gradient;   ///< [mode][noise][node], sigma^T D_h v
    std::vector<Eigen::VectorXd> slack;                   ///< [mode][node], 0 on Dirichlet rows
    std::string solver_tag;
    int iterations = 0;
    std::string config_hash;

    double value(int mode, std::size_t node) const {
        return values[static_cast<std::size_t>(mode)][static_cast<Eigen::Index>(node)];
    }
    std::size_t num_nodes() const noexcept { return grid.num_nodes(); }
};

struct OuterStep {
    std::vector<double> sup_change;      ///< per mode
    std::vector<double> min_increment;   ///< per mode, min over nodes of v^n - v^{n-1}
    std::vector<int> inner_iterations;   ///< per mode
    std::vector<double> residual;        ///< per mode, interior sup of the live residual
};

struct IterationTrace {
    std::vector<OuterStep> steps;
    std::vector<std::string> warnings;
};

struct PicardResult {
    ValueField field;
    IterationTrace trace;
    Envelopes envelopes;
};

/// Outer Picard iteration from v^0 = lower envelope. Step n solves, for each
/// mode i, the single-obstacle problem with phi^i = max_{j != i}(v^{j,n-1} - g_ij)
/// and f_i evaluated with y_j = v^{j,n-1} (j != i) and y_i live.
PicardResult picard_iterate(const SwitchingProblem& problem, const DiscreteOperator& op,
                            const SolverConfig& config);
PicardResult picard_iterate(const SwitchingProblem& problem, const DiscreteOperator& op,
                            const SolverConfig& config, const Envelopes& envelopes);

/// phi^i = max_{j != i}(v^j - g_ij) with the argmax (lowest index on ties);
/// -infinity and -1 when m = 1.
struct Obstacle {
    Eigen::VectorXd value;
    std::vector<int> argmax;
};
Obstacle obstacle(const std::vector<Eigen::VectorXd>& values, const SwitchingProblem& problem, const Grid& grid,
                  int mode);

struct ResidualReport {
    double sup = 0.0;
    double l2 = 0.0;                 ///< sqrt(sum r^2 * cell volume)
    std::vector<double> sup_per_mode;
    std::vector<double> l2_per_mode;
    std::size_t worst_node = 0;
    int worst_mode = 0;
    double worst_value = 0.0;        ///< signed complementarity value at the worst node
    double worst_obstacle_gap = 0.0; ///< v^i - max_j(v^j - g_ij) there
    double worst_equation = 0.0;     ///< r v^i - L_h v^i - f_i there
};

/// Complementarity values min(v^i - max_j(v^j - g_ij), r v^i - L_h v^i - f_i(x, v, Z v^i))
/// with all value arguments live; rows imposed by Dirichlet data get 0.
std::vector<Eigen::VectorXd> complementarity(const std::vector<Eigen::VectorXd>& values,
                                             const SwitchingProblem& problem, const DiscreteOperator& op);

/// Norms of the complementarity values over interior, non-Dirichlet nodes.
ResidualReport residual(const ValueField& field, const SwitchingProblem& problem, const DiscreteOperator& op);

/// Fills gradient and slack from values.
void complete_field(ValueField& field, const SwitchingProblem& problem, const DiscreteOperator& op);

} // namespace mswitch
