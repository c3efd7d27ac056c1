#pragma once

#include "mswitch/model.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace mswitch {

enum class BoundaryPolicy { dirichlet_envelope, neumann_zero };

std::string_view to_string(BoundaryPolicy p);

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int cells = 4;
    double h = 0.25;

    double coord(int i) const noexcept { return i == cells ? hi : lo + i * h; }
};

/// Uniform tensor mesh on a box in R^1 or R^2. Nodes are ordered
/// lexicographically in (x1, x2): the last axis varies fastest.
class Grid {
public:
    Grid() = default;
    Grid(std::vector<Axis> axes, BoundaryPolicy policy);

    int dim() const noexcept { return static_cast<int>(axes_.size()); }
    const std::vector<Axis>& axes() const noexcept { return axes_; }
    const Axis& axis(int a) const { return axes_.at(static_cast<std::size_t>(a)); }
    BoundaryPolicy boundary_policy() const noexcept { return policy_; }
    std::size_t num_nodes() const noexcept { return nodes_; }
    std::vector<std::pair<double, double>> bounds() const;
    std::vector<int> cells() const;

    std::array<int, 2> multi_index(std::size_t node) const noexcept;
    std::size_t index(std::array<int, 2> mi) const noexcept;
    Point coords(std::size_t node) const;
    void coords(std::size_t node, std::span<double> out) const noexcept;
    bool on_boundary(std::size_t node) const noexcept;

    /// Nearest node to x after clamping x into the box; `clamped` reports
    /// whether x lay outside.
    std::size_t nearest_node(std::span<const double> x, bool* clamped = nullptr) const;

    /// Multilinear interpolation of nodal values at x (clamped into the box).
    double interpolate(std::span<const double> values, std::span<const double> x) const;

    /// The same box grown by `widths` box-widths on every side, with the
    /// original spacing where `max_cells` allows and neumann_zero boundaries.
    Grid padded(double widths, int max_cells) const;

    bool operator==(const Grid& other) const;

private:
    std::vector<Axis> axes_;
    BoundaryPolicy policy_ = BoundaryPolicy::neumann_zero;
    std::size_t nodes_ = 0;
};

Grid build_grid(const std::vector<std::pair<double, double>>& bounds, const std::vector<int>& cells,
                BoundaryPolicy policy);

/// Per-node record of which stencil variant assembly chose.
namespace scheme {
inline constexpr std::uint16_t forward_x1 = 1u << 0;
inline constexpr std::uint16_t backward_x1 = 1u << 1;
inline constexpr std::uint16_t forward_x2 = 1u << 2;
inline constexpr std::uint16_t backward_x2 = 1u << 3;
inline constexpr std::uint16_t cross_seven_point = 1u << 4;
inline constexpr std::uint16_t cross_wide = 1u << 5;
inline constexpr std::uint16_t mirrored = 1u << 6;
inline constexpr std::uint16_t dirichlet = 1u << 7;
} // namespace scheme

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Monotone finite-difference discretization L_h of
/// L = 1/2 tr(sigma sigma^T D^2) + b . D on a Grid, plus the stencils for
/// z = sigma^T D_h v.
///
/// Invariants (checked at assembly, see check_m_matrix): off-diagonal entries
/// of L_h are >= 0, the diagonal is <= 0 and rows sum to 0 (Dirichlet rows
/// are empty). Hence r I - L_h is a strictly diagonally dominant M-matrix for
/// every r > 0.
struct DiscreteOperator {
    Grid grid;
    DiffusionSpec diffusion;
    SparseRowMatrix generator;                 ///< L_h
    std::vector<SparseRowMatrix> gradient;     ///< D_h per axis
    std::vector<SparseRowMatrix> noise_gradient;  ///< (sigma^T D_h)_l per noise component
    std::vector<std::uint8_t> dirichlet;       ///< rows whose value is imposed
    std::vector<std::uint16_t> scheme;

    std::size_t size() const noexcept { return grid.num_nodes(); }
    bool has_dirichlet() const noexcept;
    /// Non-boundary nodes of the box.
    std::vector<std::size_t> interior_nodes() const;
};

/// Test hooks; production assembly uses the defaults.
struct AssemblyOptions {
    bool anti_diffusion = false;  ///< negate second-order weights (non-monotone)
};

DiscreteOperator discretize_generator(const DiffusionSpec& diffusion, const Grid& grid,
                                      const AssemblyOptions& options = {});

struct MMatrixReport {
    bool passed = true;
    std::size_t row = 0;
    std::string detail;
};

/// Exact sign check: off-diagonals >= 0, diagonal <= 0, row sums <= 1e-12
/// times the row's diagonal magnitude.
MMatrixReport check_m_matrix(const DiscreteOperator& op);

struct SubharmonicViolation {
    int from = 0;
    int to = 0;
    std::size_t node = 0;
    double value = 0.0;
};

struct SubharmonicityReport {
    bool passed = true;
    std::vector<SubharmonicViolation> violators;
};

/// L_h g_ij <= 1e-8 (1 + |g_ij|) at interior nodes, for every i != j.
SubharmonicityReport check_cost_subharmonicity(const SwitchingProblem& problem, const DiscreteOperator& op);

/// Debug dump: one JSON header line with grid metadata, then "row col value".
void write_operator_dump(std::ostream& out, const DiscreteOperator& op);

} // namespace mswitch
