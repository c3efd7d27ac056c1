#include "mswitch/grid.hpp"

#include "mswitch/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace mswitch {

std::string_view to_string(BoundaryPolicy p) {
    return p == BoundaryPolicy::dirichlet_envelope ? "dirichlet_envelope" : "neumann_zero";
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

Grid::Grid(std::vector<Axis> axes, BoundaryPolicy policy) : axes_(std::move(axes)), policy_(policy) {
    nodes_ = 1;
    for (const auto& ax : axes_) nodes_ *= static_cast<std::size_t>(ax.cells + 1);
}

Grid build_grid(const std::vector<std::pair<double, double>>& bounds, const std::vector<int>& cells,
                BoundaryPolicy policy) {
    if (bounds.empty() || bounds.size() > 2)
        throw Error(ErrorKind::DimensionUnsupported, fmt::format("grids support k in {{1, 2}}, got {}", bounds.size()));
    if (cells.size() != bounds.size())
        throw Error(ErrorKind::BadBounds, "one cell count per axis is required");
    std::vector<Axis> axes;
    long total = 1;
    for (std::size_t a = 0; a < bounds.size(); ++a) {
        const auto [lo, hi] = bounds[a];
        if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
            throw Error(ErrorKind::BadBounds, fmt::format("axis {}: need lo < hi, got [{}, {}]", a + 1, lo, hi));
        if (cells[a] < 2)
            throw Error(ErrorKind::BadBounds, fmt::format("axis {}: at least 2 cells required, got {}", a + 1, cells[a]));
        total *= cells[a];
        axes.push_back({lo, hi, cells[a], (hi - lo) / cells[a]});
    }
    if (total < 4) throw Error(ErrorKind::BadBounds, fmt::format("at least 4 cells required, got {}", total));
    return Grid(std::move(axes), policy);
}

std::vector<std::pair<double, double>> Grid::bounds() const {
    std::vector<std::pair<double, double>> b;
    for (const auto& ax : axes_) b.emplace_back(ax.lo, ax.hi);
    return b;
}

std::vector<int> Grid::cells() const {
    std::vector<int> c;
    for (const auto& ax : axes_) c.push_back(ax.cells);
    return c;
}

std::array<int, 2> Grid::multi_index(std::size_t node) const noexcept {
    if (axes_.size() == 1) return {static_cast<int>(node), 0};
    const auto n2 = static_cast<std::size_t>(axes_[1].cells + 1);
    return {static_cast<int>(node / n2), static_cast<int>(node % n2)};
}

std::size_t Grid::index(std::array<int, 2> mi) const noexcept {
    if (axes_.size() == 1) return static_cast<std::size_t>(mi[0]);
    return static_cast<std::size_t>(mi[0]) * static_cast<std::size_t>(axes_[1].cells + 1) +
           static_cast<std::size_t>(mi[1]);
}

void Grid::coords(std::size_t node, std::span<double> out) const noexcept {
    const auto mi = multi_index(node);
    for (std::size_t a = 0; a < axes_.size(); ++a) out[a] = axes_[a].coord(mi[a]);
}

Point Grid::coords(std::size_t node) const {
    Point x(axes_.size());
    coords(node, x);
    return x;
}

bool Grid::on_boundary(std::size_t node) const noexcept {
    const auto mi = multi_index(node);
    for (std::size_t a = 0; a < axes_.size(); ++a)
        if (mi[a] == 0 || mi[a] == axes_[a].cells) return true;
    return false;
}

std::size_t Grid::nearest_node(std::span<const double> x, bool* clamped) const {
    std::array<int, 2> mi{0, 0};
    bool outside = false;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        const Axis& ax = axes_[a];
        double v = x[a];
        if (v < ax.lo || v > ax.hi) outside = true;
        v = std::clamp(v, ax.lo, ax.hi);
        mi[a] = std::clamp(static_cast<int>(std::lround((v - ax.lo) / ax.h)), 0, ax.cells);
    }
    if (clamped) *clamped = outside;
    return index(mi);
}

double Grid::interpolate(std::span<const double> values, std::span<const double> x) const {
    std::array<int, 2> base{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        const Axis& ax = axes_[a];
        const double s = (std::clamp(x[a], ax.lo, ax.hi) - ax.lo) / ax.h;
        base[a] = std::clamp(static_cast<int>(std::floor(s)), 0, ax.cells - 1);
        frac[a] = std::clamp(s - base[a], 0.0, 1.0);
    }
    if (axes_.size() == 1) {
        const double v0 = values[index(base)];
        const double v1 = values[index({base[0] + 1, 0})];
        return v0 + frac[0] * (v1 - v0);
    }
    double acc = 0.0;
    for (int c0 = 0; c0 < 2; ++c0)
        for (int c1 = 0; c1 < 2; ++c1) {
            const double w = (c0 ? frac[0] : 1.0 - frac[0]) * (c1 ? frac[1] : 1.0 - frac[1]);
            if (w != 0.0) acc += w * values[index({base[0] + c0, base[1] + c1})];
        }
    return acc;
}

Grid Grid::padded(double widths, int max_cells) const {
    std::vector<Axis> axes;
    for (const auto& ax : axes_) {
        const double width = ax.hi - ax.lo;
        const double lo = ax.lo - widths * width;
        const double hi = ax.hi + widths * width;
        const double wanted = std::ceil((hi - lo) / ax.h - 1e-9);
        const int cells = static_cast<int>(std::clamp(wanted, 4.0, static_cast<double>(std::max(max_cells, 4))));
        axes.push_back({lo, hi, cells, (hi - lo) / cells});
    }
    return Grid(std::move(axes), BoundaryPolicy::neumann_zero);
}

bool Grid::operator==(const Grid& other) const {
    if (policy_ != other.policy_ || axes_.size() != other.axes_.size()) return false;
    for (std::size_t a = 0; a < axes_.size(); ++a)
        if (axes_[a].lo != other.axes_[a].lo || axes_[a].hi != other.axes_[a].hi ||
            axes_[a].cells != other.axes_[a].cells)
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// Second-order stencil catalog
// ---------------------------------------------------------------------------

namespace {

struct Direction {
    std::array<int, 2> offset;
    double weight;  // >= 0; contributes weight/2 * (v(x+e) - 2 v(x) + v(x-e))
};

// Decomposes the h-scaled diffusion matrix A~_ab = a_ab / (h_a h_b) as
// sum_k w_k e_k e_k^T with w_k >= 0 and integer offsets e_k. The 7-point
// arrangement covers |A~_12| <= min(A~_11, A~_22); otherwise Selling's
// obtuse-superbase reduction supplies a wider stencil.
bool decompose_2d(double p, double q, double c, std::vector<Direction>& out, bool& wide) {
    out.clear();
    wide = false;
    if (c == 0.0) {
        out.push_back({{1, 0}, p});
        out.push_back({{0, 1}, q});
        return true;
    }
    const double ac = std::abs(c);
    if (ac <= std::min(p, q) * (1.0 + 1e-14)) {
        out.push_back({{1, 0}, std::max(0.0, p - ac)});
        out.push_back({{0, 1}, std::max(0.0, q - ac)});
        out.push_back({{1, c > 0.0 ? 1 : -1}, ac});
        return true;
    }
    if (!(p * q - c * c > 0.0)) return false;  // degenerate: no finite superbase

    using Vec = std::array<long, 2>;
    auto dot = [&](const Vec& u, const Vec& v) {
        return p * static_cast<double>(u[0] * v[0]) + q * static_cast<double>(u[1] * v[1]) +
               c * static_cast<double>(u[0] * v[1] + u[1] * v[0]);
    };
    std::array<Vec, 3> b{Vec{1, 0}, Vec{0, 1}, Vec{-1, -1}};
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (int i = 0; i < 3 && !changed; ++i) {
            for (int j = i + 1; j < 3 && !changed; ++j) {
                if (dot(b[i], b[j]) > 0.0) {
                    const int k = 3 - i - j;
                    const Vec bi = b[i], bj = b[j];
                    b[i] = {-bi[0], -bi[1]};
                    b[j] = bj;
                    b[k] = {bi[0] - bj[0], bi[1] - bj[1]};
                    changed = true;
                }
            }
        }
        if (!changed) {
            for (int k = 0; k < 3; ++k) {
                const int i = (k + 1) % 3, j = (k + 2) % 3;
                const double w = -dot(b[i], b[j]);
                if (w > 0.0)
                    out.push_back({{static_cast<int>(-b[k][1]), static_cast<int>(b[k][0])}, w});
            }
            wide = true;
            return true;
        }
    }
    return false;
}

} // namespace

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

bool DiscreteOperator::has_dirichlet() const noexcept {
    return std::find(dirichlet.begin(), dirichlet.end(), std::uint8_t{1}) != dirichlet.end();
}

std::vector<std::size_t> DiscreteOperator::interior_nodes() const {
    std::vector<std::size_t> nodes;
    for (std::size_t n = 0; n < grid.num_nodes(); ++n)
        if (!grid.on_boundary(n)) nodes.push_back(n);
    return nodes;
}

namespace {

constexpr int kMaxStencilReach = 4;

} // namespace

DiscreteOperator discretize_generator(const DiffusionSpec& diffusion, const Grid& grid,
                                      const AssemblyOptions& options) {
    const int k = grid.dim();
    const int d = diffusion.dim_noise();
    if (diffusion.dim_state() != k)
        throw Error(ErrorKind::DimensionUnsupported,
                    fmt::format("diffusion has k = {} but the grid has {} axes", diffusion.dim_state(), k));
    const std::size_t n = grid.num_nodes();
    const bool mirror = grid.boundary_policy() == BoundaryPolicy::neumann_zero;

    DiscreteOperator op;
    op.grid = grid;
    op.diffusion = diffusion;
    op.dirichlet.assign(n, 0);
    op.scheme.assign(n, 0);

    std::vector<Eigen::Triplet<double>> lt;
    std::vector<std::vector<Eigen::Triplet<double>>> gt(static_cast<std::size_t>(k));
    std::vector<std::vector<Eigen::Triplet<double>>> zt(static_cast<std::size_t>(d));
    lt.reserve(n * (k == 1 ? 3 : 9));

    std::vector<double> x(static_cast<std::size_t>(k)), b(static_cast<std::size_t>(k)),
        s(static_cast<std::size_t>(k * d));
    std::vector<Direction> dirs;
    std::map<std::size_t, double> row;

    for (std::size_t node = 0; node < n; ++node) {
        grid.coords(node, x);
        diffusion.drift(x, b);
        diffusion.sigma(x, s);
        for (double v : b)
            if (!std::isfinite(v))
                throw Error(ErrorKind::NonFiniteState, fmt::format("drift is not finite at node {}", node));
        for (double v : s)
            if (!std::isfinite(v))
                throw Error(ErrorKind::NonFiniteState, fmt::format("sigma is not finite at node {}", node));

        const auto mi = grid.multi_index(node);
        std::uint16_t tag = 0;

        // a = sigma sigma^T, scaled by the spacing.
        std::array<std::array<double, 2>, 2> a{};
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                for (int l = 0; l < d; ++l) acc += s[i * d + l] * s[j * d + l];
                a[i][j] = acc / (grid.axis(i).h * grid.axis(j).h);
            }

        if (k == 1) {
            dirs.assign({{{1, 0}, a[0][0]}});
        } else {
            bool wide = false;
            if (!decompose_2d(a[0][0], a[1][1], 0.5 * (a[0][1] + a[1][0]), dirs, wide))
                throw Error(ErrorKind::MonotonicityUnachievable,
                            fmt::format("node {} at ({}, {}): no monotone stencil for sigma sigma^T_12 = {:g}",
                                        node, x[0], x[1], a[0][1] * grid.axis(0).h * grid.axis(1).h));
            if (wide) tag |= scheme::cross_wide;
            else if (std::any_of(dirs.begin(), dirs.end(), [](const Direction& e) { return e.offset[0] && e.offset[1]; }))
                tag |= scheme::cross_seven_point;
        }
        // On a mirrored face the normal derivative vanishes, so do the mixed
        // second derivatives; keep only the axis-aligned directions there.
        const bool on_face = grid.on_boundary(node);

        row.clear();
        bool outside = false;
        auto add = [&](std::array<int, 2> off, double coef) {
            if (coef == 0.0) return;
            std::array<int, 2> target = mi;
            for (int ax = 0; ax < k; ++ax) {
                int t = mi[ax] + off[ax];
                const int last = grid.axis(ax).cells;
                if (t < 0 || t > last) {
                    if (!mirror) {
                        outside = true;
                        return;
                    }
                    t = t < 0 ? -t : 2 * last - t;
                    t = std::clamp(t, 0, last);
                    tag |= scheme::mirrored;
                }
                target[ax] = t;
            }
            const std::size_t col = grid.index(target);
            row[col] += coef;
        };

        for (const auto& e : dirs) {
            if (e.weight == 0.0) continue;
            const bool mixed = k == 2 && e.offset[0] != 0 && e.offset[1] != 0;
            if (mixed && mirror && on_face) continue;
            if (std::abs(e.offset[0]) > kMaxStencilReach || std::abs(e.offset[1]) > kMaxStencilReach)
                throw Error(ErrorKind::MonotonicityUnachievable,
                            fmt::format("node {}: monotone stencil needs offset ({}, {}) with weight {:g}",
                                        node, e.offset[0], e.offset[1], e.weight));
            const double w = options.anti_diffusion ? -0.5 * e.weight : 0.5 * e.weight;
            add(e.offset, w);
            add({-e.offset[0], -e.offset[1]}, w);
        }
        for (int ax = 0; ax < k; ++ax) {
            const double h = grid.axis(ax).h;
            std::array<int, 2> off{0, 0};
            if (b[ax] >= 0.0) {
                off[ax] = 1;
                add(off, b[ax] / h);
                if (b[ax] > 0.0) tag |= ax == 0 ? scheme::forward_x1 : scheme::forward_x2;
            } else {
                off[ax] = -1;
                add(off, -b[ax] / h);
                tag |= ax == 0 ? scheme::backward_x1 : scheme::backward_x2;
            }
        }

        if (outside) {
            op.dirichlet[node] = 1;
            tag = scheme::dirichlet;
        } else {
            double diag = 0.0;
            for (const auto& [col, coef] : row)
                if (col != node) {
                    lt.emplace_back(static_cast<int>(node), static_cast<int>(col), coef);
                    diag -= coef;
                }
            if (diag != 0.0) lt.emplace_back(static_cast<int>(node), static_cast<int>(node), diag);
        }
        op.scheme[node] = tag;

        // Gradient: central inside, one-sided on faces (exact for affine v).
        for (int ax = 0; ax < k; ++ax) {
            const double h = grid.axis(ax).h;
            std::array<int, 2> lo = mi, hi = mi;
            if (mi[ax] > 0) lo[ax] -= 1;
            if (mi[ax] < grid.axis(ax).cells) hi[ax] += 1;
            const double span = (hi[ax] - lo[ax]) * h;
            const auto cl = static_cast<int>(grid.index(lo));
            const auto ch = static_cast<int>(grid.index(hi));
            gt[ax].emplace_back(static_cast<int>(node), ch, 1.0 / span);
            gt[ax].emplace_back(static_cast<int>(node), cl, -1.0 / span);
            for (int l = 0; l < d; ++l) {
                const double sig = s[ax * d + l];
                if (sig == 0.0) continue;
                zt[l].emplace_back(static_cast<int>(node), ch, sig / span);
                zt[l].emplace_back(static_cast<int>(node), cl, -sig / span);
            }
        }
    }

    const auto dim = static_cast<Eigen::Index>(n);
    op.generator.resize(dim, dim);
    op.generator.setFromTriplets(lt.begin(), lt.end());
    for (int ax = 0; ax < k; ++ax) {
        auto& g = op.gradient.emplace_back(dim, dim);
        g.setFromTriplets(gt[ax].begin(), gt[ax].end());
    }
    for (int l = 0; l < d; ++l) {
        auto& z = op.noise_gradient.emplace_back(dim, dim);
        z.setFromTriplets(zt[l].begin(), zt[l].end());
    }

    if (!options.anti_diffusion) {
        const auto report = check_m_matrix(op);
        if (!report.passed)
            throw Error(ErrorKind::MonotonicityUnachievable,
                        fmt::format("row {}: {}", report.row, report.detail));
    }
    return op;
}

MMatrixReport check_m_matrix(const DiscreteOperator& op) {
    MMatrixReport report;
    const auto& L = op.generator;
    for (Eigen::Index r = 0; r < L.outerSize(); ++r) {
        double diag = 0.0, sum = 0.0, scale = 0.0;
        for (SparseRowMatrix::InnerIterator it(L, r); it; ++it) {
            sum += it.value();
            scale = std::max(scale, std::abs(it.value()));
            if (it.col() == r) {
                diag = it.value();
            } else if (it.value() < 0.0) {
                report.passed = false;
                report.row = static_cast<std::size_t>(r);
                report.detail = fmt::format("off-diagonal ({}, {}) = {:g} < 0", r, it.col(), it.value());
                return report;
            }
        }
        if (diag > 0.0) {
            report.passed = false;
            report.row = static_cast<std::size_t>(r);
            report.detail = fmt::format("diagonal {:g} > 0", diag);
            return report;
        }
        if (sum > 1e-12 * scale) {
            report.passed = false;
            report.row = static_cast<std::size_t>(r);
            report.detail = fmt::format("row sum {:g} > 0", sum);
            return report;
        }
    }
    return report;
}

SubharmonicityReport check_cost_subharmonicity(const SwitchingProblem& problem, const DiscreteOperator& op) {
    SubharmonicityReport report;
    const std::size_t n = op.size();
    const int m = problem.num_modes();
    const auto interior = op.interior_nodes();
    Eigen::VectorXd g(static_cast<Eigen::Index>(n));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            for (std::size_t node = 0; node < n; ++node)
                g[static_cast<Eigen::Index>(node)] = problem.cost(i, j, op.grid.coords(node));
            const Eigen::VectorXd lg = op.generator * g;
            for (std::size_t node : interior) {
                if (op.dirichlet[node]) continue;
                const auto idx = static_cast<Eigen::Index>(node);
                if (lg[idx] > 1e-8 * (1.0 + std::abs(g[idx]))) {
                    report.passed = false;
                    report.violators.push_back({i, j, node, lg[idx]});
                }
            }
        }
    }
    return report;
}

void write_operator_dump(std::ostream& out, const DiscreteOperator& op) {
    out << "{\"dim\":" << op.grid.dim() << ",\"nodes\":" << op.size() << ",\"boundary\":\""
        << to_string(op.grid.boundary_policy()) << "\",\"axes\":[";
    for (int a = 0; a < op.grid.dim(); ++a) {
        const auto& ax = op.grid.axis(a);
        if (a) out << ',';
        out << fmt::format("{{\"lo\":{:.17g},\"hi\":{:.17g},\"cells\":{}}}", ax.lo, ax.hi, ax.cells);
    }
    out << "],\"nnz\":" << op.generator.nonZeros() << "}\n";
    for (Eigen::Index r = 0; r < op.generator.outerSize(); ++r)
        for (SparseRowMatrix::InnerIterator it(op.generator, r); it; ++it)
            out << r << ' ' << it.col() << ' ' << fmt::format("{:.17g}", it.value()) << '\n';
}

} // namespace mswitch
