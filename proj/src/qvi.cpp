#include "mswitch/qvi.hpp"

#include "mswitch/error.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <fmt/format.h>

namespace mswitch {

std::string_view to_string(InnerMethod m) {
    return m == InnerMethod::penalized ? "penalized" : "policy_iteration";
}

void SolverConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::Config, what); };
    if (!(outer_tol > 0.0)) fail("solver.outer_tol must be > 0");
    if (!(inner_tol > 0.0)) fail("solver.inner_tol must be > 0");
    if (!(linear_tol > 0.0)) fail("solver.linear_tol must be > 0");
    if (!(damping >= 0.0 && damping <= 0.5)) fail("solver.damping must lie in [0, 0.5]");
    if (max_outer < 1) fail("solver.max_outer must be >= 1");
    if (max_inner < 1) fail("solver.max_inner must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
    if (envelope_pad && !(*envelope_pad >= 0.0)) fail("solver.envelope_pad must be >= 0");
    if (inner == InnerMethod::penalized) {
        if (penalty_schedule.empty()) fail("solver.penalty_schedule must not be empty");
        for (std::size_t s = 0; s < penalty_schedule.size(); ++s) {
            if (!(penalty_schedule[s] > 0.0)) fail("solver.penalty_schedule entries must be > 0");
            if (s > 0 && !(penalty_schedule[s] > penalty_schedule[s - 1]))
                fail("solver.penalty_schedule must be increasing");
        }
    }
}

namespace {

double sup_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// (r I - L_h) with row overrides: a "stop" row becomes the identity and
/// `extra` is added to the diagonal. The sparsity pattern never changes, so
/// the symbolic factorization is computed once.
class ObstacleSystem {
public:
    ObstacleSystem(const DiscreteOperator& op, double r, double linear_tol) : linear_tol_(linear_tol) {
        const auto n = static_cast<Eigen::Index>(op.size());
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<std::size_t>(op.generator.nonZeros() + n));
        for (Eigen::Index row = 0; row < n; ++row) {
            t.emplace_back(row, row, r);
            for (SparseRowMatrix::InnerIterator it(op.generator, row); it; ++it)
                t.emplace_back(row, it.col(), -it.value());
        }
        base_.resize(n, n);
        base_.setFromTriplets(t.begin(), t.end());
        base_.makeCompressed();
        work_ = base_;
        lu_.analyzePattern(work_);
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return base_ * v; }

    Eigen::VectorXd solve(const std::vector<std::uint8_t>& stop, const Eigen::VectorXd& extra,
                          const Eigen::VectorXd& rhs) {
        const double* src = base_.valuePtr();
        double* dst = work_.valuePtr();
        for (Eigen::Index col = 0; col < work_.outerSize(); ++col) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(work_, col); it; ++it) {
                const auto idx = &it.valueRef() - dst;
                const auto row = it.row();
                if (stop[static_cast<std::size_t>(row)]) {
                    it.valueRef() = row == col ? 1.0 : 0.0;
                } else {
                    it.valueRef() = src[idx] + (row == col ? extra[row] : 0.0);
                }
            }
        }
        lu_.factorize(work_);
        if (lu_.info() != Eigen::Success) throw Error(ErrorKind::InnerDiverged, "sparse LU factorization failed");
        Eigen::VectorXd x = lu_.solve(rhs);
        const Eigen::VectorXd res = rhs - work_ * x;
        if (sup_norm(res) > linear_tol_ * (1.0 + sup_norm(rhs))) x += lu_.solve(res);
        if (!x.allFinite()) throw Error(ErrorKind::InnerDiverged, "linear solve produced non-finite values");
        return x;
    }

private:
    Eigen::SparseMatrix<double> base_;
    Eigen::SparseMatrix<double> work_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
    double linear_tol_;
};

std::vector<Eigen::VectorXd> noise_gradients(const DiscreteOperator& op, const Eigen::VectorXd& v) {
    std::vector<Eigen::VectorXd> z;
    z.reserve(op.noise_gradient.size());
    for (const auto& g : op.noise_gradient) z.emplace_back(g * v);
    return z;
}

} // namespace

NodeGenerator node_generator(const Expression& f, const DiscreteOperator& op) {
    NodeGenerator gen;
    gen.reads_value = f.reads_any_value();
    gen.reads_gradient = f.reads_noise();
    std::vector<Point> xs(op.size());
    for (std::size_t n = 0; n < op.size(); ++n) xs[n] = op.grid.coords(n);
    gen.eval = [f, xs = std::move(xs)](std::size_t node, double v, std::span<const double> z) {
        const double y[1] = {v};
        return f.eval(xs[node], y, z);
    };
    return gen;
}

ObstacleSolution solve_single_obstacle(const Eigen::VectorXd& phi, const NodeGenerator& generator,
                                       const DiscreteOperator& op, double r, const SolverConfig& config,
                                       const Eigen::VectorXd* boundary, const Eigen::VectorXd* warm_start) {
    const std::size_t n = op.size();
    const auto size = static_cast<Eigen::Index>(n);
    if (phi.size() != size) throw Error(ErrorKind::Config, "obstacle size does not match the grid");
    for (Eigen::Index i = 0; i < size; ++i)
        if (std::isnan(phi[i]) || phi[i] == std::numeric_limits<double>::infinity())
            throw Error(ErrorKind::Config, fmt::format("obstacle is not finite at node {}", i));
    if (op.has_dirichlet() && (!boundary || boundary->size() != size))
        throw Error(ErrorKind::Config, "Dirichlet rows need boundary data");
    if (!(r > 0.0)) throw Error(ErrorKind::DiscountTooSmall, "r must be > 0");

    ObstacleSystem system(op, r, config.linear_tol);
    ObstacleSolution out;
    Eigen::VectorXd v = warm_start ? *warm_start : Eigen::VectorXd::Zero(size);
    const std::size_t d = op.noise_gradient.size();

    Eigen::VectorXd forcing(size);
    auto compute_forcing = [&](const Eigen::VectorXd& at) {
        std::vector<Eigen::VectorXd> z;
        if (generator.reads_gradient) z = noise_gradients(op, at);
        std::vector<double> zn(d, 0.0);
        for (std::size_t node = 0; node < n; ++node) {
            const auto i = static_cast<Eigen::Index>(node);
            if (op.dirichlet[node]) {
                forcing[i] = r * (*boundary)[i];
                continue;
            }
            for (std::size_t l = 0; l < z.size(); ++l) zn[l] = z[l][i];
            forcing[i] = generator.eval(node, at[i], zn);
        }
        if (!forcing.allFinite()) throw Error(ErrorKind::NonFiniteState, "generator produced non-finite values");
    };

    std::vector<std::uint8_t> stop(n, 0);
    Eigen::VectorXd extra = Eigen::VectorXd::Zero(size);
    Eigen::VectorXd rhs(size);

    // Howard: solve with the current stop set, then pick per row the action
    // attaining min{v - phi, A v - F}; stationary sets are solutions.
    auto howard = [&](Eigen::VectorXd& w) {
        extra.setZero();
        const Eigen::VectorXd aw = system.apply(w);
        for (std::size_t node = 0; node < n; ++node) {
            const auto i = static_cast<Eigen::Index>(node);
            stop[node] = std::isfinite(phi[i]) && (w[i] - phi[i] < aw[i] - forcing[i]);
        }
        for (int it = 0; it < config.max_inner; ++it) {
            for (std::size_t node = 0; node < n; ++node) {
                const auto i = static_cast<Eigen::Index>(node);
                rhs[i] = stop[node] ? phi[i] : forcing[i];
            }
            w = system.solve(stop, extra, rhs);
            ++out.iterations;
            const Eigen::VectorXd a = system.apply(w);
            bool changed = false;
            for (std::size_t node = 0; node < n; ++node) {
                const auto i = static_cast<Eigen::Index>(node);
                const std::uint8_t s = std::isfinite(phi[i]) && (w[i] - phi[i] < a[i] - forcing[i]);
                if (s != stop[node]) {
                    // Keep the current action when both branches agree to
                    // rounding; otherwise Howard may cycle on ties.
                    const double gap = std::abs((w[i] - phi[i]) - (a[i] - forcing[i]));
                    if (gap > 1e-13 * (1.0 + std::abs(w[i]) + std::abs(forcing[i]))) {
                        stop[node] = s;
                        changed = true;
                    }
                }
            }
            if (!changed) return;
        }
        throw Error(ErrorKind::InnerDiverged,
                    fmt::format("policy iteration did not settle within {} iterations", config.max_inner));
    };

    // Semismooth Newton on A v - F - n (phi - v)^+ = 0.
    auto penalized = [&](Eigen::VectorXd& w, double npen) {
        std::fill(stop.begin(), stop.end(), 0);
        std::vector<std::uint8_t> active(n, 0);
        for (std::size_t node = 0; node < n; ++node)
            active[node] = w[static_cast<Eigen::Index>(node)] < phi[static_cast<Eigen::Index>(node)];
        for (int it = 0; it < config.max_inner; ++it) {
            for (std::size_t node = 0; node < n; ++node) {
                const auto i = static_cast<Eigen::Index>(node);
                extra[i] = active[node] ? npen : 0.0;
                rhs[i] = forcing[i] + (active[node] ? npen * phi[i] : 0.0);
            }
            w = system.solve(stop, extra, rhs);
            ++out.iterations;
            bool changed = false;
            for (std::size_t node = 0; node < n; ++node) {
                const std::uint8_t a = w[static_cast<Eigen::Index>(node)] < phi[static_cast<Eigen::Index>(node)];
                if (a != active[node]) {
                    active[node] = a;
                    changed = true;
                }
            }
            if (!changed) return;
        }
        throw Error(ErrorKind::InnerDiverged,
                    fmt::format("penalized Newton did not settle within {} iterations", config.max_inner));
    };

    const bool use_penalty = config.inner == InnerMethod::penalized;
    const std::vector<double> stages = use_penalty ? config.penalty_schedule : std::vector<double>{0.0};
    for (double npen : stages) {
        double previous_change = std::numeric_limits<double>::infinity();
        int growth = 0;
        bool settled = false;
        for (int sweep = 0; sweep < config.max_inner; ++sweep) {
            compute_forcing(v);
            Eigen::VectorXd w = v;
            if (use_penalty) penalized(w, npen);
            else howard(w);
            const double change = sup_norm(w - v);
            v = std::move(w);
            if (generator.state_only() || change < config.inner_tol) {
                settled = true;
                break;
            }
            growth = change > previous_change ? growth + 1 : 0;
            if (growth >= 5)
                throw Error(ErrorKind::InnerDiverged,
                            fmt::format("nonlinearity sweep change grew 5 times in a row (last {:g})", change));
            previous_change = change;
        }
        if (!settled)
            throw Error(ErrorKind::InnerDiverged,
                        fmt::format("nonlinearity sweeps did not reach {:g} within {} sweeps", config.inner_tol,
                                    config.max_inner));
        if (use_penalty) {
            double neg = 0.0;
            for (Eigen::Index i = 0; i < size; ++i)
                if (std::isfinite(phi[i])) neg = std::max(neg, phi[i] - v[i]);
            if (!out.negative_parts.empty()) {
                const double last = out.negative_parts.back();
                if (last > 1e-300 && neg >= last)
                    throw Error(ErrorKind::PenaltyStalled,
                                fmt::format("sup (v - phi)^- went from {:g} to {:g} at n_pen = {:g}", last, neg, npen));
            }
            out.penalties.push_back(npen);
            out.negative_parts.push_back(neg);
        }
    }
    out.values = std::move(v);
    return out;
}

ObstacleSolution solve_single_obstacle(const Eigen::VectorXd& phi, const Expression& generator,
                                       const DiscreteOperator& op, double r, const SolverConfig& config) {
    return solve_single_obstacle(phi, node_generator(generator, op), op, r, config);
}

// ---------------------------------------------------------------------------
// Envelopes
// ---------------------------------------------------------------------------

namespace {

NodeGenerator envelope_generator(const SwitchingProblem& problem, const DiscreteOperator& op, bool upper) {
    NodeGenerator gen;
    for (const auto& mode : problem.modes()) {
        gen.reads_value = gen.reads_value || mode.generator.reads_any_value();
        gen.reads_gradient = gen.reads_gradient || mode.generator.reads_noise();
    }
    std::vector<Point> xs(op.size());
    for (std::size_t n = 0; n < op.size(); ++n) xs[n] = op.grid.coords(n);
    gen.eval = [&problem, upper, xs = std::move(xs)](std::size_t node, double v, std::span<const double> z) {
        const int m = problem.num_modes();
        std::vector<double> y(static_cast<std::size_t>(m), v);
        double best = problem.generator(0, xs[node], y, z);
        for (int i = 1; i < m; ++i) {
            const double f = problem.generator(i, xs[node], y, z);
            best = upper ? std::max(best, f) : std::min(best, f);
        }
        return best;
    };
    return gen;
}

} // namespace

Envelopes solve_envelopes(const SwitchingProblem& problem, const DiscreteOperator& op, const SolverConfig& config) {
    config.validate();
    const auto size = static_cast<Eigen::Index>(op.size());
    const Eigen::VectorXd no_obstacle = Eigen::VectorXd::Constant(size, -std::numeric_limits<double>::infinity());

    Eigen::VectorXd bd_upper, bd_lower;
    if (op.has_dirichlet()) {
        const int k = op.grid.dim();
        const double pad = config.envelope_pad.value_or(k == 1 ? 100.0 : 2.0);
        const int max_cells = k == 1 ? 131072 : 192;
        const Grid big = op.grid.padded(pad, max_cells);
        const DiscreteOperator big_op = discretize_generator(op.diffusion, big);
        const Envelopes outer = solve_envelopes(problem, big_op, config);
        bd_upper = Eigen::VectorXd::Zero(size);
        bd_lower = Eigen::VectorXd::Zero(size);
        for (std::size_t node = 0; node < op.size(); ++node) {
            if (!op.dirichlet[node]) continue;
            const Point x = op.grid.coords(node);
            const auto i = static_cast<Eigen::Index>(node);
            bd_upper[i] = big.interpolate(as_span(outer.upper), x);
            bd_lower[i] = big.interpolate(as_span(outer.lower), x);
        }
    }

    Envelopes env;
    SolverConfig linear = config;
    linear.inner = InnerMethod::policy_iteration;
    const auto up = solve_single_obstacle(no_obstacle, envelope_generator(problem, op, true), op,
                                          problem.discount(), linear, bd_upper.size() ? &bd_upper : nullptr);
    const auto lo = solve_single_obstacle(no_obstacle, envelope_generator(problem, op, false), op,
                                          problem.discount(), linear, bd_lower.size() ? &bd_lower : nullptr);
    env.upper = up.values;
    env.lower = lo.values;
    env.sweeps = up.iterations + lo.iterations;
    for (Eigen::Index i = 0; i < size; ++i) {
        if (env.lower[i] > env.upper[i] + 1e-9 * (1.0 + std::abs(env.upper[i])))
            throw Error(ErrorKind::EnvelopeOrderViolated,
                        fmt::format("node {}: lower envelope {:.12g} exceeds upper {:.12g}", i, env.lower[i],
                                    env.upper[i]));
    }
    if (op.has_dirichlet()) env.boundary = 0.5 * (bd_upper + bd_lower);
    return env;
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

Obstacle obstacle(const std::vector<Eigen::VectorXd>& values, const SwitchingProblem& problem, const Grid& grid,
                  int mode) {
    const auto size = static_cast<Eigen::Index>(grid.num_nodes());
    Obstacle out;
    out.value = Eigen::VectorXd::Constant(size, -std::numeric_limits<double>::infinity());
    out.argmax.assign(grid.num_nodes(), -1);
    const int m = problem.num_modes();
    if (m == 1) return out;
    Point x(static_cast<std::size_t>(grid.dim()));
    for (Eigen::Index i = 0; i < size; ++i) {
        grid.coords(static_cast<std::size_t>(i), x);
        for (int j = 0; j < m; ++j) {
            if (j == mode) continue;
            const double cand = values[static_cast<std::size_t>(j)][i] - problem.cost(mode, j, x);
            if (out.argmax[static_cast<std::size_t>(i)] < 0 || cand > out.value[i]) {
                out.value[i] = cand;
                out.argmax[static_cast<std::size_t>(i)] = j;
            }
        }
    }
    return out;
}

std::vector<Eigen::VectorXd> complementarity(const std::vector<Eigen::VectorXd>& values,
                                             const SwitchingProblem& problem, const DiscreteOperator& op) {
    const int m = problem.num_modes();
    const std::size_t n = op.size();
    const double r = problem.discount();
    std::vector<Eigen::VectorXd> out;
    std::vector<double> y(static_cast<std::size_t>(m)), z(op.noise_gradient.size());
    Point x(static_cast<std::size_t>(op.grid.dim()));
    for (int i = 0; i < m; ++i) {
        const auto& v = values[static_cast<std::size_t>(i)];
        const Obstacle obs = obstacle(values, problem, op.grid, i);
        const Eigen::VectorXd lv = op.generator * v;
        const auto zv = noise_gradients(op, v);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t node = 0; node < n; ++node) {
            if (op.dirichlet[node]) continue;
            const auto idx = static_cast<Eigen::Index>(node);
            op.grid.coords(node, x);
            for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(j)] = values[static_cast<std::size_t>(j)][idx];
            for (std::size_t l = 0; l < z.size(); ++l) z[l] = zv[l][idx];
            const double eq = r * v[idx] - lv[idx] - problem.generator(i, x, y, z);
            s[idx] = std::min(v[idx] - obs.value[idx], eq);
        }
        out.push_back(std::move(s));
    }
    return out;
}

ResidualReport residual(const ValueField& field, const SwitchingProblem& problem, const DiscreteOperator& op) {
    if (field.modes != problem.num_modes() || field.num_nodes() != op.size())
        throw Error(ErrorKind::Config, "field dimensions do not match the problem");
    const auto slack = complementarity(field.values, problem, op);
    double volume = 1.0;
    for (const auto& ax : op.grid.axes()) volume *= ax.h;
    ResidualReport report;
    double total = 0.0;
    bool found = false;
    for (int i = 0; i < problem.num_modes(); ++i) {
        double sup = 0.0, l2 = 0.0;
        for (std::size_t node = 0; node < op.size(); ++node) {
            if (op.grid.on_boundary(node) || op.dirichlet[node]) continue;
            const double s = slack[static_cast<std::size_t>(i)][static_cast<Eigen::Index>(node)];
            sup = std::max(sup, std::abs(s));
            l2 += s * s * volume;
            if (!found || std::abs(s) > std::abs(report.worst_value)) {
                found = true;
                report.worst_value = s;
                report.worst_node = node;
                report.worst_mode = i;
            }
        }
        report.sup_per_mode.push_back(sup);
        report.l2_per_mode.push_back(std::sqrt(l2));
        report.sup = std::max(report.sup, sup);
        total += l2;
    }
    report.l2 = std::sqrt(total);
    if (found) {
        const int i = report.worst_mode;
        const auto idx = static_cast<Eigen::Index>(report.worst_node);
        const auto& v = field.values[static_cast<std::size_t>(i)];
        report.worst_obstacle_gap = v[idx] - obstacle(field.values, problem, op.grid, i).value[idx];
        const Eigen::VectorXd lv = op.generator * v;
        std::vector<double> y, z;
        for (const auto& vj : field.values) y.push_back(vj[idx]);
        for (const auto& zl : noise_gradients(op, v)) z.push_back(zl[idx]);
        report.worst_equation = problem.discount() * v[idx] - lv[idx] -
                                problem.generator(i, op.grid.coords(report.worst_node), y, z);
    }
    return report;
}

void complete_field(ValueField& field, const SwitchingProblem& problem, const DiscreteOperator& op) {
    field.grid = op.grid;
    field.modes = problem.num_modes();
    field.noise_dim = op.diffusion.dim_noise();
    field.gradient.clear();
    for (const auto& v : field.values) field.gradient.push_back(noise_gradients(op, v));
    field.slack = complementarity(field.values, problem, op);
}

PicardResult picard_iterate(const SwitchingProblem& problem, const DiscreteOperator& op, const SolverConfig& config) {
    return picard_iterate(problem, op, config, solve_envelopes(problem, op, config));
}

namespace {

constexpr double kObstacleSlack = 1e-9;

/// Largest relative shortfall max(0, obstacle - v) / (1 + |v|) over all modes.
double obstacle_gap(const std::vector<Eigen::VectorXd>& v, const SwitchingProblem& problem, const Grid& grid) {
    double gap = 0.0;
    for (int i = 0; i < problem.num_modes(); ++i) {
        const Obstacle obs = obstacle(v, problem, grid, i);
        const auto& vi = v[static_cast<std::size_t>(i)];
        for (Eigen::Index n = 0; n < vi.size(); ++n)
            gap = std::max(gap, (obs.value[n] - vi[n]) / (1.0 + std::abs(vi[n])));
    }
    return gap;
}

} // namespace

PicardResult picard_iterate(const SwitchingProblem& problem, const DiscreteOperator& op, const SolverConfig& config,
                            const Envelopes& envelopes) {
    config.validate();
    const int m = problem.num_modes();
    const std::size_t n = op.size();
    const double r = problem.discount();
    const Eigen::VectorXd* boundary = envelopes.boundary.size() ? &envelopes.boundary : nullptr;

    std::vector<Point> xs(n);
    for (std::size_t node = 0; node < n; ++node) xs[node] = op.grid.coords(node);

    PicardResult result;
    result.envelopes = envelopes;
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(m), envelopes.lower);
    const double warn_floor = -10.0 * config.inner_tol;
    const double fail_floor = -100.0 * config.inner_tol;

    bool converged = false;
    int step = 0;
    while (step < config.max_outer) {
        ++step;
        const std::vector<Eigen::VectorXd> prev = v;
        std::vector<Eigen::VectorXd> next(static_cast<std::size_t>(m));
        std::vector<int> inner(static_cast<std::size_t>(m), 0);

        auto solve_mode = [&](int i) {
            const Obstacle obs = obstacle(prev, problem, op.grid, i);
            const auto& spec = problem.mode(i);
            NodeGenerator gen;
            gen.reads_value = spec.generator.reads_value(i);
            gen.reads_gradient = spec.generator.reads_noise();
            gen.eval = [&, i](std::size_t node, double own, std::span<const double> z) {
                thread_local std::vector<double> y;
                y.resize(static_cast<std::size_t>(m));
                const auto idx = static_cast<Eigen::Index>(node);
                for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(j)] = prev[static_cast<std::size_t>(j)][idx];
                y[static_cast<std::size_t>(i)] = own;
                return problem.generator(i, xs[node], y, z);
            };
            auto sol = solve_single_obstacle(obs.value, gen, op, r, config, boundary, &prev[static_cast<std::size_t>(i)]);
            next[static_cast<std::size_t>(i)] = std::move(sol.values);
            inner[static_cast<std::size_t>(i)] = sol.iterations;
        };

        if (config.threads > 1 && m > 1) {
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m));
            std::vector<std::thread> pool;
            for (int i = 0; i < m; ++i)
                pool.emplace_back([&, i] {
                    try {
                        solve_mode(i);
                    } catch (...) {
                        errors[static_cast<std::size_t>(i)] = std::current_exception();
                    }
                });
            for (auto& t : pool) t.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        } else {
            for (int i = 0; i < m; ++i) solve_mode(i);
        }

        OuterStep rec;
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            auto& vi = next[static_cast<std::size_t>(i)];
            const auto& pi = prev[static_cast<std::size_t>(i)];
            if (config.damping > 0.0) vi = (1.0 - config.damping) * vi + config.damping * pi;
            const Eigen::VectorXd inc = vi - pi;
            Eigen::Index at = 0;
            const double min_inc = inc.minCoeff(&at);
            rec.sup_change.push_back(sup_norm(inc));
            rec.min_increment.push_back(min_inc);
            rec.inner_iterations.push_back(inner[static_cast<std::size_t>(i)]);
            worst = std::max(worst, rec.sup_change.back());
            if (min_inc < fail_floor)
                throw Error(ErrorKind::MonotonicityBroken,
                            fmt::format("outer step {}: mode {} decreased by {:g} at node {}", step, i + 1, -min_inc,
                                        at));
            if (min_inc < warn_floor)
                result.trace.warnings.push_back(
                    fmt::format("outer step {}: mode {} decreased by {:g} at node {}", step, i + 1, -min_inc, at));
        }
        v = std::move(next);
        const auto slack = complementarity(v, problem, op);
        for (int i = 0; i < m; ++i) {
            double sup = 0.0;
            for (std::size_t node = 0; node < n; ++node)
                if (!op.grid.on_boundary(node) && !op.dirichlet[node])
                    sup = std::max(sup, std::abs(slack[static_cast<std::size_t>(i)][static_cast<Eigen::Index>(node)]));
            rec.residual.push_back(sup);
        }
        result.trace.steps.push_back(std::move(rec));
        if (worst < config.outer_tol) converged = true;
        // Past the tolerance, keep stepping until the obstacle built from the
        // current iterate holds too (the last solve only saw the previous one).
        if (converged && obstacle_gap(v, problem, op.grid) <= kObstacleSlack) break;
    }
    if (!converged)
        throw Error(ErrorKind::MaxOuterIterations,
                    fmt::format("Picard iteration did not reach {:g} within {} steps", config.outer_tol,
                                config.max_outer));

    for (const auto& vi : v)
        if (!vi.allFinite()) throw Error(ErrorKind::NonFiniteState, "value field has non-finite entries");

    ValueField& field = result.field;
    field.values = std::move(v);
    field.solver_tag = fmt::format("picard/{}", to_string(config.inner));
    field.iterations = step;
    complete_field(field, problem, op);
    return result;
}

} // namespace mswitch
