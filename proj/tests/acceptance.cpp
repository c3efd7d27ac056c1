// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include "mswitch/cli.hpp"
#include "mswitch/config.hpp"
#include "mswitch/io.hpp"
#include "mswitch/qvi.hpp"
#include "mswitch/strategy.hpp"
#include "mswitch/verify.hpp"

#include "support.hpp"

#include <fmt/core.h>

#include <chrono>
#include <functional>
#include <sstream>

using namespace mswitch;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kDesk{"constants_slack", "constants_binding", "geometric",     "ou_two_mode",
                                     "own_component",   "fully_coupled",     "correlated_2d", "single_obstacle"};

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Solved {
    RunConfig config;
    DiscreteOperator op;
    PicardResult result;
};

Solved solve_desk(const std::string& name) {
    auto cfg = load_config(testing::desk(name));
    auto op = discretize_generator(cfg.diffusion, cfg.grid);
    auto result = picard_iterate(cfg.problem, op, cfg.solver);
    return {std::move(cfg), std::move(op), std::move(result)};
}

const std::vector<Solved>& desk_solutions() {
    static const std::vector<Solved> solved = [] {
        std::vector<Solved> out;
        for (const auto& name : kDesk) out.push_back(solve_desk(name));
        return out;
    }();
    return solved;
}

Outcome constants_oracle() {
    Outcome o;
    const std::vector<std::pair<std::vector<double>, std::vector<std::vector<double>>>> cases{
        {{1.0, 3.0}, {{0, 5}, {5, 0}}},
        {{1.0, 3.0}, {{0, 1}, {1, 0}}},
        {{1.0, 2.5, 0.5}, {{0, 0.7, 0.2}, {0.4, 0, 0.3}, {0.1, 0.9, 0}}}};
    for (const auto& [f, g] : cases) {
        const double r = 1.0;
        const auto exact = testing::scalar_switching_fixed_point(f, g, r);
        std::vector<std::string> generators;
        for (double c : f) generators.push_back(fmt::format("{}", c));
        const auto p = SwitchingProblem::from_strings(1, 1, generators, testing::constant_costs(g), r);
        const auto start = std::chrono::steady_clock::now();
        const auto field = picard_iterate(p, testing::zero_operator(63), SolverConfig{}).field;
        const double elapsed = seconds_since(start);
        double err = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            err = std::max(err, (field.values[i].array() - exact[i]).abs().maxCoeff());
        o.require(err <= 1e-8, fmt::format("m={} sup error {:.3g}", f.size(), err));
        o.require(elapsed < 1.0, fmt::format("m={} took {:.3f}s", f.size(), elapsed));
    }
    return o;
}

Outcome geometric() {
    Outcome o;
    const auto& s = desk_solutions()[2];
    const double r = s.config.problem.discount();
    const double mu = 0.05;
    const auto& g = s.config.grid;
    const double lo = g.axes()[0].lo, hi = g.axes()[0].hi, quarter = 0.25 * (hi - lo);
    double worst = 0.0;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
        const double x = g.coords(n)[0];
        if (x < lo + quarter || x > hi - quarter) continue;
        const double exact = x / (r - mu);
        worst = std::max(worst, std::abs(s.result.field.value(0, n) - exact) / exact);
    }
    o.require(worst <= 0.01, fmt::format("interior relative error {:.4f}", worst));
    const auto refinement = grid_refinement_check(s.config.problem, s.config.diffusion, g.bounds(), g.boundary_policy(),
                                                  s.config.verify.resolutions, s.config.solver);
    const double order = refinement.details.contains("order") ? refinement.details["order"].get<double>() : 0.0;
    o.require(refinement.passed && order >= 0.8, fmt::format("refinement order {:.3f}", order));
    o.detail = o.passed ? fmt::format("error {:.2e}, order {:.2f}", worst, order) : o.detail;
    return o;
}

Outcome monotone_iterates() {
    Outcome o;
    for (std::size_t k = 0; k < kDesk.size(); ++k) {
        const auto& s = desk_solutions()[k];
        double worst = 0.0;
        for (const auto& step : s.result.trace.steps)
            for (double inc : step.min_increment) worst = std::min(worst, inc);
        o.require(worst >= -10.0 * s.config.solver.inner_tol, fmt::format("{} min increment {:.3g}", kDesk[k], worst));
    }
    return o;
}

Outcome obstacle_and_envelopes() {
    Outcome o;
    for (std::size_t k = 0; k < kDesk.size(); ++k) {
        const auto& s = desk_solutions()[k];
        const auto obs = obstacle_consistency(s.result.field, s.config.problem);
        o.require(obs.passed, fmt::format("{} obstacle margin {:.3g}", kDesk[k], obs.margin));
        const auto env = envelope_check(s.result.field, s.result.envelopes.upper, s.result.envelopes.lower,
                                        s.config.solver.outer_tol);
        o.require(env.passed, fmt::format("{} envelope margin {:.3g}", kDesk[k], env.margin));
    }
    return o;
}

Outcome residuals() {
    Outcome o;
    double worst = 0.0;
    for (std::size_t k = 0; k < kDesk.size(); ++k) {
        const auto& s = desk_solutions()[k];
        bool eligible = true;
        for (const auto& mode : s.config.problem.modes())
            eligible = eligible && (mode.coupling == Coupling::state_only || mode.coupling == Coupling::own_component);
        if (!eligible) continue;
        const auto report = residual(s.result.field, s.config.problem, s.op);
        worst = std::max(worst, report.sup);
        o.require(report.sup <= 1e-5, fmt::format("{} residual {:.3g}", kDesk[k], report.sup));
    }
    if (o.passed) o.detail = fmt::format("worst {:.2e}", worst);
    return o;
}

Outcome comparison() {
    Outcome o;
    for (std::size_t k = 0; k < kDesk.size(); ++k) {
        const auto& s = desk_solutions()[k];
        const auto res = comparison_test(s.config.problem, s.config.problem.shifted(1.0), s.op, s.config.solver);
        o.require(res.passed, fmt::format("{} shifted ordering margin {:.3g}", kDesk[k], res.margin));
    }
    const double r = 0.5;
    const auto p = SwitchingProblem::from_strings(1, 1, {"1", "2"}, testing::constant_costs({{0, 1}, {1, 0}}), r);
    const auto op = testing::zero_operator(16);
    const auto lo = picard_iterate(p, op, SolverConfig{}).field;
    const auto hi = picard_iterate(p.shifted(1.0), op, SolverConfig{}).field;
    double err = 0.0;
    for (int i = 0; i < 2; ++i)
        err = std::max(err, ((hi.values[i] - lo.values[i]).array() - 1.0 / r).abs().maxCoeff());
    o.require(err <= 1e-8, fmt::format("zero-operator shift error {:.3g}", err));
    return o;
}

Outcome penalty_rate() {
    Outcome o;
    const auto cfg = load_config(testing::desk("single_obstacle"));
    const auto op = discretize_generator(cfg.diffusion, cfg.grid);
    const auto f = Expression::parse("0.5*x1", {1, 1, 1});
    const Eigen::VectorXd phi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(op.size()), 0.1);
    SolverConfig howard_cfg = cfg.solver, pen_cfg = cfg.solver;
    howard_cfg.inner = InnerMethod::policy_iteration;
    pen_cfg.inner = InnerMethod::penalized;
    const double r = cfg.problem.discount();
    const auto howard = solve_single_obstacle(phi, f, op, r, howard_cfg);
    const auto pen = solve_single_obstacle(phi, f, op, r, pen_cfg);
    const double gap = testing::sup_abs_diff(howard.values, pen.values);
    o.require(gap <= 1e-4, fmt::format("penalized vs policy iteration {:.3g}", gap));

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(pen.penalties.size());
    for (std::size_t s = 0; s < pen.penalties.size(); ++s) {
        const double x = std::log(pen.penalties[s]), y = std::log(pen.negative_parts[s]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = -(k * sxy - sx * sy) / (k * sxx - sx * sx);
    o.require(slope >= 0.8 && slope <= 1.2, fmt::format("negative-part slope {:.3f}", slope));

    // The same problem through the two-mode encoding.
    const auto& s = desk_solutions()[7];
    const double encoded = (s.result.field.values[0] - howard.values).cwiseAbs().maxCoeff();
    o.require(encoded <= 1e-6, fmt::format("two-mode encoding differs by {:.3g}", encoded));
    if (o.passed) o.detail = fmt::format("gap {:.2e}, slope {:.3f}", gap, slope);
    return o;
}

Outcome feynman_kac() {
    Outcome o;
    const auto& s = desk_solutions()[3];
    const auto& cfg = s.config;
    const auto start = std::chrono::steady_clock::now();
    const auto report = feynman_kac_check(s.result.field, cfg.problem, cfg.diffusion, cfg.grid, cfg.mc.test_points,
                                          cfg.mc.mc, cfg.mc.eps_disc, cfg.mc.eps_bind);
    const double elapsed = seconds_since(start);
    o.require(cfg.mc.mc.n_paths >= 100000, "fewer than 1e5 paths");
    o.require(elapsed < 60.0, fmt::format("simulation took {:.1f}s", elapsed));
    for (const auto& e : report.entries) {
        const double rel_se = e.optimal.standard_error / std::abs(e.pde_value);
        o.require(e.passed(), fmt::format("mode {} gap {:.3g} se {:.3g}", e.point.mode + 1, e.gap,
                                          e.optimal.standard_error));
        o.require(rel_se <= 0.01, fmt::format("mode {} relative se {:.3g}", e.point.mode + 1, rel_se));
    }

    // Box sensitivity: 1.5x wider box at the same mesh width.
    const auto& axis = cfg.grid.axes()[0];
    const double centre = 0.5 * (axis.lo + axis.hi), half = 0.75 * (axis.hi - axis.lo);
    const auto wide_grid = build_grid({{centre - half, centre + half}}, {axis.cells * 3 / 2}, cfg.grid.boundary_policy());
    const auto wide = picard_iterate(cfg.problem, discretize_generator(cfg.diffusion, wide_grid), cfg.solver).field;
    double worst = 0.0;
    for (const auto& tp : cfg.mc.test_points) {
        const double a = cfg.grid.interpolate(as_span(s.result.field.values[tp.mode]), tp.x0);
        const double b = wide_grid.interpolate(as_span(wide.values[tp.mode]), tp.x0);
        worst = std::max(worst, std::abs(a - b) / std::abs(a));
    }
    o.require(worst < 0.005, fmt::format("box sensitivity {:.3g}", worst));
    if (o.passed) o.detail = fmt::format("{} points in {:.1f}s, box sensitivity {:.2e}", report.entries.size(), elapsed, worst);
    return o;
}

Outcome discretization() {
    Outcome o;
    for (std::size_t k = 0; k < kDesk.size(); ++k) {
        const auto& s = desk_solutions()[k];
        const auto m = check_m_matrix(s.op);
        o.require(m.passed, fmt::format("{} row {}: {}", kDesk[k], m.row, m.detail));
        const auto& g = s.config.grid;
        const int dim = g.dim();
        Eigen::VectorXd affine(static_cast<Eigen::Index>(g.num_nodes()));
        const std::vector<double> slope{1.5, -0.75};
        for (std::size_t n = 0; n < g.num_nodes(); ++n) {
            const auto x = g.coords(n);
            double v = 0.25;
            for (int a = 0; a < dim; ++a) v += slope[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
            affine[static_cast<Eigen::Index>(n)] = v;
        }
        for (int a = 0; a < dim; ++a) {
            const Eigen::VectorXd d = s.op.gradient[static_cast<std::size_t>(a)] * affine;
            const double err = (d.array() - slope[static_cast<std::size_t>(a)]).abs().maxCoeff();
            o.require(err <= 1e-9, fmt::format("{} axis {} gradient error {:.3g}", kDesk[k], a + 1, err));
        }
    }
    return o;
}

int run_quiet(const std::function<int(const CliOptions&)>& command, const fs::path& config, const fs::path& out) {
    std::ostringstream sink;
    CliOptions o;
    o.config = config;
    o.out = out;
    o.out_stream = &sink;
    o.err_stream = &sink;
    return command(o);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    return files;
}

Outcome reproducibility() {
    Outcome o;
    for (const std::string name : {"constants_binding", "correlated_2d", "own_component"}) {
        const auto a = testing::scratch("acceptance_" + name + "_a");
        const auto b = testing::scratch("acceptance_" + name + "_b");
        for (const auto& dir : {a, b}) {
            const int status = run_quiet(run_solve, testing::desk(name), dir);
            o.require(status == exit_code::ok, fmt::format("{} solve exit {}", name, status));
        }
        o.require(snapshot(a) == snapshot(b), fmt::format("{} artifacts differ between runs", name));
    }
    for (const std::string name : {"free_loop", "nonmonotone", "discount"}) {
        const int status = run_quiet(run_solve, testing::negative(name), testing::scratch("acceptance_neg_" + name));
        o.require(status == exit_code::validation_failed, fmt::format("{} exit {}", name, status));
    }
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"constants fixed point", constants_oracle},
        {"geometric closed form and refinement", geometric},
        {"monotone Picard iterates", monotone_iterates},
        {"obstacle and envelope bounds", obstacle_and_envelopes},
        {"complementarity residual", residuals},
        {"comparison under a shift", comparison},
        {"penalized vs policy iteration", penalty_rate},
        {"Feynman-Kac agreement", feynman_kac},
        {"monotone discretization", discretization},
        {"reproducibility and negative controls", reproducibility}};
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.passed = false;
            o.detail = e.what();
        }
        failures += o.passed ? 0 : 1;
        fmt::print("criterion {}: {} {}{}\n", k + 1, o.passed ? "PASS" : "FAIL", criteria[k].first,
                   o.detail.empty() ? "" : " (" + o.detail + ")");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
