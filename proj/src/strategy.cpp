#include "mswitch/strategy.hpp"

#include "mswitch/error.hpp"
#include "mswitch/io.hpp"
#include "mswitch/sde.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <fmt/format.h>

namespace mswitch {

SwitchingPolicy::SwitchingPolicy(Grid grid, int modes)
    : grid_(std::move(grid)), modes_(modes),
      decision_(static_cast<std::size_t>(modes) * grid_.num_nodes(), kStay) {}

void SwitchingPolicy::set(int mode, std::size_t node, int target) {
    if (mode < 0 || mode >= modes_ || node >= grid_.num_nodes())
        throw Error(ErrorKind::Config, "policy entry out of range");
    if (target != kStay && (target < 0 || target >= modes_ || target == mode))
        throw Error(ErrorKind::Config, fmt::format("mode {} cannot switch to {}", mode + 1, target + 1));
    decision_[static_cast<std::size_t>(mode) * grid_.num_nodes() + node] = target;
}

SwitchingPolicy extract_policy(const ValueField& field, const SwitchingProblem& problem, const Grid& grid,
                               double eps_bind) {
    const int m = problem.num_modes();
    if (field.modes != m || field.num_nodes() != grid.num_nodes())
        throw Error(ErrorKind::Config, "field dimensions do not match the problem");
    SwitchingPolicy policy(grid, m);
    policy.bind_tolerance = eps_bind;
    policy.source_hash = field.config_hash;
    policy.label = "extracted";
    for (int i = 0; i < m; ++i) {
        const Obstacle obs = obstacle(field.values, problem, grid, i);
        for (std::size_t node = 0; node < grid.num_nodes(); ++node) {
            const auto idx = static_cast<Eigen::Index>(node);
            if (obs.argmax[node] >= 0 && field.values[static_cast<std::size_t>(i)][idx] <= obs.value[idx] + eps_bind)
                policy.set(i, node, obs.argmax[node]);
        }
    }
    return policy;
}

SwitchingPolicy never_switch_policy(const Grid& grid, int modes) {
    SwitchingPolicy policy(grid, modes);
    policy.label = "never_switch";
    return policy;
}

SwitchingPolicy greedy_policy(const ValueField& field) {
    SwitchingPolicy policy(field.grid, field.modes);
    policy.label = "greedy";
    policy.source_hash = field.config_hash;
    for (std::size_t node = 0; node < field.num_nodes(); ++node) {
        int best = 0;
        for (int j = 1; j < field.modes; ++j)
            if (field.value(j, node) > field.value(best, node)) best = j;
        for (int i = 0; i < field.modes; ++i)
            if (i != best) policy.set(i, node, best);
    }
    return policy;
}

Horizon resolve_horizon(const SwitchingProblem& problem, const Point& x0, const MonteCarloSettings& mc) {
    const double r = problem.discount();
    const double gamma = std::clamp(mc.growth_exponent.value_or(estimate_growth_exponent(problem)), 0.0, 16.0);
    double norm = 0.0;
    for (double v : x0) norm += v * v;
    norm = std::sqrt(norm);
    const Point y(static_cast<std::size_t>(problem.num_modes()), 0.0);
    const Point z(static_cast<std::size_t>(problem.dim_noise()), 0.0);
    double level = 1.0;
    for (int i = 0; i < problem.num_modes(); ++i) level = std::max(level, std::abs(problem.generator(i, x0, y, z)));
    Horizon h;
    h.tail_cap = (1.0 + std::pow(norm, gamma)) * level / r;
    h.horizon = mc.horizon.value_or(std::max(mc.dt, std::log(h.tail_cap / mc.tail_tolerance) / r));
    h.tail_bound = std::exp(-r * h.horizon) * h.tail_cap;
    return h;
}

std::vector<StrategyValueEstimate> evaluate_strategies(std::span<const SwitchingPolicy* const> policies,
                                                       const SwitchingProblem& problem,
                                                       const DiffusionSpec& diffusion, const Point& x0, int mode0,
                                                       const MonteCarloSettings& mc) {
    if (!problem.all_state_only())
        throw Error(ErrorKind::CoupledGeneratorUnsupported,
                    "strategy values are path functionals only for state_only generators; verify coupled problems "
                    "through the PDE residual instead");
    const int m = problem.num_modes();
    const int k = problem.dim_state();
    if (mode0 < 0 || mode0 >= m) throw Error(ErrorKind::Config, fmt::format("mode {} out of range", mode0 + 1));
    if (static_cast<int>(x0.size()) != k) throw Error(ErrorKind::Config, "x0 dimension does not match the problem");
    if (!(mc.dt > 0.0) || mc.n_paths < 2) throw Error(ErrorKind::Config, "mc needs dt > 0 and n_paths >= 2");
    if (mc.max_switches < 1) throw Error(ErrorKind::Config, "mc.max_switches must be >= 1");
    for (const auto* p : policies)
        if (p->modes() != m || p->grid().dim() != k) throw Error(ErrorKind::Config, "policy does not match the problem");

    const Horizon hz = resolve_horizon(problem, x0, mc);
    const std::size_t steps = std::max<std::size_t>(1, step_count(mc.dt, hz.horizon));
    const double r = problem.discount();
    const double decay = std::exp(-r * mc.dt);
    const double weight = (1.0 - decay) / r;  // int_0^dt e^{-rs} ds
    const std::size_t np = policies.size();
    const std::size_t paths = mc.n_paths;

    std::vector<double> payoff(np * paths, 0.0);
    std::vector<std::size_t> switch_count(np * paths, 0);
    std::vector<std::size_t> clamped(paths, 0);
    std::vector<std::vector<std::vector<SwitchEvent>>> logs(np, std::vector<std::vector<SwitchEvent>>(
                                                                    mc.record_switches ? paths : 0));

    std::vector<std::uint8_t> shared_grid(np);
    for (std::size_t q = 0; q < np; ++q) shared_grid[q] = policies[q]->grid() == policies.front()->grid();

    auto run = [&](std::size_t begin, std::size_t end) {
        EulerStepper stepper(diffusion, mc.dt, mc.seed);
        Point x(x0.size());
        const Point y(static_cast<std::size_t>(m), 0.0);
        const Point z(static_cast<std::size_t>(problem.dim_noise()), 0.0);
        std::vector<int> mode(np);
        std::vector<double> f(static_cast<std::size_t>(m));
        std::vector<std::uint8_t> have_f(static_cast<std::size_t>(m));
        for (std::size_t p = begin; p < end; ++p) {
            x = x0;
            std::fill(mode.begin(), mode.end(), mode0);
            double discount = 1.0;
            for (std::size_t j = 0; j < steps; ++j) {
                bool outside = false;
                const std::size_t node = policies.front()->grid().nearest_node(x, &outside);
                if (outside) ++clamped[p];
                std::fill(have_f.begin(), have_f.end(), 0);
                for (std::size_t q = 0; q < np; ++q) {
                    const SwitchingPolicy& pol = *policies[q];
                    const std::size_t at = shared_grid[q] ? node : pol.grid().nearest_node(x);
                    int& cur = mode[q];
                    for (int hop = 0; hop < m - 1; ++hop) {
                        const int target = pol.decision(cur, at);
                        if (target == SwitchingPolicy::kStay) break;
                        const double g = problem.cost(cur, target, x);
                        payoff[q * paths + p] -= discount * g;
                        if (++switch_count[q * paths + p] > static_cast<std::size_t>(mc.max_switches))
                            throw Error(ErrorKind::MaxSwitchesExceeded,
                                        fmt::format("policy '{}' path {} exceeded {} switches by t = {}", pol.label, p,
                                                    mc.max_switches, static_cast<double>(j) * mc.dt));
                        if (mc.record_switches)
                            logs[q][p].push_back({p, static_cast<double>(j) * mc.dt, cur, target, g});
                        cur = target;
                    }
                    const auto ci = static_cast<std::size_t>(cur);
                    if (!have_f[ci]) {
                        f[ci] = problem.generator(cur, x, y, z);
                        have_f[ci] = 1;
                    }
                    payoff[q * paths + p] += discount * weight * f[ci];
                }
                stepper.advance(x, p, j);
                discount *= decay;
                for (double v : x)
                    if (!std::isfinite(v) || std::abs(v) > kExplosionBound)
                        throw Error(ErrorKind::NonFiniteState,
                                    fmt::format("path {} step {}: |X| exceeded {:g}", p, j + 1, kExplosionBound));
            }
        }
    };

    const auto workers = static_cast<std::size_t>(std::clamp(mc.threads, 1, 256));
    if (workers == 1 || paths < 2 * workers) {
        run(0, paths);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (paths + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    run(w * chunk, std::min(paths, (w + 1) * chunk));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::size_t clamped_total = 0;
    for (std::size_t c : clamped) clamped_total += c;
    const double clamped_fraction = static_cast<double>(clamped_total) / static_cast<double>(paths * steps);

    std::vector<StrategyValueEstimate> out(np);
    for (std::size_t q = 0; q < np; ++q) {
        StrategyValueEstimate& est = out[q];
        double sum = 0.0;
        for (std::size_t p = 0; p < paths; ++p) sum += payoff[q * paths + p];
        const double mean = sum / static_cast<double>(paths);
        double ss = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            const double dev = payoff[q * paths + p] - mean;
            ss += dev * dev;
        }
        est.value = mean;
        est.standard_error = std::sqrt(ss / static_cast<double>(paths - 1) / static_cast<double>(paths));
        est.n_paths = paths;
        est.horizon = static_cast<double>(steps) * mc.dt;
        est.tail_bound = std::exp(-r * est.horizon) * hz.tail_cap;
        for (std::size_t p = 0; p < paths; ++p) est.switches += switch_count[q * paths + p];
        est.clamped_fraction = clamped_fraction;
        est.boundary_contaminated = clamped_fraction > 0.01;
        if (mc.record_switches)
            for (auto& events : logs[q]) est.switch_log.insert(est.switch_log.end(), events.begin(), events.end());
        std::string settings = fmt::format("dt={};T={};paths={};seed={};max_switches={};mode0={};policy={}",
                                           format_double(mc.dt), format_double(est.horizon), paths, mc.seed,
                                           mc.max_switches, mode0, policies[q]->label);
        for (double v : x0) settings += ";x=" + format_double(v);
        est.settings_hash = hex64(fnv1a64(settings));
        if (!std::isfinite(est.value)) throw Error(ErrorKind::NonFiniteState, "strategy estimate is not finite");
    }
    return out;
}

StrategyValueEstimate evaluate_strategy(const SwitchingPolicy& policy, const SwitchingProblem& problem,
                                        const DiffusionSpec& diffusion, const Point& x0, int mode0,
                                        const MonteCarloSettings& mc) {
    const SwitchingPolicy* one[1] = {&policy};
    return evaluate_strategies(one, problem, diffusion, x0, mode0, mc).front();
}

bool FeynmanKacReport::passed() const noexcept {
    return std::all_of(entries.begin(), entries.end(), [](const FeynmanKacEntry& e) { return e.passed(); });
}

FeynmanKacReport feynman_kac_check(const ValueField& field, const SwitchingProblem& problem,
                                   const DiffusionSpec& diffusion, const Grid& grid,
                                   std::span<const TestPoint> test_points, const MonteCarloSettings& mc,
                                   double eps_disc, double eps_bind) {
    if (!problem.all_state_only())
        throw Error(ErrorKind::CoupledGeneratorUnsupported,
                    "Feynman-Kac validation needs state_only generators; coupled problems are checked by residual");
    const SwitchingPolicy optimal = extract_policy(field, problem, grid, eps_bind);
    const SwitchingPolicy never = never_switch_policy(grid, problem.num_modes());
    const SwitchingPolicy greedy = greedy_policy(field);
    const SwitchingPolicy* policies[3] = {&optimal, &never, &greedy};

    FeynmanKacReport report;
    report.eps_disc = eps_disc;
    report.eps_bind = eps_bind;
    for (const TestPoint& tp : test_points) {
        FeynmanKacEntry entry;
        entry.point = tp;
        entry.pde_value = grid.interpolate(as_span(field.values.at(static_cast<std::size_t>(tp.mode))), tp.x0);
        auto estimates = evaluate_strategies(policies, problem, diffusion, tp.x0, tp.mode, mc);
        entry.optimal = std::move(estimates[0]);
        entry.perturbed = {std::move(estimates[1]), std::move(estimates[2])};
        entry.gap = std::abs(entry.pde_value - entry.optimal.value);
        entry.value_ok = entry.gap <= 3.0 * entry.optimal.standard_error + eps_disc;
        entry.dominance_ok = true;
        for (const auto& sub : entry.perturbed) {
            const double se = std::hypot(entry.optimal.standard_error, sub.standard_error);
            if (sub.value > entry.optimal.value + 2.0 * se) entry.dominance_ok = false;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

void write_switch_log_csv(std::ostream& out, const std::vector<SwitchEvent>& log) {
    out << "path,t,from,to,cost\n";
    for (const auto& e : log)
        out << e.path << ',' << format_double(e.t) << ',' << e.from + 1 << ',' << e.to + 1 << ','
            << format_double(e.cost) << '\n';
}

} // namespace mswitch
