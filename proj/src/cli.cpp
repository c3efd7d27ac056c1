#include "mswitch/cli.hpp"

#include "mswitch/error.hpp"
#include "mswitch/grid.hpp"
#include "mswitch/io.hpp"
#include "mswitch/qvi.hpp"
#include "mswitch/sde.hpp"
#include "mswitch/strategy.hpp"
#include "mswitch/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace mswitch {

namespace {

constexpr std::string_view kVersion = "mswitch 1.0.0";

struct Console {
    std::ostream& out;
    std::ostream& err;
    bool quiet;

    template <typename... Args>
    void info(fmt::format_string<Args...> f, Args&&... args) const {
        if (!quiet) out << fmt::format(f, std::forward<Args>(args)...) << '\n';
    }
    template <typename... Args>
    void error(fmt::format_string<Args...> f, Args&&... args) const {
        err << "error: " << fmt::format(f, std::forward<Args>(args)...) << '\n';
    }
};

Console console(const CliOptions& o) {
    return {o.out_stream ? *o.out_stream : std::cout, o.err_stream ? *o.err_stream : std::cerr, o.quiet};
}

RunConfig load(const CliOptions& o) {
    RunConfig cfg = load_config(o.config, o.seed);
    if (o.threads) {
        cfg.solver.threads = *o.threads;
        cfg.mc.mc.threads = *o.threads;
    }
    return cfg;
}

std::filesystem::path out_dir(const CliOptions& o, const RunConfig& cfg) {
    return o.out ? *o.out : std::filesystem::path(cfg.output.directory);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json subharmonicity_json(const SubharmonicityReport& rep) {
    Json violators = Json::array();
    for (std::size_t v = 0; v < std::min<std::size_t>(rep.violators.size(), 10); ++v) {
        const auto& s = rep.violators[v];
        violators.push_back({{"from", s.from + 1}, {"to", s.to + 1}, {"node", s.node}, {"Lg", s.value}});
    }
    return {{"passed", rep.passed}, {"violations", rep.violators.size()}, {"first_violators", violators},
            {"note", "advisory: does not block solving"}};
}

/// Validates, writes validation.json and returns whether the gate passed.
bool gate(const RunConfig& cfg, const DiscreteOperator* op, const std::filesystem::path& dir, const Console& con) {
    Json doc;
    bool passed = false;
    try {
        const ValidationReport report = validate_config(cfg);
        doc = validation_to_json(report);
        passed = report.passed();
        if (!passed) {
            const auto name = *report.first_failure();
            const auto& r = report.results.at(name);
            con.error("validation failed: {} ({}){}", name, r.error,
                      r.witnesses.empty() ? "" : fmt::format(": {}", r.witnesses.front().detail));
        }
    } catch (const Error& e) {
        doc = {{"passed", false}, {"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
        con.error("validation failed: {}", e.what());
    }
    if (op) doc["advisory"]["H3(iii)"] = subharmonicity_json(check_cost_subharmonicity(cfg.problem, *op));
    doc["config_hash"] = cfg.hash();
    write_text_file(dir / "validation.json", dump(doc));
    return passed;
}

Json estimate_json(const StrategyValueEstimate& e) {
    return {{"J_hat", e.value},
            {"se", e.standard_error},
            {"n_paths", e.n_paths},
            {"horizon", e.horizon},
            {"tail_bound", e.tail_bound},
            {"switches", e.switches},
            {"clamped_fraction", e.clamped_fraction},
            {"boundary_contaminated", e.boundary_contaminated},
            {"settings_hash", e.settings_hash}};
}

bool resolutions_valid(const std::vector<int>& res, std::string& why) {
    if (res.size() < 3) {
        why = fmt::format("grid refinement needs at least 3 resolutions, got {}", res.size());
        return false;
    }
    for (std::size_t s = 1; s < res.size(); ++s)
        if (res[s] != 2 * res[s - 1]) {
            why = fmt::format("resolution {} is not double {}", res[s], res[s - 1]);
            return false;
        }
    return true;
}

} // namespace

std::vector<Point> validation_points(const RunConfig& cfg) {
    std::vector<Point> points;
    const std::size_t n = cfg.grid.num_nodes();
    const std::size_t want = std::min(n, cfg.validation.grid_points);
    for (std::size_t s = 0; s < want; ++s) {
        const std::size_t node = want == 1 ? n / 2 : s * (n - 1) / (want - 1);
        points.push_back(cfg.grid.coords(node));
    }
    const auto box = cfg.grid.bounds();
    const auto extra = latin_hypercube(box, cfg.validation.oversample * points.size(), cfg.mc.mc.seed);
    points.insert(points.end(), extra.begin(), extra.end());
    return points;
}

ValidationReport validate_config(const RunConfig& cfg) {
    const auto points = validation_points(cfg);
    ValidationReport report = validate_switching_costs(cfg.problem, points);
    report.merge(probe_monotonicity(cfg.problem, points, cfg.validation.probe_step, cfg.mc.mc.seed));
    report.merge(validate_regularity(cfg.problem, cfg.diffusion, points));
    report.merge(validate_discount(cfg.problem, cfg.diffusion, cfg.x0, cfg.validation.discount));
    auto& h3 = report.results["H3(iii)"];
    if (h3.note.empty()) h3.note = "checked on the grid operator; see advisory";
    return report;
}

int run_solve(const CliOptions& o) {
    const Console con = console(o);
    std::optional<RunConfig> loaded;
    try {
        loaded.emplace(load(o));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    const RunConfig& cfg = *loaded;
    const auto dir = out_dir(o, cfg);
    const std::string hash = cfg.hash();

    std::optional<DiscreteOperator> op;
    std::string assembly_error;
    try {
        op.emplace(discretize_generator(cfg.diffusion, cfg.grid));
    } catch (const Error& e) {
        assembly_error = e.what();
    }
    try {
        if (!gate(cfg, op ? &*op : nullptr, dir, con)) return exit_code::validation_failed;
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    if (!op) {
        con.error("{}", assembly_error);
        write_text_file(dir / "provenance.json",
                        dump({{"config_hash", hash}, {"version", kVersion}, {"status", "diverged"},
                              {"error", assembly_error}}));
        return exit_code::diverged;
    }

    PicardResult result;
    try {
        result = picard_iterate(cfg.problem, *op, cfg.solver);
    } catch (const Error& e) {
        con.error("solver: {}", e.what());
        write_text_file(dir / "provenance.json",
                        dump({{"config_hash", hash}, {"version", kVersion}, {"status", "diverged"},
                              {"error", std::string(to_string(e.kind()))}, {"message", e.what()}}));
        return exit_code::diverged;
    }
    result.field.config_hash = hash;
    const ResidualReport res = residual(result.field, cfg.problem, *op);

    const std::string csv = value_field_csv(result.field);
    write_text_file(dir / "values.csv", csv);
    write_text_file(dir / "trace.json",
                    dump({{"config_hash", hash}, {"steps", trace_to_json(result.trace)},
                          {"warnings", result.trace.warnings}}));
    Json rj = residual_to_json(res);
    rj["config_hash"] = hash;
    write_text_file(dir / "residual.json", dump(rj));
    write_text_file(dir / "provenance.json",
                    dump({{"config_hash", hash},
                          {"version", kVersion},
                          {"status", "ok"},
                          {"solver_tag", result.field.solver_tag},
                          {"outer_iterations", result.field.iterations},
                          {"outer_tol", cfg.solver.outer_tol},
                          {"inner_tol", cfg.solver.inner_tol},
                          {"boundary", std::string(to_string(cfg.grid.boundary_policy()))},
                          {"seeds", {{"mc", cfg.mc.mc.seed}, {"validation", cfg.validation.discount.seed}}},
                          {"values_content_hash", hex64(fnv1a64(csv))}}));
    for (const auto& w : result.trace.warnings) con.err << "warning: " << w << '\n';
    con.info("solve: ok  modes={} nodes={} outer={} residual_sup={:.3g} hash={}", cfg.problem.num_modes(),
             op->size(), result.field.iterations, res.sup, hash);
    return exit_code::ok;
}

int run_simulate(const CliOptions& o) {
    const Console con = console(o);
    std::optional<RunConfig> loaded;
    try {
        loaded.emplace(load(o));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    const RunConfig& cfg = *loaded;
    const auto dir = out_dir(o, cfg);
    const auto field_path = o.field ? *o.field : dir / "values.csv";

    if (!cfg.problem.all_state_only()) {
        con.error("CoupledGeneratorUnsupported: strategy values are path functionals only for state_only "
                  "generators; coupled problems are verified through the PDE residual (run `verify`)");
        return exit_code::coupled_generator;
    }

    ValueField field;
    try {
        field = parse_value_field_csv(read_text_file(field_path), cfg.grid, cfg.problem.num_modes(), cfg.hash());
    } catch (const Error& e) {
        con.error("{}: {}", field_path.string(), e.what());
        return exit_code::config_error;
    }

    FeynmanKacReport report;
    try {
        report = feynman_kac_check(field, cfg.problem, cfg.diffusion, cfg.grid, cfg.mc.test_points, cfg.mc.mc,
                                   cfg.mc.eps_disc, cfg.mc.eps_bind);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::CoupledGeneratorUnsupported) {
            con.error("{}", e.what());
            return exit_code::coupled_generator;
        }
        con.error("simulation: {}", e.what());
        write_text_file(dir / "simulate.json",
                        dump({{"config_hash", cfg.hash()}, {"passed", false},
                              {"error", std::string(to_string(e.kind()))}, {"message", e.what()}}));
        return exit_code::check_failed;
    }

    Json entries = Json::array();
    for (std::size_t t = 0; t < report.entries.size(); ++t) {
        const auto& e = report.entries[t];
        Json subs = Json::array();
        for (const auto& s : e.perturbed) subs.push_back(estimate_json(s));
        Json entry = estimate_json(e.optimal);
        entry["x0"] = point_to_json(e.point.x0);
        entry["mode"] = e.point.mode + 1;
        entry["v"] = e.pde_value;
        entry["gap"] = e.gap;
        entry["J_sub"] = subs;
        entry["J_sub_policies"] = {"never_switch", "greedy"};
        entry["value_ok"] = e.value_ok;
        entry["dominance_ok"] = e.dominance_ok;
        entry["verdict"] = e.passed() ? "pass" : "fail";
        entries.push_back(entry);
        if (cfg.output.switch_log) {
            std::ostringstream log;
            write_switch_log_csv(log, e.optimal.switch_log);
            write_text_file(dir / fmt::format("switch_log_{}.csv", t + 1), log.str());
        }
        con.info("simulate: point {} mode {}  v={:.6g}  J*={:.6g} +- {:.2g}  {}", t + 1, e.point.mode + 1, e.pde_value,
                 e.optimal.value, e.optimal.standard_error, e.passed() ? "pass" : "FAIL");
    }
    if (cfg.output.paths && !cfg.mc.test_points.empty()) {
        const auto& tp = cfg.mc.test_points.front();
        const Horizon hz = resolve_horizon(cfg.problem, tp.x0, cfg.mc.mc);
        const auto batch = simulate_paths(cfg.diffusion, tp.x0, cfg.mc.mc.dt, hz.horizon,
                                          std::min<std::size_t>(cfg.mc.mc.n_paths, 100), cfg.mc.mc.seed,
                                          cfg.mc.mc.threads);
        std::ostringstream paths;
        write_paths_csv(paths, batch);
        write_text_file(dir / "paths.csv", paths.str());
    }
    write_text_file(dir / "simulate.json",
                    dump({{"config_hash", cfg.hash()},
                          {"passed", report.passed()},
                          {"eps_disc", report.eps_disc},
                          {"eps_bind", report.eps_bind},
                          {"entries", entries}}));
    return report.passed() ? exit_code::ok : exit_code::check_failed;
}

int run_verify(const CliOptions& o) {
    const Console con = console(o);
    std::optional<RunConfig> loaded;
    try {
        loaded.emplace(load(o));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    const RunConfig& cfg = *loaded;
    const auto dir = out_dir(o, cfg);
    std::string why;
    if (!resolutions_valid(cfg.verify.resolutions, why)) {
        con.error("{}", why);
        return exit_code::config_error;
    }

    std::optional<DiscreteOperator> op;
    try {
        op.emplace(discretize_generator(cfg.diffusion, cfg.grid));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::diverged;
    }
    if (!gate(cfg, &*op, dir, con)) return exit_code::validation_failed;

    PicardResult result;
    try {
        result = picard_iterate(cfg.problem, *op, cfg.solver);
    } catch (const Error& e) {
        con.error("solver: {}", e.what());
        return exit_code::diverged;
    }
    result.field.config_hash = cfg.hash();
    ValueField& field = result.field;
    if (o.corrupt_field) {
        const std::size_t node = field.num_nodes() / 2;
        field.values[0][static_cast<Eigen::Index>(node)] = result.envelopes.upper[static_cast<Eigen::Index>(node)] + 1.0;
    }

    VerificationSuiteReport suite;
    suite.hashes["config"] = cfg.hash();
    suite.hashes["values"] = hex64(fnv1a64(value_field_csv(field)));
    suite.checks.push_back(obstacle_consistency(field, cfg.problem));
    suite.checks.push_back(envelope_check(field, result.envelopes.upper, result.envelopes.lower, cfg.solver.outer_tol));
    try {
        suite.checks.push_back(grid_refinement_check(cfg.problem, cfg.diffusion, cfg.grid.bounds(),
                                                     cfg.grid.boundary_policy(), cfg.verify.resolutions, cfg.solver,
                                                     {o.anti_diffusion}));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    try {
        suite.checks.push_back(comparison_test(cfg.problem, cfg.problem.shifted(cfg.verify.shift), *op, cfg.solver));
    } catch (const Error& e) {
        CheckResult failed;
        failed.name = "comparison_test";
        failed.passed = false;
        failed.error = std::string(to_string(e.kind()));
        failed.note = e.what();
        suite.checks.push_back(failed);
    }

    Json doc = suite.to_json();
    write_text_file(dir / "verify.json", dump(doc));
    for (const auto& c : suite.checks)
        con.info("verify: {:<22} {}  margin={:.3g}{}", c.name, c.passed ? "pass" : "FAIL", c.margin,
                 c.error.empty() ? "" : fmt::format("  ({})", c.error));
    return suite.exit_code();
}

int run_sweep(const CliOptions& o) {
    const Console con = console(o);
    std::optional<RunConfig> loaded;
    try {
        loaded.emplace(load(o));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::config_error;
    }
    const RunConfig& cfg = *loaded;
    const auto dir = out_dir(o, cfg);
    if (o.axis != "shift" && o.axis != "discount" && o.axis != "cost_scale") {
        con.error("unknown sweep axis '{}' (shift, discount, cost_scale)", o.axis);
        return exit_code::config_error;
    }
    if (o.values.empty()) {
        con.error("sweep needs at least one value");
        return exit_code::config_error;
    }

    std::optional<DiscreteOperator> op;
    try {
        op.emplace(discretize_generator(cfg.diffusion, cfg.grid));
    } catch (const Error& e) {
        con.error("{}", e.what());
        return exit_code::diverged;
    }

    // Distinct reference states, in test-point order.
    std::vector<Point> points;
    for (const auto& tp : cfg.mc.test_points)
        if (std::find(points.begin(), points.end(), tp.x0) == points.end()) points.push_back(tp.x0);

    const int m = cfg.problem.num_modes();
    const int k = cfg.grid.dim();
    std::string table = fmt::format("# config_hash={}\naxis,value,point", cfg.hash());
    for (int a = 1; a <= k; ++a) table += fmt::format(",x{}", a);
    for (int i = 1; i <= m; ++i) table += fmt::format(",v{}", i);
    for (int i = 1; i <= m; ++i) table += fmt::format(",binding{}", i);
    table += ",outer_iterations\n";

    std::vector<std::pair<double, std::vector<double>>> responses;  // (value, v at every point/mode)
    int status = exit_code::ok;
    for (double value : o.values) {
        std::optional<SwitchingProblem> problem;
        try {
            if (o.axis == "shift") problem.emplace(cfg.problem.shifted(value));
            else if (o.axis == "discount") problem.emplace(cfg.problem.with_discount(value));
            else problem.emplace(cfg.problem.with_cost_scale(value));
        } catch (const Error& e) {
            con.error("sweep value {}: {}", value, e.what());
            return exit_code::config_error;
        }
        PicardResult result;
        try {
            result = picard_iterate(*problem, *op, cfg.solver);
        } catch (const Error& e) {
            con.error("sweep value {}: {}", value, e.what());
            status = exit_code::diverged;
            break;
        }
        const auto policy = extract_policy(result.field, *problem, cfg.grid, cfg.mc.eps_bind);
        std::vector<double> binding(static_cast<std::size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            std::size_t count = 0;
            for (std::size_t n = 0; n < cfg.grid.num_nodes(); ++n)
                if (policy.decision(i, n) != SwitchingPolicy::kStay) ++count;
            binding[static_cast<std::size_t>(i)] = static_cast<double>(count) / static_cast<double>(cfg.grid.num_nodes());
        }
        std::vector<double> response;
        for (std::size_t p = 0; p < points.size(); ++p) {
            table += fmt::format("{},{},{}", o.axis, format_double(value), p + 1);
            for (double c : points[p]) table += "," + format_double(c);
            for (int i = 0; i < m; ++i) {
                const double v = cfg.grid.interpolate(as_span(result.field.values[static_cast<std::size_t>(i)]), points[p]);
                response.push_back(v);
                table += "," + format_double(v);
            }
            for (double b : binding) table += "," + format_double(b);
            table += fmt::format(",{}\n", result.field.iterations);
        }
        responses.emplace_back(value, std::move(response));
        con.info("sweep: {}={} solved in {} outer steps", o.axis, format_double(value), result.field.iterations);
    }
    write_text_file(dir / "sweep.csv", table);
    if (status != exit_code::ok) return status;

    if (o.axis == "shift") {
        auto sorted = responses;
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        const double tol = 10.0 * cfg.solver.outer_tol;
        for (std::size_t s = 1; s < sorted.size(); ++s)
            for (std::size_t c = 0; c < sorted[s].second.size(); ++c)
                if (sorted[s].second[c] < sorted[s - 1].second[c] - tol) {
                    con.error("monotone response violated between shift {} and {}", sorted[s - 1].first,
                              sorted[s].first);
                    return exit_code::check_failed;
                }
    }
    return exit_code::ok;
}

} // namespace mswitch
