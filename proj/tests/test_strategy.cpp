#include "mswitch/error.hpp"
#include "mswitch/strategy.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mswitch;

namespace {

SwitchingProblem constants(double g) {
    return SwitchingProblem::from_strings(1, 1, {"1", "3"}, testing::constant_costs({{0, g}, {g, 0}}), 1.0);
}

const DiffusionSpec kFrozen = DiffusionSpec::constant({0.0}, {0.0}, 1);

MonteCarloSettings deterministic(double horizon = 20.0) {
    MonteCarloSettings mc;
    mc.horizon = horizon;
    mc.n_paths = 8;
    mc.dt = 0.01;
    return mc;
}

ValueField solved(const SwitchingProblem& p, const DiscreteOperator& op) {
    return picard_iterate(p, op, SolverConfig{}).field;
}

/// int_0^T e^{-s} c ds with the exact per-step weight, i.e. c (1 - e^{-T}).
double discounted(double c, double T) { return c * (1.0 - std::exp(-T)); }

} // namespace

TEST_CASE("policy extraction on the constants problem") {
    const auto op = testing::zero_operator();
    SUBCASE("binding mode 1") {
        const auto policy = extract_policy(solved(constants(1.0), op), constants(1.0), op.grid, 1e-9);
        for (std::size_t n = 0; n < op.size(); ++n) {
            CHECK(policy.decision(0, n) == 1);
            CHECK(policy.decision(1, n) == SwitchingPolicy::kStay);
        }
    }
    SUBCASE("slack everywhere") {
        const auto policy = extract_policy(solved(constants(5.0), op), constants(5.0), op.grid, 1e-9);
        for (std::size_t n = 0; n < op.size(); ++n) {
            CHECK(policy.decision(0, n) == SwitchingPolicy::kStay);
            CHECK(policy.decision(1, n) == SwitchingPolicy::kStay);
        }
    }
    SUBCASE("ties go to the lower index") {
        const auto p = SwitchingProblem::from_strings(1, 1, {"0", "1", "1"},
                                                      testing::constant_costs({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}), 1.0);
        ValueField field;
        field.grid = op.grid;
        field.modes = 3;
        const auto n = static_cast<Eigen::Index>(op.size());
        field.values = {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, 1.0), Eigen::VectorXd::Constant(n, 1.0)};
        const auto policy = extract_policy(field, p, op.grid, 1e-9);
        CHECK(policy.decision(0, 0) == 1);
    }
}

TEST_CASE("policy extraction ignores a common shift of the values") {
    const auto g = build_grid({{-3.0, 3.0}}, {64}, BoundaryPolicy::dirichlet_envelope);
    const auto op = discretize_generator(DiffusionSpec::affine({1.0}, {0.0}, {0.5}, 1), g);
    const auto p = SwitchingProblem::from_strings(1, 1, {"2 + x1", "1.5"}, testing::constant_costs({{0, .2}, {.2, 0}}), 1.0);
    auto field = solved(p, op);
    const auto a = extract_policy(field, p, g, 1e-9);
    for (auto& v : field.values) v.array() += 0.125;  // exactly representable
    const auto b = extract_policy(field, p, g, 1e-9);
    for (int i = 0; i < 2; ++i)
        for (std::size_t n = 0; n < g.num_nodes(); ++n) CHECK(a.decision(i, n) == b.decision(i, n));
}

TEST_CASE("policy decisions are validated") {
    SwitchingPolicy policy(testing::zero_operator().grid, 2);
    CHECK_THROWS_AS(policy.set(0, 0, 0), Error);
    CHECK_THROWS_AS(policy.set(0, 0, 2), Error);
    policy.set(0, 0, 1);
    CHECK(policy.decision(0, 0) == 1);
    policy.set(0, 0, SwitchingPolicy::kStay);
    CHECK(policy.decision(0, 0) == SwitchingPolicy::kStay);
}

TEST_CASE("strategy values in closed form") {
    const auto grid = testing::zero_operator().grid;
    const auto p = constants(1.0);
    const double T = 20.0;
    SUBCASE("stay in mode 2") {
        const auto est = evaluate_strategy(never_switch_policy(grid, 2), p, kFrozen, {0.3}, 1, deterministic(T));
        CHECK(est.value == doctest::Approx(discounted(3.0, T)).epsilon(1e-12));
        CHECK(std::abs(est.value - 3.0) <= 1e-4);
        CHECK(est.standard_error <= 1e-12);
        CHECK(est.horizon == T);
    }
    SUBCASE("switch 1 -> 2 at once, then stay") {
        SwitchingPolicy policy(grid, 2);
        for (std::size_t n = 0; n < grid.num_nodes(); ++n) policy.set(0, n, 1);
        const auto est = evaluate_strategy(policy, p, kFrozen, {0.3}, 0, deterministic(T));
        CHECK(std::abs(est.value - 2.0) <= 1e-4);
        CHECK(est.switches == 8);
    }
    SUBCASE("never switch from mode 1") {
        const auto est = evaluate_strategy(never_switch_policy(grid, 2), p, kFrozen, {0.3}, 0, deterministic(T));
        CHECK(std::abs(est.value - 1.0) <= 1e-4);
    }
}

TEST_CASE("chained switches within one step and the switch cap") {
    const auto grid = testing::zero_operator().grid;
    const auto p = SwitchingProblem::from_strings(1, 1, {"0", "0", "3"},
                                                  testing::constant_costs({{0, 1, 9}, {1, 0, 1}, {1, 1, 0}}), 1.0);
    SwitchingPolicy chain(grid, 3);
    for (std::size_t n = 0; n < grid.num_nodes(); ++n) {
        chain.set(0, n, 1);
        chain.set(1, n, 2);
    }
    auto mc = deterministic(30.0);
    mc.record_switches = true;
    const auto est = evaluate_strategy(chain, p, kFrozen, {0.0}, 0, mc);
    CHECK(std::abs(est.value - 1.0) <= 1e-4);  // 3 - 1 - 1
    REQUIRE(est.switch_log.size() == 16);
    CHECK(est.switch_log[0].t == 0.0);
    CHECK(est.switch_log[1].t == 0.0);
    CHECK(est.switch_log[1].to == 2);

    SwitchingPolicy loop(grid, 2);
    for (std::size_t n = 0; n < grid.num_nodes(); ++n) {
        loop.set(0, n, 1);
        loop.set(1, n, 0);
    }
    mc.max_switches = 50;
    try {
        evaluate_strategy(loop, constants(1.0), kFrozen, {0.0}, 0, mc);
        FAIL("expected MaxSwitchesExceeded");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MaxSwitchesExceeded);
    }
}

TEST_CASE("coupled generators are not path functionals") {
    const auto grid = testing::zero_operator().grid;
    const auto p = SwitchingProblem::from_strings(1, 1, {"1 + 0.1*y2", "3"}, testing::constant_costs({{0, 1}, {1, 0}}), 1.0);
    try {
        evaluate_strategy(never_switch_policy(grid, 2), p, kFrozen, {0.0}, 0, deterministic());
        FAIL("expected CoupledGeneratorUnsupported");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CoupledGeneratorUnsupported);
    }
}

TEST_CASE("estimates are reproducible and shared paths match single evaluation") {
    const auto g = build_grid({{-3.0, 3.0}}, {64}, BoundaryPolicy::dirichlet_envelope);
    const auto diffusion = DiffusionSpec::affine({1.0}, {0.0}, {0.5}, 1);
    const auto op = discretize_generator(diffusion, g);
    const auto p = SwitchingProblem::from_strings(1, 1, {"2 + x1", "1.5"}, testing::constant_costs({{0, .2}, {.2, 0}}), 1.0);
    const auto field = solved(p, op);
    const auto best = extract_policy(field, p, g, 1e-9);
    const auto never = never_switch_policy(g, 2);
    const auto greedy = greedy_policy(field);
    MonteCarloSettings mc;
    mc.n_paths = 400;
    mc.seed = 17;
    mc.horizon = 8.0;
    const auto a = evaluate_strategy(best, p, diffusion, {0.0}, 0, mc);
    const auto b = evaluate_strategy(best, p, diffusion, {0.0}, 0, mc);
    CHECK(a == b);
    mc.threads = 3;
    CHECK(evaluate_strategy(best, p, diffusion, {0.0}, 0, mc) == a);
    mc.threads = 1;

    const SwitchingPolicy* list[] = {&best, &never, &greedy};
    const auto all = evaluate_strategies(list, p, diffusion, {0.0}, 0, mc);
    REQUIRE(all.size() == 3);
    CHECK(all[0] == a);
    CHECK(all[1] == evaluate_strategy(never, p, diffusion, {0.0}, 0, mc));
    CHECK(all[2] == evaluate_strategy(greedy, p, diffusion, {0.0}, 0, mc));
    CHECK(a.standard_error >= 0.0);
    CHECK(std::isfinite(a.value));
}

TEST_CASE("default horizon bounds the discarded tail") {
    const auto p = SwitchingProblem::from_strings(1, 1, {"1 + x1", "2"}, testing::constant_costs({{0, 1}, {1, 0}}), 0.5);
    MonteCarloSettings mc;
    mc.tail_tolerance = 1e-4;
    const auto h = resolve_horizon(p, {2.0}, mc);
    CHECK(h.tail_bound == doctest::Approx(1e-4));
    CHECK(h.tail_bound == doctest::Approx(std::exp(-0.5 * h.horizon) * h.tail_cap));
    mc.horizon = 3.0;
    const auto fixed = resolve_horizon(p, {2.0}, mc);
    CHECK(fixed.horizon == 3.0);
    CHECK(fixed.tail_bound == doctest::Approx(std::exp(-1.5) * fixed.tail_cap));
}

TEST_CASE("feynman-kac check on the constants problem") {
    const auto op = testing::zero_operator();
    const auto p = constants(1.0);
    const auto field = solved(p, op);
    const std::vector<TestPoint> points{{{0.0}, 0}, {{0.0}, 1}};
    const auto report = feynman_kac_check(field, p, kFrozen, op.grid, points, deterministic(40.0), 1e-3, 1e-9);
    REQUIRE(report.entries.size() == 2);
    CHECK(report.passed());
    const auto& first = report.entries[0];
    CHECK(first.pde_value == doctest::Approx(2.0));
    CHECK(first.gap <= 1e-12);
    REQUIRE(first.perturbed.size() == 2);
    CHECK(first.perturbed[0].value == doctest::Approx(1.0));  // never switch
    CHECK(first.perturbed[0].value <= first.optimal.value);
}

TEST_CASE("a single mode has nothing to switch") {
    const auto g = build_grid({{-2.0, 2.0}}, {64}, BoundaryPolicy::dirichlet_envelope);
    const auto diffusion = DiffusionSpec::affine({1.0}, {0.0}, {0.3}, 1);
    const auto op = discretize_generator(diffusion, g);
    const auto p = SwitchingProblem::from_strings(1, 1, {"1 + x1"}, {{"0"}}, 1.0);
    const auto field = solved(p, op);
    MonteCarloSettings mc;
    mc.n_paths = 4000;
    mc.seed = 3;
    const std::vector<TestPoint> points{{{0.5}, 0}};
    const auto report = feynman_kac_check(field, p, diffusion, g, points, mc, 5e-3, 1e-9);
    // Oracle: E int e^{-t}(1 + X_t) dt = 1 + x0 / (1 + kappa) for OU towards 0.
    CHECK(report.entries[0].pde_value == doctest::Approx(1.25).epsilon(5e-3));
    CHECK(report.passed());
    CHECK(report.entries[0].optimal.switches == 0);
}

TEST_CASE("paths leaving the box are flagged") {
    const auto g = build_grid({{-0.2, 0.2}}, {8}, BoundaryPolicy::neumann_zero);
    const auto p = SwitchingProblem::from_strings(1, 1, {"1"}, {{"0"}}, 1.0);
    MonteCarloSettings mc;
    mc.n_paths = 50;
    mc.horizon = 2.0;
    const auto est = evaluate_strategy(never_switch_policy(g, 1), p, DiffusionSpec::constant({0.0}, {1.0}, 1), {0.0}, 0, mc);
    CHECK(est.clamped_fraction > 0.01);
    CHECK(est.boundary_contaminated);
}

TEST_CASE("switch log layout") {
    std::ostringstream out;
    write_switch_log_csv(out, {{3, 0.5, 0, 1, 0.25}});
    CHECK(out.str() == "path,t,from,to,cost\n3,0.5,1,2,0.25\n");
}
