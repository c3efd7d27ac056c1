#include "mswitch/error.hpp"
#include "mswitch/verify.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace mswitch;

namespace {

SwitchingProblem constants(double g) {
    return SwitchingProblem::from_strings(1, 1, {"1", "3"}, testing::constant_costs({{0, g}, {g, 0}}), 1.0);
}

} // namespace

TEST_CASE("obstacle consistency") {
    const auto op = testing::zero_operator();
    const auto p = constants(1.0);
    auto result = picard_iterate(p, op, SolverConfig{});
    const auto ok = obstacle_consistency(result.field, p);
    CHECK(ok.passed);
    CHECK(std::abs(ok.margin) <= 1e-12);  // binding in mode 1

    result.field.values[0][3] = 1.5;
    const auto bad = obstacle_consistency(result.field, p);
    CHECK_FALSE(bad.passed);
    REQUIRE(bad.witness);
    CHECK(bad.witness->node == 3);
    CHECK(bad.witness->mode == 0);
    CHECK(bad.witness->value == 1.5);
    CHECK(bad.witness->bound == doctest::Approx(2.0));

    const auto single = SwitchingProblem::from_strings(1, 1, {"1"}, {{"0"}}, 1.0);
    CHECK(obstacle_consistency(picard_iterate(single, op, SolverConfig{}).field, single).passed);
}

TEST_CASE("envelope check") {
    const auto op = testing::zero_operator();
    const auto p = constants(1.0);
    auto result = picard_iterate(p, op, SolverConfig{});
    CHECK(envelope_check(result.field, result.envelopes.upper, result.envelopes.lower, 1e-6).passed);
    result.field.values[1][2] = result.envelopes.upper[2] + 1.0;
    const auto bad = envelope_check(result.field, result.envelopes.upper, result.envelopes.lower, 1e-6);
    CHECK_FALSE(bad.passed);
    REQUIRE(bad.witness);
    CHECK(bad.witness->node == 2);
    CHECK(bad.witness->mode == 1);
}

TEST_CASE("comparison under ordered generators") {
    SolverConfig cfg;
    SUBCASE("unit shift on the zero operator is exactly 1 / r") {
        const auto op = testing::zero_operator();
        const auto res = comparison_test(constants(1.0), constants(1.0).shifted(1.0), op, cfg);
        CHECK(res.passed);
        CHECK(res.details["min_shift"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(res.details["max_shift"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("identical problems") {
        const auto op = testing::zero_operator();
        const auto res = comparison_test(constants(1.0), constants(1.0), op, cfg);
        CHECK(res.passed);
        CHECK(std::abs(res.margin) <= 10.0 * cfg.outer_tol);
    }
    SUBCASE("a positive-part bump orders the fields with a strict margin where it acts") {
        const auto g = build_grid({{-2.0, 2.0}}, {64}, BoundaryPolicy::dirichlet_envelope);
        const auto op = discretize_generator(DiffusionSpec::affine({1.0}, {0.0}, {0.4}, 1), g);
        const auto costs = testing::constant_costs({{0, .3}, {.3, 0}});
        const auto lo = SwitchingProblem::from_strings(1, 1, {"1 + x1", "1.2"}, costs, 1.0);
        const auto hi = SwitchingProblem::from_strings(1, 1, {"1 + x1 + max(0, x1)", "1.2 + max(0, x1)"}, costs, 1.0);
        const auto res = comparison_test(lo, hi, op, cfg);
        CHECK(res.passed);
        const auto a = picard_iterate(lo, op, cfg), b = picard_iterate(hi, op, cfg);
        for (std::size_t n = 0; n < g.num_nodes(); ++n)
            if (g.coords(n)[0] > 0.5 && !op.dirichlet[n]) CHECK(b.field.value(0, n) - a.field.value(0, n) > 0.1);
    }
    SUBCASE("swapped arguments fail the prerequisite, never silently") {
        const auto op = testing::zero_operator();
        const auto res = comparison_test(constants(1.0).shifted(1.0), constants(1.0), op, cfg);
        CHECK_FALSE(res.passed);
        CHECK(res.prerequisite_failed);
        CHECK(res.error == "PrerequisiteOrderViolated");
        CHECK(res.witness);
    }
    SUBCASE("different costs are a prerequisite failure") {
        const auto op = testing::zero_operator();
        const auto res = comparison_test(constants(1.0), constants(2.0), op, cfg);
        CHECK(res.prerequisite_failed);
    }
}

TEST_CASE("grid refinement") {
    const SolverConfig cfg;
    SUBCASE("grid-independent constants problem") {
        const auto res = grid_refinement_check(constants(1.0), DiffusionSpec::constant({0.0}, {0.0}, 1), {{-1.0, 1.0}},
                                               BoundaryPolicy::neumann_zero, {8, 16, 32}, cfg, {});
        CHECK(res.passed);
        CHECK_FALSE(res.note.empty());
    }
    SUBCASE("geometric closed form converges at first order") {
        const double mu = 0.05, r = 0.1;
        const auto p = SwitchingProblem::from_strings(1, 1, {"x1"}, {{"0"}}, r);
        const auto diffusion = DiffusionSpec::geometric({mu}, {0.0});
        const auto res = grid_refinement_check(p, diffusion, {{0.5, 2.0}}, BoundaryPolicy::dirichlet_envelope,
                                               {64, 128, 256}, cfg, {});
        CHECK(res.passed);
        CHECK(res.details["order"].get<double>() >= 0.8);

        // Interior error against x / (r - mu) shrinks as well, though the
        // padded-box boundary data contributes a resolution-independent part.
        std::vector<double> errors;
        for (int cells : {64, 128, 256}) {
            const auto g = build_grid({{0.5, 2.0}}, {cells}, BoundaryPolicy::dirichlet_envelope);
            const auto field = picard_iterate(p, discretize_generator(diffusion, g), cfg).field;
            double err = 0.0;
            for (std::size_t n = 0; n < g.num_nodes(); ++n) {
                const double x = g.coords(n)[0];
                if (x >= 0.875 && x <= 1.625) err = std::max(err, std::abs(field.value(0, n) - x / (r - mu)) / (x / (r - mu)));
            }
            errors.push_back(err);
        }
        CHECK(errors[1] <= errors[0]);
        CHECK(errors[2] <= errors[1]);
        CHECK(errors[2] <= 0.01);
    }
    SUBCASE("non-monotone assembly does not converge") {
        const auto p = SwitchingProblem::from_strings(1, 1, {"2 + x1", "1.5"}, testing::constant_costs({{0, .2}, {.2, 0}}), 1.0);
        const auto res = grid_refinement_check(p, DiffusionSpec::affine({1.0}, {0.0}, {0.5}, 1), {{-4.0, 4.0}},
                                               BoundaryPolicy::dirichlet_envelope, {32, 64, 128}, cfg, {true});
        CHECK_FALSE(res.passed);
        CHECK(res.error == "NonConvergentRefinement");
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(grid_refinement_check(constants(1.0), DiffusionSpec::constant({0.0}, {0.0}, 1), {{-1.0, 1.0}},
                                              BoundaryPolicy::neumann_zero, {8, 16}, cfg, {}),
                        Error);
        CHECK_THROWS_AS(grid_refinement_check(constants(1.0), DiffusionSpec::constant({0.0}, {0.0}, 1), {{-1.0, 1.0}},
                                              BoundaryPolicy::neumann_zero, {8, 16, 24}, cfg, {}),
                        Error);
    }
}

TEST_CASE("suite exit statuses and purity") {
    const auto op = testing::zero_operator();
    const auto p = constants(1.0);
    const auto result = picard_iterate(p, op, SolverConfig{});
    VerificationSuiteReport suite;
    suite.checks.push_back(obstacle_consistency(result.field, p));
    suite.checks.push_back(envelope_check(result.field, result.envelopes.upper, result.envelopes.lower, 1e-6));
    suite.checks.push_back(comparison_test(p, p.shifted(1.0), op, SolverConfig{}));
    CHECK(suite.exit_code() == 0);
    CHECK(std::abs(suite.checks[0].margin) <= 1e-6);
    CHECK(std::abs(suite.checks[1].margin) <= 1e-6);
    CHECK(std::abs(suite.checks[2].margin - 1.0) <= 1e-6);
    CHECK(comparison_test(p, p.shifted(1.0), op, SolverConfig{}).to_json() == suite.checks[2].to_json());

    suite.checks.push_back(comparison_test(p.shifted(1.0), p, op, SolverConfig{}));
    CHECK(suite.exit_code() == 4);
    suite.checks.pop_back();
    auto corrupted = result.field;
    corrupted.values[0][0] = 10.0;
    suite.checks.push_back(envelope_check(corrupted, result.envelopes.upper, result.envelopes.lower, 1e-6));
    CHECK(suite.exit_code() == 3);
    CHECK(suite.to_json()["passed"] == false);
}
