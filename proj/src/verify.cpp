#include "mswitch/verify.hpp"

#include "mswitch/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace mswitch {

Json CheckResult::to_json() const {
    Json out = {{"name", name}, {"passed", passed}, {"margin", margin}, {"tolerances", tolerances}};
    if (prerequisite_failed) out["prerequisite_failed"] = true;
    if (!error.empty()) out["error"] = error;
    if (!note.empty()) out["note"] = note;
    if (witness)
        out["witness"] = {{"node", witness->node},
                          {"mode", witness->mode + 1},
                          {"value", witness->value},
                          {"bound", witness->bound}};
    if (!details.empty()) out["details"] = details;
    return out;
}

CheckResult obstacle_consistency(const ValueField& field, const SwitchingProblem& problem) {
    CheckResult res;
    res.name = "obstacle_consistency";
    res.tolerances["relative"] = 1e-8;
    const int m = problem.num_modes();
    if (field.modes != m) throw Error(ErrorKind::Config, "field dimensions do not match the problem");
    if (m == 1) {
        res.note = "single mode: no obstacle";
        return res;
    }
    res.margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const Obstacle obs = obstacle(field.values, problem, field.grid, i);
        const auto& v = field.values[static_cast<std::size_t>(i)];
        for (Eigen::Index n = 0; n < v.size(); ++n) {
            const double slack = v[n] - obs.value[n];
            const double tol = 1e-8 * (1.0 + std::abs(v[n]));
            if (slack < -tol) {
                res.passed = false;
                res.error = "ObstacleViolated";
            }
            if (slack < res.margin) {
                res.margin = slack;
                if (!res.passed) res.witness = CheckWitness{static_cast<std::size_t>(n), i, v[n], obs.value[n]};
            }
        }
    }
    return res;
}

CheckResult envelope_check(const ValueField& field, const Eigen::VectorXd& upper, const Eigen::VectorXd& lower,
                           double outer_tol) {
    CheckResult res;
    res.name = "envelope_check";
    const double tol = 10.0 * outer_tol;
    res.tolerances["absolute"] = tol;
    res.margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < field.modes; ++i) {
        const auto& v = field.values[static_cast<std::size_t>(i)];
        if (v.size() != upper.size() || v.size() != lower.size())
            throw Error(ErrorKind::Config, "envelopes and field live on different grids");
        for (Eigen::Index n = 0; n < v.size(); ++n) {
            const double above = upper[n] - v[n];
            const double below = v[n] - lower[n];
            const double slack = std::min(above, below);
            if (slack < res.margin) {
                res.margin = slack;
                if (slack < -tol) {
                    res.passed = false;
                    res.error = "EnvelopeViolated";
                    res.witness = CheckWitness{static_cast<std::size_t>(n), i, v[n], above < below ? upper[n] : lower[n]};
                }
            }
        }
    }
    return res;
}

CheckResult comparison_test(const SwitchingProblem& lo, const SwitchingProblem& hi, const DiscreteOperator& op,
                            const SolverConfig& config) {
    CheckResult res;
    res.name = "comparison_test";
    const double tol = 10.0 * config.outer_tol;
    res.tolerances["absolute"] = tol;
    const int m = lo.num_modes();
    if (hi.num_modes() != m || hi.dim_state() != lo.dim_state() || hi.dim_noise() != lo.dim_noise())
        throw Error(ErrorKind::Config, "comparison needs problems of the same shape");
    if (hi.cost_sources() != lo.cost_sources() || hi.cost_scale() != lo.cost_scale()) {
        res.passed = false;
        res.prerequisite_failed = true;
        res.error = "PrerequisiteOrderViolated";
        res.note = "switching costs must be identical across the pair";
        return res;
    }
    if (hi.discount() != lo.discount()) {
        res.passed = false;
        res.prerequisite_failed = true;
        res.error = "PrerequisiteOrderViolated";
        res.note = "discount rates must be identical across the pair";
        return res;
    }

    // f_lo <= f_hi sampled on every node over a fixed set of (y, z) probes.
    const int d = lo.dim_noise();
    const double probes[] = {0.0, 1.0, -1.0, 10.0, -10.0};
    Point x(static_cast<std::size_t>(op.grid.dim()));
    for (std::size_t node = 0; node < op.size(); ++node) {
        op.grid.coords(node, x);
        for (double p : probes) {
            const Point y(static_cast<std::size_t>(m), p), z(static_cast<std::size_t>(d), p);
            for (int i = 0; i < m; ++i) {
                const double flo = lo.generator(i, x, y, z);
                const double fhi = hi.generator(i, x, y, z);
                if (flo > fhi + 1e-12 * (1.0 + std::abs(fhi))) {
                    res.passed = false;
                    res.prerequisite_failed = true;
                    res.error = "PrerequisiteOrderViolated";
                    res.witness = CheckWitness{node, i, flo, fhi};
                    res.note = fmt::format("f{}_lo = {:.12g} > f{}_hi = {:.12g} at node {} (probe {})", i + 1, flo,
                                           i + 1, fhi, node, p);
                    return res;
                }
            }
        }
    }

    const PicardResult a = picard_iterate(lo, op, config);
    const PicardResult b = picard_iterate(hi, op, config);
    res.margin = std::numeric_limits<double>::infinity();
    double max_shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const auto& vl = a.field.values[static_cast<std::size_t>(i)];
        const auto& vh = b.field.values[static_cast<std::size_t>(i)];
        for (Eigen::Index n = 0; n < vl.size(); ++n) {
            const double gap = vh[n] - vl[n];
            max_shift = std::max(max_shift, gap);
            if (gap < res.margin) {
                res.margin = gap;
                if (gap < -tol) {
                    res.passed = false;
                    res.error = "ComparisonViolated";
                    res.witness = CheckWitness{static_cast<std::size_t>(n), i, vl[n], vh[n]};
                }
            }
        }
    }
    res.details["min_shift"] = res.margin;
    res.details["max_shift"] = max_shift;

    // Sufficient condition from the theory, reported but not enforced.
    std::vector<Point> sample;
    const std::size_t stride = std::max<std::size_t>(1, op.size() / 64);
    for (std::size_t node = 0; node < op.size(); node += stride) sample.push_back(op.grid.coords(node));
    const auto reg = validate_regularity(hi, op.diffusion, sample);
    if (reg.lipschitz_constant) {
        res.details["lipschitz_estimate"] = *reg.lipschitz_constant;
        if (hi.discount() <= m * *reg.lipschitz_constant)
            res.note = fmt::format("r = {:g} <= m C = {:g}: ordering is observed, not guaranteed", hi.discount(),
                                   m * *reg.lipschitz_constant);
    }
    return res;
}

CheckResult grid_refinement_check(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                  const std::vector<std::pair<double, double>>& bounds, BoundaryPolicy boundary,
                                  const std::vector<int>& resolutions, const SolverConfig& config,
                                  const RefinementOptions& options) {
    if (resolutions.size() < 3)
        throw Error(ErrorKind::Config, fmt::format("refinement needs at least 3 resolutions, got {}", resolutions.size()));
    for (std::size_t s = 1; s < resolutions.size(); ++s)
        if (resolutions[s] != 2 * resolutions[s - 1])
            throw Error(ErrorKind::Config, fmt::format("resolution {} is not double {}", resolutions[s], resolutions[s - 1]));

    CheckResult res;
    res.name = "grid_refinement_check";
    res.tolerances["min_order"] = 0.8;
    const int k = static_cast<int>(bounds.size());
    const int m = problem.num_modes();

    std::vector<PicardResult> solved;
    std::vector<Grid> grids;
    for (int cells : resolutions) {
        const Grid grid = build_grid(bounds, std::vector<int>(static_cast<std::size_t>(k), cells), boundary);
        try {
            const DiscreteOperator op = discretize_generator(diffusion, grid, {options.anti_diffusion});
            solved.push_back(picard_iterate(problem, op, config));
        } catch (const Error& e) {
            res.passed = false;
            res.error = "NonConvergentRefinement";
            res.note = fmt::format("solve at {} cells failed: {}", cells, e.what());
            return res;
        }
        grids.push_back(grid);
    }

    // Sup-differences between successive resolutions on the coarse nodes.
    const Grid& coarse = grids.front();
    std::vector<double> diffs;
    for (std::size_t s = 0; s + 1 < solved.size(); ++s) {
        const int fa = resolutions[s] / resolutions.front();
        const int fb = resolutions[s + 1] / resolutions.front();
        double sup = 0.0;
        for (std::size_t node = 0; node < coarse.num_nodes(); ++node) {
            auto mi = coarse.multi_index(node);
            std::array<int, 2> ia{mi[0] * fa, k > 1 ? mi[1] * fa : 0};
            std::array<int, 2> ib{mi[0] * fb, k > 1 ? mi[1] * fb : 0};
            const std::size_t na = grids[s].index(ia), nb = grids[s + 1].index(ib);
            for (int i = 0; i < m; ++i) {
                const double va = solved[s].field.value(i, na);
                const double vb = solved[s + 1].field.value(i, nb);
                if (!std::isfinite(va) || !std::isfinite(vb)) sup = std::numeric_limits<double>::infinity();
                else sup = std::max(sup, std::abs(va - vb));
            }
        }
        diffs.push_back(sup);
    }
    res.details["differences"] = diffs;
    res.details["resolutions"] = resolutions;

    double scale = 1.0;
    for (const auto& pr : solved)
        for (const auto& v : pr.field.values) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    const double identical = 1e-10 * scale;
    if (std::all_of(diffs.begin(), diffs.end(), [&](double d) { return d <= identical; })) {
        res.note = "solutions identical across resolutions; order check skipped";
        return res;
    }

    bool decreasing = true;
    for (std::size_t s = 1; s < diffs.size(); ++s)
        if (!(diffs[s] < diffs[s - 1])) decreasing = false;
    const double order = std::log2(diffs[diffs.size() - 2] / diffs.back());
    res.details["order"] = order;
    res.margin = order - 0.8;
    if (!decreasing || !(order >= 0.8)) {
        res.passed = false;
        res.error = "NonConvergentRefinement";
        res.note = decreasing ? fmt::format("estimated order {:.3f} < 0.8", order)
                              : "successive differences do not decrease";
    }
    return res;
}

bool VerificationSuiteReport::passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

bool VerificationSuiteReport::prerequisite_failed() const noexcept {
    return std::any_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.prerequisite_failed; });
}

int VerificationSuiteReport::exit_code() const noexcept {
    if (prerequisite_failed()) return 4;
    return passed() ? 0 : 3;
}

Json VerificationSuiteReport::to_json() const {
    Json list = Json::array();
    for (const auto& c : checks) list.push_back(c.to_json());
    return {{"passed", passed()}, {"exit_code", exit_code()}, {"checks", list}, {"hashes", hashes}};
}

} // namespace mswitch
