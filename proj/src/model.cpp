#include "mswitch/model.hpp"

#include "mswitch/error.hpp"
#include "mswitch/random.hpp"
#include "mswitch/sde.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace mswitch {

std::string_view to_string(DiffusionFamily family) {
    switch (family) {
    case DiffusionFamily::constant: return "constant";
    case DiffusionFamily::affine: return "affine";
    case DiffusionFamily::geometric: return "geometric";
    case DiffusionFamily::custom: return "custom";
    }
    return "custom";
}

std::string_view to_string(Coupling c) {
    switch (c) {
    case Coupling::state_only: return "state_only";
    case Coupling::own_component: return "own_component";
    case Coupling::fully_coupled: return "fully_coupled";
    }
    return "fully_coupled";
}

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw Error(ErrorKind::Config, fmt::format("{} must be finite", what));
}

} // namespace

// ---------------------------------------------------------------------------
// DiffusionSpec
// ---------------------------------------------------------------------------

DiffusionSpec DiffusionSpec::constant(std::vector<double> drift, std::vector<double> sigma, int noise_dim) {
    if (drift.empty() || noise_dim < 1 || sigma.size() != drift.size() * static_cast<std::size_t>(noise_dim))
        throw Error(ErrorKind::Config, "constant diffusion needs k drift entries and a k x d sigma");
    require_finite(drift, "drift");
    require_finite(sigma, "sigma");
    DiffusionSpec s;
    s.family_ = DiffusionFamily::constant;
    s.k_ = static_cast<int>(drift.size());
    s.d_ = noise_dim;
    s.lip_b_ = 0.0;
    s.lip_sigma_ = 0.0;
    s.growth_ = norm2(drift) + norm2(sigma);
    s.frozen_ = max_abs(drift) == 0.0 && max_abs(sigma) == 0.0;
    s.params_ = {{"drift", drift}, {"sigma", sigma}};
    s.a_ = std::move(drift);
    s.s_ = std::move(sigma);
    return s;
}

DiffusionSpec DiffusionSpec::affine(std::vector<double> kappa, std::vector<double> theta,
                                    std::vector<double> sigma, int noise_dim) {
    if (kappa.empty() || theta.size() != kappa.size() || noise_dim < 1 ||
        sigma.size() != kappa.size() * static_cast<std::size_t>(noise_dim))
        throw Error(ErrorKind::Config, "affine diffusion needs k kappa/theta entries and a k x d sigma");
    require_finite(kappa, "kappa");
    require_finite(theta, "theta");
    require_finite(sigma, "sigma");
    DiffusionSpec s;
    s.family_ = DiffusionFamily::affine;
    s.k_ = static_cast<int>(kappa.size());
    s.d_ = noise_dim;
    s.lip_b_ = max_abs(kappa);
    s.lip_sigma_ = 0.0;
    std::vector<double> b0(kappa.size());
    for (std::size_t a = 0; a < kappa.size(); ++a) b0[a] = kappa[a] * theta[a];
    s.growth_ = std::max(norm2(b0) + norm2(sigma), *s.lip_b_);
    s.frozen_ = max_abs(kappa) == 0.0 && max_abs(sigma) == 0.0;
    s.params_ = {{"kappa", kappa}, {"theta", theta}, {"sigma", sigma}};
    s.a_ = std::move(kappa);
    s.b_ = std::move(theta);
    s.s_ = std::move(sigma);
    return s;
}

DiffusionSpec DiffusionSpec::geometric(std::vector<double> mu, std::vector<double> vol) {
    if (mu.empty() || vol.size() != mu.size())
        throw Error(ErrorKind::Config, "geometric diffusion needs one drift rate and one volatility per axis");
    require_finite(mu, "mu");
    require_finite(vol, "vol");
    DiffusionSpec s;
    s.family_ = DiffusionFamily::geometric;
    s.k_ = static_cast<int>(mu.size());
    s.d_ = s.k_;
    s.lip_b_ = max_abs(mu);
    s.lip_sigma_ = max_abs(vol);
    s.growth_ = *s.lip_b_ + *s.lip_sigma_;
    s.frozen_ = max_abs(mu) == 0.0 && max_abs(vol) == 0.0;
    s.params_ = {{"mu", mu}, {"vol", vol}};
    s.a_ = std::move(mu);
    s.s_ = std::move(vol);
    return s;
}

DiffusionSpec DiffusionSpec::custom(int state_dim, int noise_dim, std::vector<std::string> drift,
                                    std::vector<std::string> sigma) {
    if (state_dim < 1 || noise_dim < 1 || drift.size() != static_cast<std::size_t>(state_dim) ||
        sigma.size() != static_cast<std::size_t>(state_dim * noise_dim))
        throw Error(ErrorKind::Config, "custom diffusion needs k drift and k*d sigma expressions");
    DiffusionSpec s;
    s.family_ = DiffusionFamily::custom;
    s.k_ = state_dim;
    s.d_ = noise_dim;
    const VariableSpace vars{state_dim, 0, 0};
    bool frozen = true;
    for (const auto& src : drift) {
        s.drift_expr_.push_back(Expression::parse(src, vars));
        frozen = frozen && s.drift_expr_.back().is_constant() && s.drift_expr_.back().eval({}) == 0.0;
    }
    for (const auto& src : sigma) {
        s.sigma_expr_.push_back(Expression::parse(src, vars));
        frozen = frozen && s.sigma_expr_.back().is_constant() && s.sigma_expr_.back().eval({}) == 0.0;
    }
    s.frozen_ = frozen;
    return s;
}

void DiffusionSpec::drift(std::span<const double> x, std::span<double> out) const {
    switch (family_) {
    case DiffusionFamily::constant:
        std::copy(a_.begin(), a_.end(), out.begin());
        break;
    case DiffusionFamily::affine:
        for (int a = 0; a < k_; ++a) out[a] = a_[a] * (b_[a] - x[a]);
        break;
    case DiffusionFamily::geometric:
        for (int a = 0; a < k_; ++a) out[a] = a_[a] * x[a];
        break;
    case DiffusionFamily::custom:
        for (int a = 0; a < k_; ++a) out[a] = drift_expr_[a].eval(x);
        break;
    }
}

void DiffusionSpec::sigma(std::span<const double> x, std::span<double> out) const {
    switch (family_) {
    case DiffusionFamily::constant:
    case DiffusionFamily::affine:
        std::copy(s_.begin(), s_.end(), out.begin());
        break;
    case DiffusionFamily::geometric:
        std::fill(out.begin(), out.begin() + k_ * d_, 0.0);
        for (int a = 0; a < k_; ++a) out[a * d_ + a] = s_[a] * x[a];
        break;
    case DiffusionFamily::custom:
        for (int c = 0; c < k_ * d_; ++c) out[c] = sigma_expr_[c].eval(x);
        break;
    }
}

std::optional<double> DiffusionSpec::moment_growth_rate(double q) const {
    switch (family_) {
    case DiffusionFamily::constant:
        return 0.0;
    case DiffusionFamily::affine: {
        double rate = 0.0;
        for (double kappa : a_) rate = std::max(rate, -q * kappa);
        return rate;
    }
    case DiffusionFamily::geometric: {
        double rate = 0.0;
        for (int a = 0; a < k_; ++a)
            rate = std::max(rate, q * a_[a] + 0.5 * q * (q - 1.0) * s_[a] * s_[a]);
        return rate;
    }
    case DiffusionFamily::custom:
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<double> DiffusionSpec::flow_constant(double horizon) const {
    if (!lip_b_ || !lip_sigma_) return std::nullopt;
    return std::exp((*lip_b_ + *lip_sigma_ * *lip_sigma_) * horizon + 1.0);
}

// ---------------------------------------------------------------------------
// SwitchingProblem
// ---------------------------------------------------------------------------

Coupling SwitchingProblem::infer_coupling(const Expression& e, int own) {
    bool other = false;
    for (int j = 0; j < 64; ++j)
        if (j != own && e.reads_value(j)) other = true;
    if (other) return Coupling::fully_coupled;
    if (e.reads_value(own) || e.reads_noise()) return Coupling::own_component;
    return Coupling::state_only;
}

SwitchingProblem::SwitchingProblem(int dim_state, int dim_noise, std::vector<ModeSpec> modes,
                                   std::vector<std::vector<std::string>> costs, double discount)
    : k_(dim_state), d_(dim_noise), r_(discount), modes_(std::move(modes)), cost_src_(std::move(costs)) {
    const auto m = modes_.size();
    if (m < 1) throw Error(ErrorKind::Config, "a switching problem needs at least one mode");
    if (k_ < 1 || d_ < 1) throw Error(ErrorKind::Config, "state and noise dimensions must be positive");
    if (!(r_ > 0.0) || !std::isfinite(r_)) throw Error(ErrorKind::Config, fmt::format("discount r = {} must be > 0", r_));
    if (cost_src_.empty() && m == 1) cost_src_ = {{"0"}};
    if (cost_src_.size() != m)
        throw Error(ErrorKind::Config, fmt::format("costs must be a {0}x{0} matrix", m));
    const VariableSpace cost_vars{k_, 0, 0};
    for (std::size_t i = 0; i < m; ++i) {
        if (cost_src_[i].size() != m)
            throw Error(ErrorKind::Config, fmt::format("cost row {} must have {} entries", i + 1, m));
        auto& row = costs_.emplace_back();
        for (std::size_t j = 0; j < m; ++j) {
            std::string src = cost_src_[i][j];
            if (i == j && std::all_of(src.begin(), src.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
                src = "0";
            row.push_back(Expression::parse(src, cost_vars));
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& mode = modes_[i];
        if (mode.generator.empty())
            throw Error(ErrorKind::Config, fmt::format("mode {} has no generator", i + 1));
        const Coupling actual = infer_coupling(mode.generator, static_cast<int>(i));
        if (static_cast<int>(actual) > static_cast<int>(mode.coupling))
            throw Error(ErrorKind::Config,
                        fmt::format("mode {} generator \"{}\" is {} but declared {}", i + 1,
                                    mode.generator.source(), to_string(actual), to_string(mode.coupling)));
    }
}

SwitchingProblem SwitchingProblem::from_strings(int dim_state, int dim_noise,
                                                const std::vector<std::string>& generators,
                                                const std::vector<std::vector<std::string>>& costs,
                                                double discount) {
    const VariableSpace vars{dim_state, static_cast<int>(generators.size()), dim_noise};
    std::vector<ModeSpec> modes;
    for (std::size_t i = 0; i < generators.size(); ++i) {
        ModeSpec mode;
        mode.label = fmt::format("mode{}", i + 1);
        mode.generator = Expression::parse(generators[i], vars);
        mode.coupling = infer_coupling(mode.generator, static_cast<int>(i));
        modes.push_back(std::move(mode));
    }
    return SwitchingProblem(dim_state, dim_noise, std::move(modes), costs, discount);
}

double SwitchingProblem::generator(int i, std::span<const double> x, std::span<const double> y,
                                   std::span<const double> z) const {
    const auto& mode = modes_[static_cast<std::size_t>(i)];
    return mode.generator.eval(x, y, z) + mode.shift;
}

double SwitchingProblem::cost(int i, int j, std::span<const double> x) const {
    return cost_scale_ * costs_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(x);
}

bool SwitchingProblem::all_state_only() const noexcept {
    return std::all_of(modes_.begin(), modes_.end(),
                       [](const ModeSpec& m) { return m.coupling == Coupling::state_only; });
}

SwitchingProblem SwitchingProblem::shifted(double delta) const {
    SwitchingProblem p = *this;
    for (auto& mode : p.modes_) mode.shift += delta;
    return p;
}

SwitchingProblem SwitchingProblem::with_discount(double r) const {
    if (!(r > 0.0)) throw Error(ErrorKind::Config, fmt::format("discount r = {} must be > 0", r));
    SwitchingProblem p = *this;
    p.r_ = r;
    return p;
}

SwitchingProblem SwitchingProblem::with_cost_scale(double scale) const {
    if (!(scale >= 0.0)) throw Error(ErrorKind::Config, "cost scale must be >= 0");
    SwitchingProblem p = *this;
    p.cost_scale_ = scale;
    return p;
}

namespace {

// Rewrites y<old> tokens to y<new> using new_of_old (0-based).
std::string relabel_values(const std::string& src, const std::vector<int>& new_of_old) {
    std::string out;
    for (std::size_t i = 0; i < src.size();) {
        const bool boundary = i == 0 || !std::isalnum(static_cast<unsigned char>(src[i - 1]));
        if (boundary && src[i] == 'y' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1]))) {
            std::size_t j = i + 1;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j == src.size() || !std::isalpha(static_cast<unsigned char>(src[j]))) {
                const int old = std::stoi(src.substr(i + 1, j - i - 1)) - 1;
                out += fmt::format("y{}", new_of_old.at(static_cast<std::size_t>(old)) + 1);
                i = j;
                continue;
            }
        }
        out += src[i++];
    }
    return out;
}

} // namespace

SwitchingProblem SwitchingProblem::permuted(const std::vector<int>& perm) const {
    const int m = num_modes();
    if (static_cast<int>(perm.size()) != m) throw Error(ErrorKind::Config, "permutation size mismatch");
    std::vector<int> new_of_old(static_cast<std::size_t>(m), -1);
    for (int p = 0; p < m; ++p) new_of_old.at(static_cast<std::size_t>(perm[p])) = p;
    if (std::find(new_of_old.begin(), new_of_old.end(), -1) != new_of_old.end())
        throw Error(ErrorKind::Config, "not a permutation");
    const VariableSpace vars{k_, m, d_};
    std::vector<ModeSpec> modes;
    std::vector<std::vector<std::string>> costs(static_cast<std::size_t>(m));
    for (int p = 0; p < m; ++p) {
        const ModeSpec& old = modes_[static_cast<std::size_t>(perm[p])];
        ModeSpec mode = old;
        mode.generator = Expression::parse(relabel_values(old.generator.source(), new_of_old), vars);
        modes.push_back(std::move(mode));
        for (int q = 0; q < m; ++q)
            costs[p].push_back(cost_src_[static_cast<std::size_t>(perm[p])][static_cast<std::size_t>(perm[q])]);
    }
    SwitchingProblem out(k_, d_, std::move(modes), std::move(costs), r_);
    out.cost_scale_ = cost_scale_;
    return out;
}

// ---------------------------------------------------------------------------
// ValidationReport
// ---------------------------------------------------------------------------

void ValidationReport::merge(const ValidationReport& other) {
    for (const auto& [name, result] : other.results) results[name] = result;
    if (other.lipschitz_constant) lipschitz_constant = other.lipschitz_constant;
    if (other.growth_exponent) growth_exponent = other.growth_exponent;
    if (other.discount) discount = other.discount;
    if (other.num_modes) num_modes = other.num_modes;
    if (!other.decay_profile.empty()) decay_profile = other.decay_profile;
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

bool ValidationReport::passed() const noexcept {
    return std::none_of(results.begin(), results.end(),
                        [](const auto& kv) { return kv.second.verdict == Verdict::fail; });
}

std::optional<std::string> ValidationReport::first_failure() const {
    for (const auto& [name, result] : results)
        if (result.verdict == Verdict::fail) return name;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Switching costs: non-negativity and the free-loop condition
// ---------------------------------------------------------------------------

std::vector<std::vector<int>> simple_cycles(int m) {
    std::vector<std::vector<int>> cycles;
    std::vector<int> path;
    std::vector<bool> used(static_cast<std::size_t>(m), false);
    // Depth-first over paths start -> ... where every later vertex exceeds start.
    auto extend = [&](auto&& self, int start) -> void {
        const int last = path.back();
        if (path.size() >= 2) {
            auto cycle = path;
            cycle.push_back(start);
            cycles.push_back(std::move(cycle));
        }
        for (int next = start + 1; next < m; ++next) {
            if (used[static_cast<std::size_t>(next)] || next == last) continue;
            used[static_cast<std::size_t>(next)] = true;
            path.push_back(next);
            self(self, start);
            path.pop_back();
            used[static_cast<std::size_t>(next)] = false;
        }
    };
    for (int start = 0; start < m; ++start) {
        path = {start};
        used[static_cast<std::size_t>(start)] = true;
        extend(extend, start);
        used[static_cast<std::size_t>(start)] = false;
    }
    return cycles;
}

namespace {

std::string format_cycle(const std::vector<int>& cycle) {
    std::string s;
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        if (i) s += "->";
        s += std::to_string(cycle[i] + 1);
    }
    return s;
}

constexpr std::size_t kMaxWitnesses = 16;

void add_witness(HypothesisResult& r, const Point& x, std::string detail) {
    r.verdict = Verdict::fail;
    if (r.witnesses.size() < kMaxWitnesses) r.witnesses.push_back({x, std::move(detail)});
}

} // namespace

ValidationReport validate_switching_costs(const SwitchingProblem& problem, std::span<const Point> sample_points) {
    const int m = problem.num_modes();
    if (m > kMaxExactCycleModes)
        throw Error(ErrorKind::TooManyModes,
                    fmt::format("{} modes; exact loop enumeration supports at most {}", m, kMaxExactCycleModes));
    if (sample_points.empty()) throw Error(ErrorKind::Config, "validate_switching_costs needs sample points");

    HypothesisResult sign;
    sign.verdict = Verdict::pass;
    HypothesisResult loop;
    loop.verdict = Verdict::pass;
    const auto cycles = simple_cycles(m);
    loop.note = fmt::format("{} simple cycles checked at {} points", cycles.size(), sample_points.size());

    std::vector<double> g(static_cast<std::size_t>(m * m));
    for (const Point& x : sample_points) {
        require_finite(x, "sample point");
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) g[i * m + j] = problem.cost(i, j, x);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const double gij = g[i * m + j];
                if (i == j && gij != 0.0) {
                    add_witness(sign, x, fmt::format("g{}{} = {:g} but the diagonal must vanish", i + 1, j + 1, gij));
                    if (sign.error.empty()) sign.error = "NonZeroDiagonalCost";
                } else if (!(gij >= 0.0)) {
                    add_witness(sign, x, fmt::format("g{}{} = {:g} < 0", i + 1, j + 1, gij));
                    sign.error = "NegativeCost";
                }
            }
        }
        for (const auto& cycle : cycles) {
            double total = 0.0;
            for (std::size_t s = 0; s + 1 < cycle.size(); ++s) total += g[cycle[s] * m + cycle[s + 1]];
            if (!(total > 0.0)) {
                add_witness(loop, x, fmt::format("cycle {} costs {:g}", format_cycle(cycle), total));
                loop.error = "NonFreeLoopViolation";
            }
        }
    }

    ValidationReport report;
    report.num_modes = m;
    report.results["H3(i)"] = std::move(sign);
    report.results["H3(ii)"] = std::move(loop);
    HypothesisResult subharmonic;
    subharmonic.note = "checked on the grid operator (check_cost_subharmonicity)";
    report.results["H3(iii)"] = std::move(subharmonic);
    return report;
}

// ---------------------------------------------------------------------------
// Monotonicity in the other components
// ---------------------------------------------------------------------------

namespace {

// Base (y, z) arguments at which generator properties are probed: the origin
// plus two deterministic pseudo-random points per magnitude.
std::vector<std::pair<Point, Point>> probe_bases(int m, int d, std::uint64_t seed,
                                                 std::initializer_list<double> magnitudes) {
    std::vector<std::pair<Point, Point>> bases;
    bases.emplace_back(Point(static_cast<std::size_t>(m), 0.0), Point(static_cast<std::size_t>(d), 0.0));
    const CounterRng rng(seed, Stream::probe);
    std::uint32_t site = 0;
    for (double mag : magnitudes) {
        for (int rep = 0; rep < 2; ++rep, ++site) {
            Point y(static_cast<std::size_t>(m)), z(static_cast<std::size_t>(d));
            std::uint32_t block = 0;
            for (auto* v : {&y, &z}) {
                for (std::size_t i = 0; i < v->size(); i += 2, ++block) {
                    const auto [u0, u1] = rng.uniform2(site, 0, block);
                    (*v)[i] = mag * (2.0 * u0 - 1.0);
                    if (i + 1 < v->size()) (*v)[i + 1] = mag * (2.0 * u1 - 1.0);
                }
            }
            bases.emplace_back(std::move(y), std::move(z));
        }
    }
    return bases;
}

} // namespace

ValidationReport probe_monotonicity(const SwitchingProblem& problem, std::span<const Point> sample_points,
                                    double probe_step, std::uint64_t seed) {
    if (!(probe_step > 0.0)) throw Error(ErrorKind::Config, "probe_step must be > 0");
    const int m = problem.num_modes();
    HypothesisResult result;
    result.verdict = Verdict::pass;
    std::vector<std::string> skipped;
    const auto bases = probe_bases(m, problem.dim_noise(), seed, {1.0, 10.0});
    for (int i = 0; i < m; ++i) {
        if (problem.mode(i).coupling == Coupling::state_only) {
            skipped.push_back(std::to_string(i + 1));
            continue;
        }
        for (const Point& x : sample_points) {
            for (const auto& [y, z] : bases) {
                const double base = problem.generator(i, x, y, z);
                for (int j = 0; j < m; ++j) {
                    if (j == i) continue;
                    Point up = y;
                    up[static_cast<std::size_t>(j)] += probe_step;
                    const double slope = (problem.generator(i, x, up, z) - base) / probe_step;
                    if (slope < -1e-8 * (1.0 + std::abs(base))) {
                        add_witness(result, x,
                                    fmt::format("d f{}/d y{} = {:g} at y = [{}]", i + 1, j + 1, slope,
                                                fmt::join(y, ", ")));
                        result.error = "MonotonicityViolation";
                    }
                }
            }
        }
    }
    if (!skipped.empty())
        result.note = fmt::format("state_only modes skipped: {}", fmt::join(skipped, ", "));
    ValidationReport report;
    report.results["H2(iii)"] = std::move(result);
    return report;
}

// ---------------------------------------------------------------------------
// Regularity: growth and Lipschitz constants of generators and coefficients
// ---------------------------------------------------------------------------

namespace {

// Unit directions probed for growth: the axes (both signs) and, in 2D, diagonals.
std::vector<Point> ray_directions(int k) {
    std::vector<Point> dirs;
    for (int a = 0; a < k; ++a) {
        for (double s : {1.0, -1.0}) {
            Point e(static_cast<std::size_t>(k), 0.0);
            e[static_cast<std::size_t>(a)] = s;
            dirs.push_back(std::move(e));
        }
    }
    if (k == 2) {
        const double c = 1.0 / std::sqrt(2.0);
        for (double s0 : {1.0, -1.0})
            for (double s1 : {1.0, -1.0}) dirs.push_back({s0 * c, s1 * c});
    }
    return dirs;
}

double generator_level(const SwitchingProblem& problem, const Point& x) {
    const Point y(static_cast<std::size_t>(problem.num_modes()), 0.0);
    const Point z(static_cast<std::size_t>(problem.dim_noise()), 0.0);
    double level = 0.0;
    for (int i = 0; i < problem.num_modes(); ++i) {
        const double f = problem.generator(i, x, y, z);
        if (std::isnan(f)) continue;
        level = std::max(level, std::abs(f));
    }
    return level;
}

} // namespace

double estimate_growth_exponent(const SwitchingProblem& problem) {
    const auto dirs = ray_directions(problem.dim_state());
    auto level_at = [&](double radius) {
        double level = 0.0;
        for (const auto& dir : dirs) {
            Point x = dir;
            for (double& v : x) v *= radius;
            level = std::max(level, generator_level(problem, x));
        }
        return level;
    };
    const double lo = level_at(512.0);
    const double hi = level_at(1024.0);
    if (!std::isfinite(lo) || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
    if (hi <= 1e-12 || lo <= 1e-12) return 0.0;
    return std::max(0.0, std::log2(hi / lo));
}

ValidationReport validate_regularity(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                     std::span<const Point> sample_points) {
    ValidationReport report;
    const int m = problem.num_modes();
    const int k = problem.dim_state();
    const int d = problem.dim_noise();

    // Finite values and polynomial growth of f_i(x, 0, 0).
    HypothesisResult growth;
    growth.verdict = Verdict::pass;
    for (const Point& x : sample_points) {
        const Point y(static_cast<std::size_t>(m), 0.0), z(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < m; ++i) {
            const double f = problem.generator(i, x, y, z);
            if (!std::isfinite(f)) {
                add_witness(growth, x, fmt::format("f{}(x, 0, 0) = {}", i + 1, f));
                growth.error = "NonFiniteGenerator";
            }
        }
    }
    const double gamma = estimate_growth_exponent(problem);
    report.growth_exponent = gamma;
    if (!std::isfinite(gamma) || gamma > 16.0) {
        Point far(static_cast<std::size_t>(k), 1024.0);
        add_witness(growth, far, fmt::format("growth exponent estimate {} is not polynomial", gamma));
        growth.error = "SuperPolynomialGrowth";
    }
    growth.note = fmt::format("gamma ~ {:.3g}", gamma);
    report.results["H2(i)"] = std::move(growth);

    // Lipschitz in (y, z) uniformly in x.
    HypothesisResult lipschitz;
    lipschitz.verdict = Verdict::pass;
    double constant = 0.0;
    std::map<double, double> by_magnitude;
    for (double mag : {1.0, 100.0, 10000.0}) {
        const auto bases = probe_bases(m, d, 7, {mag});
        double worst = 0.0;
        for (const Point& x : sample_points) {
            for (std::size_t b = 1; b < bases.size(); ++b) {
                const auto& [y, z] = bases[b];
                const double step = 1e-3 * (1.0 + mag);
                for (int i = 0; i < m; ++i) {
                    const double base = problem.generator(i, x, y, z);
                    for (int c = 0; c < m + d; ++c) {
                        Point y2 = y, z2 = z;
                        if (c < m) y2[static_cast<std::size_t>(c)] += step;
                        else z2[static_cast<std::size_t>(c - m)] += step;
                        const double ratio = std::abs(problem.generator(i, x, y2, z2) - base) / step;
                        if (std::isfinite(ratio)) worst = std::max(worst, ratio);
                    }
                }
            }
        }
        by_magnitude[mag] = worst;
        constant = std::max(constant, worst);
    }
    report.lipschitz_constant = constant;
    if (by_magnitude[10000.0] > 8.0 * by_magnitude[1.0] + 1e-9) {
        Point x = sample_points.empty() ? Point(static_cast<std::size_t>(k), 0.0) : sample_points.front();
        add_witness(lipschitz, x,
                    fmt::format("local Lipschitz ratio grows from {:g} (|y,z|~1) to {:g} (|y,z|~1e4)",
                                by_magnitude[1.0], by_magnitude[10000.0]));
        lipschitz.error = "NotLipschitz";
    }
    lipschitz.note = fmt::format("C ~ {:.3g}", constant);
    report.results["H2(ii)"] = std::move(lipschitz);

    // Lipschitz and linear growth of b and sigma.
    HypothesisResult h1;
    h1.verdict = Verdict::pass;
    if (diffusion.family() != DiffusionFamily::custom) {
        h1.note = fmt::format("L_b = {:g}, L_sigma = {:g}, growth C = {:g} from parameters",
                              diffusion.lipschitz_drift().value_or(0.0), diffusion.lipschitz_sigma().value_or(0.0),
                              diffusion.growth_constant().value_or(0.0));
    } else {
        const auto dirs = ray_directions(k);
        std::vector<double> b(static_cast<std::size_t>(k)), s(static_cast<std::size_t>(k * d));
        std::vector<double> b2(b.size()), s2(s.size());
        auto size_at = [&](const Point& x) {
            diffusion.drift(x, b);
            diffusion.sigma(x, s);
            return norm2(b) + norm2(s);
        };
        auto local_lipschitz = [&](const Point& x) {
            double worst = 0.0;
            const double h = 1e-4 * (1.0 + norm2(x));
            for (int a = 0; a < k; ++a) {
                Point x2 = x;
                x2[static_cast<std::size_t>(a)] += h;
                diffusion.drift(x, b);
                diffusion.sigma(x, s);
                diffusion.drift(x2, b2);
                diffusion.sigma(x2, s2);
                double db = 0.0, ds = 0.0;
                for (std::size_t c = 0; c < b.size(); ++c) db += (b2[c] - b[c]) * (b2[c] - b[c]);
                for (std::size_t c = 0; c < s.size(); ++c) ds += (s2[c] - s[c]) * (s2[c] - s[c]);
                worst = std::max(worst, (std::sqrt(db) + std::sqrt(ds)) / h);
            }
            return worst;
        };
        double growth_near = 0.0, growth_far = 0.0, lip_near = 0.0, lip_far = 0.0;
        Point far_witness;
        for (const auto& dir : dirs) {
            Point near = dir, far = dir;
            for (double& v : near) v *= 32.0;
            for (double& v : far) v *= 1024.0;
            growth_near = std::max(growth_near, size_at(near) / 33.0);
            const double gf = size_at(far) / 1025.0;
            if (!(gf <= growth_far)) far_witness = far;
            growth_far = std::max(growth_far, gf);
            lip_near = std::max(lip_near, local_lipschitz(near));
            lip_far = std::max(lip_far, local_lipschitz(far));
        }
        for (const Point& x : sample_points) {
            lip_near = std::max(lip_near, local_lipschitz(x));
            growth_near = std::max(growth_near, size_at(x) / (1.0 + norm2(x)));
        }
        if (!std::isfinite(growth_far) || growth_far > 8.0 * growth_near + 1e-9) {
            add_witness(h1, far_witness, fmt::format("|b| + |sigma| grows faster than linearly ({:g} vs {:g})",
                                                     growth_far, growth_near));
            h1.error = "SuperLinearCoefficients";
        }
        if (!std::isfinite(lip_far) || lip_far > 8.0 * lip_near + 1e-9) {
            add_witness(h1, far_witness, fmt::format("local Lipschitz constant grows ({:g} vs {:g})", lip_far, lip_near));
            h1.error = "NotLipschitz";
        }
        h1.note = fmt::format("sampled: growth C ~ {:.3g}, Lipschitz ~ {:.3g}", growth_near, lip_near);
    }
    report.results["H1"] = std::move(h1);
    return report;
}

// ---------------------------------------------------------------------------
// Discount
// ---------------------------------------------------------------------------

ValidationReport validate_discount(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                   const Point& x0, const DiscountCheckSettings& settings) {
    if (!(settings.horizon > 0.0) || settings.n_paths < 100 || settings.n_steps < 4)
        throw Error(ErrorKind::Config, "validate_discount needs T > 0, n_paths >= 100 and n_steps >= 4");
    const double r = problem.discount();
    const int m = problem.num_modes();
    const std::size_t steps = settings.n_steps - settings.n_steps % 4;
    const double dt = settings.horizon / static_cast<double>(steps);
    const PathBatch batch = simulate_paths(diffusion, x0, dt, settings.horizon, settings.n_paths, settings.seed);

    HypothesisResult result;
    result.verdict = Verdict::pass;
    ValidationReport report;
    report.discount = r;

    const Point y(static_cast<std::size_t>(m), 0.0), z(static_cast<std::size_t>(problem.dim_noise()), 0.0);
    double worst_ratio = -1.0;
    for (int i = 0; i < m; ++i) {
        std::vector<double> profile;
        for (int c = 1; c <= 4; ++c) {
            const std::size_t j = steps * static_cast<std::size_t>(c) / 4;
            double acc = 0.0;
            for (std::size_t p = 0; p < batch.n_paths; ++p) acc += std::abs(problem.generator(i, batch.state(p, j), y, z));
            profile.push_back(std::exp(-r * batch.time(j)) * acc / static_cast<double>(batch.n_paths));
        }
        const double first = profile.front();
        const double ratio = first > 0.0 ? profile.back() / first : 0.0;
        if (ratio > worst_ratio) {
            worst_ratio = ratio;
            report.decay_profile = profile;
        }
        if (!std::all_of(profile.begin(), profile.end(), [](double v) { return std::isfinite(v); })) {
            add_witness(result, x0, fmt::format("mode {}: non-finite discounted payoff", i + 1));
            result.error = "DiscountTooSmall";
            continue;
        }
        if (first == 0.0 && profile.back() == 0.0) continue;  // f_i vanishes along the paths
        const bool tail_decreasing = profile[1] >= profile[2] && profile[2] >= profile[3];
        if (!tail_decreasing || !(profile[3] < 0.5 * profile[0])) {
            add_witness(result, x0, fmt::format("mode {}: discounted mean |f| at T/4..T = [{}]", i + 1,
                                                fmt::join(profile, ", ")));
            result.error = "DiscountTooSmall";
        }
    }

    const double gamma = estimate_growth_exponent(problem);
    report.growth_exponent = gamma;
    if (const auto rate = diffusion.moment_growth_rate(gamma)) {
        if (!(*rate < r)) {
            add_witness(result, x0, fmt::format("closed-form moment growth rate mu_q = {:g} >= r = {:g} (q = {:.3g})",
                                                *rate, r, gamma));
            result.error = "DiscountTooSmall";
        }
        result.note = fmt::format("mu_q = {:g} with q = gamma = {:.3g}, r = {:g}", *rate, gamma, r);
    } else {
        result.note = "custom coefficients: empirical decay test only";
    }
    report.results["H5"] = std::move(result);
    return report;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<Point> latin_hypercube(std::span<const std::pair<double, double>> box, std::size_t count,
                                   std::uint64_t seed) {
    const std::size_t k = box.size();
    std::vector<Point> points(count, Point(k));
    const CounterRng rng(seed, Stream::latin_hypercube);
    for (std::size_t a = 0; a < k; ++a) {
        std::vector<std::size_t> strata(count);
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        for (std::size_t i = count; i > 1; --i) {
            const auto [u, unused] = rng.uniform2(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(i), 0);
            (void)unused;
            std::swap(strata[i - 1], strata[static_cast<std::size_t>(u * static_cast<double>(i))]);
        }
        for (std::size_t i = 0; i < count; ++i) {
            const auto [unused, u] = rng.uniform2(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(i), 1);
            (void)unused;
            const double frac = (static_cast<double>(strata[i]) + u) / static_cast<double>(count);
            points[i][a] = box[a].first + frac * (box[a].second - box[a].first);
        }
    }
    return points;
}

} // namespace mswitch
