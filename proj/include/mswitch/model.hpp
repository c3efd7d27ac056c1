#pragma once

#include "mswitch/expr.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mswitch {

using Point = std::vector<double>;

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

enum class DiffusionFamily {
    constant,   ///< b(x) = b0, sigma(x) = S
    affine,     ///< b_i(x) = kappa_i (theta_i - x_i), sigma(x) = S  (OU-like)
    geometric,  ///< b_i(x) = mu_i x_i, sigma(x) = diag(s_i x_i)
    custom,     ///< expression strings over x1..xk
};

std::string_view to_string(DiffusionFamily family);

/// State dynamics dX = b(X) dt + sigma(X) dB with X in R^k and B in R^d.
/// sigma is stored row-major (k rows, d columns).
class DiffusionSpec {
public:
    static DiffusionSpec constant(std::vector<double> drift, std::vector<double> sigma, int noise_dim);
    static DiffusionSpec affine(std::vector<double> kappa, std::vector<double> theta,
                                std::vector<double> sigma, int noise_dim);
    static DiffusionSpec geometric(std::vector<double> mu, std::vector<double> vol);
    static DiffusionSpec custom(int state_dim, int noise_dim, std::vector<std::string> drift,
                                std::vector<std::string> sigma);

    int dim_state() const noexcept { return k_; }
    int dim_noise() const noexcept { return d_; }
    DiffusionFamily family() const noexcept { return family_; }

    void drift(std::span<const double> x, std::span<double> out) const;
    void sigma(std::span<const double> x, std::span<double> out) const;

    /// Lipschitz constants of b and sigma; known for parametric families only.
    std::optional<double> lipschitz_drift() const noexcept { return lip_b_; }
    std::optional<double> lipschitz_sigma() const noexcept { return lip_sigma_; }
    /// Constant C of |b(x)| + |sigma(x)| <= C (1 + |x|).
    std::optional<double> growth_constant() const noexcept { return growth_; }

    /// Exponential rate mu_q with E|X_t|^q <= C e^{mu_q t} (1 + |x|^q), in
    /// closed form for parametric families.
    std::optional<double> moment_growth_rate(double q) const;

    /// Flow-continuity constant exp((L_b + L_sigma^2) T + 1).
    std::optional<double> flow_constant(double horizon) const;

    /// Parameters as given (family dependent); used for hashing and reports.
    const std::map<std::string, std::vector<double>>& parameters() const noexcept { return params_; }
    const std::vector<Expression>& drift_expressions() const noexcept { return drift_expr_; }
    const std::vector<Expression>& sigma_expressions() const noexcept { return sigma_expr_; }

    /// True when b and sigma are both identically zero.
    bool is_frozen() const noexcept { return frozen_; }

private:
    DiffusionFamily family_ = DiffusionFamily::constant;
    int k_ = 1;
    int d_ = 1;
    std::vector<double> a_;      // b0 / kappa / mu
    std::vector<double> b_;      // theta
    std::vector<double> s_;      // sigma matrix or vol vector
    std::vector<Expression> drift_expr_;
    std::vector<Expression> sigma_expr_;
    std::map<std::string, std::vector<double>> params_;
    std::optional<double> lip_b_, lip_sigma_, growth_;
    bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Switching problem
// ---------------------------------------------------------------------------

/// Which arguments of f_i(x, y^1..y^m, z) a generator reads.
enum class Coupling { state_only, own_component, fully_coupled };

std::string_view to_string(Coupling c);

struct ModeSpec {
    std::string label;
    Expression generator;
    Coupling coupling = Coupling::state_only;
    double shift = 0.0;  ///< added to the generator (comparison/sweep sibling problems)
};

/// Running profits f_i, switching costs g_ij and the discount rate r.
class SwitchingProblem {
public:
    SwitchingProblem(int dim_state, int dim_noise, std::vector<ModeSpec> modes,
                     std::vector<std::vector<std::string>> costs, double discount);

    /// Convenience: parse generators from strings and infer their coupling.
    static SwitchingProblem from_strings(int dim_state, int dim_noise,
                                         const std::vector<std::string>& generators,
                                         const std::vector<std::vector<std::string>>& costs,
                                         double discount);

    int num_modes() const noexcept { return static_cast<int>(modes_.size()); }
    int dim_state() const noexcept { return k_; }
    int dim_noise() const noexcept { return d_; }
    double discount() const noexcept { return r_; }
    const ModeSpec& mode(int i) const { return modes_.at(static_cast<std::size_t>(i)); }
    const std::vector<ModeSpec>& modes() const noexcept { return modes_; }
    const std::vector<std::vector<std::string>>& cost_sources() const noexcept { return cost_src_; }
    double cost_scale() const noexcept { return cost_scale_; }

    double generator(int i, std::span<const double> x, std::span<const double> y,
                     std::span<const double> z) const;
    double cost(int i, int j, std::span<const double> x) const;

    bool all_state_only() const noexcept;

    SwitchingProblem shifted(double delta) const;
    SwitchingProblem with_discount(double r) const;
    SwitchingProblem with_cost_scale(double scale) const;

    /// Relabels modes: new mode `p` is old mode `perm[p]`.
    SwitchingProblem permuted(const std::vector<int>& perm) const;

    /// Checks the declared coupling against what each expression reads.
    static Coupling infer_coupling(const Expression& e, int own);

private:
    int k_;
    int d_;
    double r_;
    double cost_scale_ = 1.0;
    std::vector<ModeSpec> modes_;
    std::vector<std::vector<std::string>> cost_src_;
    std::vector<std::vector<Expression>> costs_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Verdict { pass, fail, indeterminate };

std::string_view to_string(Verdict v);

struct Witness {
    Point point;
    std::string detail;
};

struct HypothesisResult {
    Verdict verdict = Verdict::indeterminate;
    std::string error;  ///< error kind name when failed, e.g. "NonFreeLoopViolation"
    std::string note;
    std::vector<Witness> witnesses;
};

/// Per-hypothesis verdicts, keyed by "H1", "H2(i)", "H2(ii)", "H2(iii)",
/// "H3(i)", "H3(ii)", "H3(iii)", "H5".
struct ValidationReport {
    std::map<std::string, HypothesisResult> results;
    std::optional<double> lipschitz_constant;  ///< estimated C of the generators
    std::optional<double> growth_exponent;     ///< estimated gamma
    std::optional<double> discount;
    std::optional<int> num_modes;
    std::vector<double> decay_profile;         ///< from validate_discount
    std::vector<std::string> warnings;

    void merge(const ValidationReport& other);
    bool passed() const noexcept;
    /// First failed hypothesis, if any.
    std::optional<std::string> first_failure() const;
};

/// Enumerates every simple directed cycle of the complete graph on `m` modes,
/// each listed once, starting at its smallest mode and closing back on it.
std::vector<std::vector<int>> simple_cycles(int m);

constexpr int kMaxExactCycleModes = 8;

ValidationReport validate_switching_costs(const SwitchingProblem& problem,
                                          std::span<const Point> sample_points);

ValidationReport probe_monotonicity(const SwitchingProblem& problem,
                                    std::span<const Point> sample_points, double probe_step,
                                    std::uint64_t seed = 0);

struct DiscountCheckSettings {
    double horizon = 10.0;
    std::size_t n_paths = 400;
    std::size_t n_steps = 400;
    std::uint64_t seed = 0;
};

ValidationReport validate_discount(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                   const Point& x0, const DiscountCheckSettings& settings);

/// Lipschitz and growth bounds of the diffusion and the generators by sampled
/// falsification. Also records the estimates of C and gamma.
ValidationReport validate_regularity(const SwitchingProblem& problem, const DiffusionSpec& diffusion,
                                     std::span<const Point> sample_points);

/// `count` Latin-hypercube points in the box [lo_a, hi_a].
std::vector<Point> latin_hypercube(std::span<const std::pair<double, double>> box, std::size_t count,
                                   std::uint64_t seed);

/// Estimated polynomial growth exponent of x -> max_i |f_i(x, 0, ..., 0)|,
/// from the level ratio between radii 512 and 1024 along axis/diagonal rays.
double estimate_growth_exponent(const SwitchingProblem& problem);

} // namespace mswitch
