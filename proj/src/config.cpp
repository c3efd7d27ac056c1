#include "mswitch/config.hpp"

#include "mswitch/error.hpp"

#include <cmath>

#include <fmt/format.h>

namespace mswitch {

namespace {

/// A view of one JSON node that knows its pointer, so every complaint names
/// the field it is about.
class Node {
public:
    Node(const Json& value, std::string pointer, std::string_view source)
        : value_(value), pointer_(std::move(pointer)), source_(source) {}

    [[noreturn]] void fail(std::string_view what) const {
        throw Error(ErrorKind::Config,
                    fmt::format("{}: {}: {}", source_, pointer_.empty() ? "/" : pointer_, what));
    }

    const Json& json() const noexcept { return value_; }
    const std::string& pointer() const noexcept { return pointer_; }

    Node object(std::initializer_list<std::string_view> allowed) const {
        if (!value_.is_object()) fail("must be an object");
        for (const auto& [key, _] : value_.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                Node(value_[key], child_pointer(key), source_).fail("unknown key");
        }
        return *this;
    }

    bool has(std::string_view key) const { return value_.is_object() && value_.contains(std::string(key)); }

    Node operator[](std::string_view key) const {
        if (!has(key)) Node(Json(), child_pointer(key), source_).fail("is required");
        return Node(value_.at(std::string(key)), child_pointer(key), source_);
    }

    Node at(std::size_t i) const { return Node(value_.at(i), fmt::format("{}/{}", pointer_, i), source_); }

    std::size_t array_size() const {
        if (!value_.is_array()) fail("must be an array");
        return value_.size();
    }

    double number() const {
        if (!value_.is_number()) fail("must be a number");
        const double v = value_.get<double>();
        if (!std::isfinite(v)) fail("must be finite");
        return v;
    }
    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("must be > 0");
        return v;
    }
    std::int64_t integer(std::int64_t min) const {
        if (!value_.is_number_integer()) fail("must be an integer");
        const auto v = value_.get<std::int64_t>();
        if (v < min) fail(fmt::format("must be >= {}", min));
        return v;
    }
    std::uint64_t unsigned_integer() const {
        if (!value_.is_number_unsigned() && !(value_.is_number_integer() && value_.get<std::int64_t>() >= 0))
            fail("must be a non-negative integer");
        return value_.get<std::uint64_t>();
    }
    bool boolean() const {
        if (!value_.is_boolean()) fail("must be true or false");
        return value_.get<bool>();
    }
    std::string string() const {
        if (!value_.is_string()) fail("must be a string");
        return value_.get<std::string>();
    }
    /// Expression source: a string, or a number written out exactly.
    std::string expression() const {
        if (value_.is_number()) return format_double(number());
        return string();
    }
    std::vector<double> numbers() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < array_size(); ++i) out.push_back(at(i).number());
        return out;
    }

private:
    std::string child_pointer(std::string_view key) const {
        std::string escaped;
        for (char c : key) {
            if (c == '~') escaped += "~0";
            else if (c == '/') escaped += "~1";
            else escaped += c;
        }
        return pointer_ + "/" + escaped;
    }

    const Json& value_;
    std::string pointer_;
    std::string_view source_;
};

/// Row-major k x d matrix from a nested array.
std::vector<double> matrix(const Node& node, int rows, int& cols) {
    if (node.array_size() != static_cast<std::size_t>(rows)) node.fail(fmt::format("must have {} rows", rows));
    std::vector<double> out;
    cols = -1;
    for (int a = 0; a < rows; ++a) {
        const auto row = node.at(static_cast<std::size_t>(a)).numbers();
        if (cols >= 0 && static_cast<int>(row.size()) != cols) node.at(static_cast<std::size_t>(a)).fail("ragged matrix");
        cols = static_cast<int>(row.size());
        out.insert(out.end(), row.begin(), row.end());
    }
    if (cols < 1) node.fail("needs at least one column");
    return out;
}

DiffusionSpec parse_diffusion(const Node& root) {
    const Node node = root.object({"family", "drift", "sigma", "kappa", "theta", "mu", "vol", "noise_dim"});
    const std::string family = node["family"].string();
    try {
        if (family == "constant" || family == "affine") {
            int k = 0;
            std::vector<double> drift, kappa, theta;
            if (family == "constant") {
                if (node.has("kappa") || node.has("theta") || node.has("mu") || node.has("vol"))
                    node.fail("constant family takes drift and sigma");
                drift = node["drift"].numbers();
                k = static_cast<int>(drift.size());
            } else {
                if (node.has("drift") || node.has("mu") || node.has("vol")) node.fail("affine family takes kappa, theta and sigma");
                kappa = node["kappa"].numbers();
                theta = node["theta"].numbers();
                k = static_cast<int>(kappa.size());
            }
            if (k < 1) node.fail("state dimension must be >= 1");
            int d = 0;
            auto sigma = matrix(node["sigma"], k, d);
            if (node.has("noise_dim") && node["noise_dim"].integer(1) != d)
                node["noise_dim"].fail("does not match the sigma matrix");
            return family == "constant" ? DiffusionSpec::constant(drift, sigma, d)
                                        : DiffusionSpec::affine(kappa, theta, sigma, d);
        }
        if (family == "geometric") {
            if (node.has("drift") || node.has("sigma") || node.has("kappa") || node.has("theta"))
                node.fail("geometric family takes mu and vol");
            return DiffusionSpec::geometric(node["mu"].numbers(), node["vol"].numbers());
        }
        if (family == "custom") {
            const Node drift = node["drift"];
            std::vector<std::string> b;
            for (std::size_t a = 0; a < drift.array_size(); ++a) b.push_back(drift.at(a).expression());
            const int k = static_cast<int>(b.size());
            const Node sig = node["sigma"];
            if (sig.array_size() != static_cast<std::size_t>(k)) sig.fail(fmt::format("must have {} rows", k));
            std::vector<std::string> s;
            int d = -1;
            for (int a = 0; a < k; ++a) {
                const Node row = sig.at(static_cast<std::size_t>(a));
                const int cols = static_cast<int>(row.array_size());
                if (d >= 0 && cols != d) row.fail("ragged matrix");
                d = cols;
                for (int l = 0; l < cols; ++l) s.push_back(row.at(static_cast<std::size_t>(l)).expression());
            }
            return DiffusionSpec::custom(k, std::max(d, 0), b, s);
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config && std::string_view(e.what()).find(": /") != std::string_view::npos) throw;
        node.fail(e.what());
    }
    node["family"].fail(fmt::format("unknown family '{}' (constant, affine, geometric, custom)", family));
}

Coupling parse_coupling(const Node& node) {
    const std::string c = node.string();
    if (c == "state_only") return Coupling::state_only;
    if (c == "own_component") return Coupling::own_component;
    if (c == "fully_coupled") return Coupling::fully_coupled;
    node.fail(fmt::format("unknown coupling '{}' (state_only, own_component, fully_coupled)", c));
}

SwitchingProblem parse_problem(const Node& root, int k, int d) {
    const Node node = root.object({"modes", "costs", "discount", "cost_scale"});
    const Node modes = node["modes"];
    const std::size_t m = modes.array_size();
    if (m < 1) modes.fail("needs at least one mode");
    const VariableSpace vars{k, static_cast<int>(m), d};

    std::vector<ModeSpec> specs;
    for (std::size_t i = 0; i < m; ++i) {
        const Node entry = modes.at(i);
        ModeSpec spec;
        spec.label = fmt::format("mode{}", i + 1);
        if (entry.json().is_object()) {
            entry.object({"label", "generator", "coupling", "shift"});
            if (entry.has("label")) spec.label = entry["label"].string();
            if (entry.has("shift")) spec.shift = entry["shift"].number();
        }
        const Node gen = entry.json().is_object() ? entry["generator"] : entry;
        try {
            spec.generator = Expression::parse(gen.expression(), vars);
        } catch (const Error& e) {
            gen.fail(e.what());
        }
        spec.coupling = SwitchingProblem::infer_coupling(spec.generator, static_cast<int>(i));
        if (entry.json().is_object() && entry.has("coupling")) {
            const Coupling declared = parse_coupling(entry["coupling"]);
            if (static_cast<int>(declared) < static_cast<int>(spec.coupling))
                entry["coupling"].fail(fmt::format("declared {} but the generator reads more ({})", to_string(declared),
                                                   to_string(spec.coupling)));
            spec.coupling = declared;
        }
        specs.push_back(std::move(spec));
    }

    std::vector<std::vector<std::string>> costs(m, std::vector<std::string>(m, "0"));
    if (node.has("costs")) {
        const Node c = node["costs"];
        if (c.array_size() != m) c.fail(fmt::format("must be a {}x{} matrix", m, m));
        for (std::size_t i = 0; i < m; ++i) {
            const Node row = c.at(i);
            if (row.array_size() != m) row.fail(fmt::format("must have {} entries", m));
            for (std::size_t j = 0; j < m; ++j) {
                costs[i][j] = row.at(j).expression();
                try {
                    (void)Expression::parse(costs[i][j], VariableSpace{k, 0, 0});
                } catch (const Error& e) {
                    row.at(j).fail(e.what());
                }
            }
        }
    } else if (m > 1) {
        node.fail("\"costs\" is required when there is more than one mode");
    }

    const double r = node["discount"].number();
    if (!(r > 0.0)) node["discount"].fail("must be > 0");
    try {
        SwitchingProblem problem(k, d, std::move(specs), std::move(costs), r);
        if (node.has("cost_scale")) problem = problem.with_cost_scale(node["cost_scale"].number());
        return problem;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::TooManyModes) throw;
        node.fail(e.what());
    }
}

} // namespace

std::string RunConfig::hash() const {
    Json canonical = document;
    canonical.erase("output");
    return hex64(fnv1a64(canonical.dump()));
}

RunConfig parse_config(std::string_view text, std::string_view source, std::optional<std::uint64_t> seed) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Config, fmt::format("{}: {}", source, e.what()));
    }
    if (seed) {
        if (!doc.is_object()) doc = Json::object();
        if (!doc.contains("mc") || !doc["mc"].is_object()) doc["mc"] = Json::object();
        doc["mc"]["seed"] = *seed;
    }

    const Node root = Node(doc, "", source).object({"problem", "diffusion", "grid", "x0", "solver", "mc", "validation",
                                                    "verify", "output"});
    DiffusionSpec diffusion = parse_diffusion(root["diffusion"]);
    const int k = diffusion.dim_state();
    const int d = diffusion.dim_noise();
    if (k > 2) root["diffusion"].fail(fmt::format("state dimension {} is not supported (k <= 2)", k));

    RunConfig cfg(parse_problem(root["problem"], k, d));
    cfg.source = std::string(source);
    cfg.diffusion = std::move(diffusion);

    // Reference state and grid.
    cfg.x0.assign(static_cast<std::size_t>(k), 0.0);
    if (root.has("x0")) {
        cfg.x0 = root["x0"].numbers();
        if (static_cast<int>(cfg.x0.size()) != k) root["x0"].fail(fmt::format("must have {} entries", k));
    }
    std::vector<std::pair<double, double>> bounds;
    std::vector<int> cells(static_cast<std::size_t>(k), k == 1 ? 64 : 32);
    BoundaryPolicy boundary = BoundaryPolicy::dirichlet_envelope;
    bool have_bounds = false;
    if (root.has("grid")) {
        const Node g = root["grid"].object({"bounds", "cells", "boundary"});
        if (g.has("bounds")) {
            const Node b = g["bounds"];
            if (b.array_size() != static_cast<std::size_t>(k)) b.fail(fmt::format("must have {} [lo, hi] pairs", k));
            for (int a = 0; a < k; ++a) {
                const auto pair = b.at(static_cast<std::size_t>(a)).numbers();
                if (pair.size() != 2) b.at(static_cast<std::size_t>(a)).fail("must be [lo, hi]");
                bounds.emplace_back(pair[0], pair[1]);
            }
            have_bounds = true;
        }
        if (g.has("cells")) {
            const Node c = g["cells"];
            if (c.json().is_number_integer()) {
                cells.assign(static_cast<std::size_t>(k), static_cast<int>(c.integer(2)));
            } else {
                if (c.array_size() != static_cast<std::size_t>(k)) c.fail(fmt::format("must have {} entries", k));
                for (int a = 0; a < k; ++a) cells[static_cast<std::size_t>(a)] = static_cast<int>(c.at(static_cast<std::size_t>(a)).integer(2));
            }
        }
        if (g.has("boundary")) {
            const std::string b = g["boundary"].string();
            if (b == "neumann_zero") boundary = BoundaryPolicy::neumann_zero;
            else if (b != "dirichlet_envelope") g["boundary"].fail("must be dirichlet_envelope or neumann_zero");
        }
    }
    if (!have_bounds) {
        double norm = 0.0;
        for (double v : cfg.x0) norm += v * v;
        const double half = 5.0 * (1.0 + std::sqrt(norm));
        for (double c : cfg.x0) bounds.emplace_back(c - half, c + half);
    } else if (!root.has("x0")) {
        for (int a = 0; a < k; ++a)
            cfg.x0[static_cast<std::size_t>(a)] = 0.5 * (bounds[static_cast<std::size_t>(a)].first + bounds[static_cast<std::size_t>(a)].second);
    }
    try {
        cfg.grid = build_grid(bounds, cells, boundary);
    } catch (const Error& e) {
        root.has("grid") ? root["grid"].fail(e.what()) : root.fail(e.what());
    }

    if (root.has("solver")) {
        const Node s = root["solver"].object({"inner", "penalty_schedule", "outer_tol", "inner_tol", "max_outer",
                                              "max_inner", "damping", "linear_tol", "envelope_pad", "threads"});
        if (s.has("inner")) {
            const std::string m = s["inner"].string();
            if (m == "penalized") cfg.solver.inner = InnerMethod::penalized;
            else if (m == "policy_iteration") cfg.solver.inner = InnerMethod::policy_iteration;
            else s["inner"].fail("must be penalized or policy_iteration");
        }
        if (s.has("penalty_schedule")) cfg.solver.penalty_schedule = s["penalty_schedule"].numbers();
        if (s.has("outer_tol")) cfg.solver.outer_tol = s["outer_tol"].positive();
        if (s.has("inner_tol")) cfg.solver.inner_tol = s["inner_tol"].positive();
        if (s.has("max_outer")) cfg.solver.max_outer = static_cast<int>(s["max_outer"].integer(1));
        if (s.has("max_inner")) cfg.solver.max_inner = static_cast<int>(s["max_inner"].integer(1));
        if (s.has("damping")) cfg.solver.damping = s["damping"].number();
        if (s.has("linear_tol")) cfg.solver.linear_tol = s["linear_tol"].positive();
        if (s.has("envelope_pad")) cfg.solver.envelope_pad = s["envelope_pad"].number();
        if (s.has("threads")) cfg.solver.threads = static_cast<int>(s["threads"].integer(1));
        try {
            cfg.solver.validate();
        } catch (const Error& e) {
            s.fail(e.what());
        }
    }

    if (root.has("mc")) {
        const Node s = root["mc"].object({"dt", "horizon", "n_paths", "seed", "max_switches", "tail_tolerance",
                                          "growth_exponent", "test_points", "eps_disc", "eps_bind", "threads"});
        auto& mc = cfg.mc.mc;
        if (s.has("dt")) mc.dt = s["dt"].positive();
        if (s.has("horizon")) mc.horizon = s["horizon"].positive();
        if (s.has("n_paths")) mc.n_paths = static_cast<std::size_t>(s["n_paths"].integer(2));
        if (s.has("seed")) mc.seed = s["seed"].unsigned_integer();
        if (s.has("max_switches")) mc.max_switches = static_cast<int>(s["max_switches"].integer(1));
        if (s.has("tail_tolerance")) mc.tail_tolerance = s["tail_tolerance"].positive();
        if (s.has("growth_exponent")) mc.growth_exponent = s["growth_exponent"].number();
        if (s.has("threads")) mc.threads = static_cast<int>(s["threads"].integer(1));
        if (s.has("eps_disc")) cfg.mc.eps_disc = s["eps_disc"].number();
        if (s.has("eps_bind")) cfg.mc.eps_bind = s["eps_bind"].number();
        if (s.has("test_points")) {
            const Node tps = s["test_points"];
            for (std::size_t t = 0; t < tps.array_size(); ++t) {
                const Node tp = tps.at(t).object({"x", "mode"});
                TestPoint point;
                point.x0 = tp["x"].numbers();
                if (static_cast<int>(point.x0.size()) != k) tp["x"].fail(fmt::format("must have {} entries", k));
                const auto mode = tp["mode"].integer(1);
                if (mode > cfg.problem.num_modes()) tp["mode"].fail("exceeds the number of modes");
                point.mode = static_cast<int>(mode - 1);
                cfg.mc.test_points.push_back(std::move(point));
            }
        }
    }
    if (cfg.mc.test_points.empty())
        for (int i = 0; i < cfg.problem.num_modes(); ++i) cfg.mc.test_points.push_back({cfg.x0, i});

    cfg.validation.discount.seed = cfg.mc.mc.seed;
    cfg.validation.discount.horizon = std::max(10.0, 4.0 / cfg.problem.discount());
    if (root.has("validation")) {
        const Node s = root["validation"].object({"grid_points", "oversample", "probe_step", "discount"});
        if (s.has("grid_points")) cfg.validation.grid_points = static_cast<std::size_t>(s["grid_points"].integer(1));
        if (s.has("oversample")) cfg.validation.oversample = static_cast<std::size_t>(s["oversample"].integer(0));
        if (s.has("probe_step")) cfg.validation.probe_step = s["probe_step"].positive();
        if (s.has("discount")) {
            const Node dsc = s["discount"].object({"horizon", "n_paths", "n_steps", "seed"});
            if (dsc.has("horizon")) cfg.validation.discount.horizon = dsc["horizon"].positive();
            if (dsc.has("n_paths")) cfg.validation.discount.n_paths = static_cast<std::size_t>(dsc["n_paths"].integer(100));
            if (dsc.has("n_steps")) cfg.validation.discount.n_steps = static_cast<std::size_t>(dsc["n_steps"].integer(4));
            if (dsc.has("seed")) cfg.validation.discount.seed = dsc["seed"].unsigned_integer();
        }
    }

    if (root.has("verify")) {
        const Node s = root["verify"].object({"resolutions", "shift"});
        if (s.has("resolutions")) {
            const Node res = s["resolutions"];
            for (std::size_t i = 0; i < res.array_size(); ++i)
                cfg.verify.resolutions.push_back(static_cast<int>(res.at(i).integer(2)));
        }
        if (s.has("shift")) cfg.verify.shift = s["shift"].positive();
    }
    if (cfg.verify.resolutions.empty()) {
        const int c = cfg.grid.axis(0).cells;
        cfg.verify.resolutions = {std::max(2, c / 4), std::max(4, c / 2), std::max(8, c)};
        if (c % 4 != 0) cfg.verify.resolutions = {c, 2 * c, 4 * c};
    }

    if (root.has("output")) {
        const Node s = root["output"].object({"directory", "switch_log", "paths"});
        if (s.has("directory")) cfg.output.directory = s["directory"].string();
        if (s.has("switch_log")) cfg.output.switch_log = s["switch_log"].boolean();
        if (s.has("paths")) cfg.output.paths = s["paths"].boolean();
    }
    cfg.mc.mc.record_switches = cfg.output.switch_log;
    cfg.document = std::move(doc);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, fmt::format("cannot read config '{}'", path.string()));
    }
    return parse_config(text, path.string(), seed);
}

} // namespace mswitch
