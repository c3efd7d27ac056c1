#include "mswitch/io.hpp"

#include "mswitch/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace mswitch {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string format_double(double value) { return fmt::format("{:.17g}", value); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::Io, fmt::format("short write to '{}'", path.string()));
}

std::string value_field_csv(const ValueField& field) {
    const int k = field.grid.dim();
    std::string out = fmt::format("# config_hash={}\nnode_index", field.config_hash);
    for (int a = 1; a <= k; ++a) out += fmt::format(",x{}", a);
    for (int i = 1; i <= field.modes; ++i) out += fmt::format(",v{}", i);
    for (int i = 1; i <= field.modes; ++i) out += fmt::format(",slack{}", i);
    out += '\n';
    Point x(static_cast<std::size_t>(k));
    for (std::size_t node = 0; node < field.num_nodes(); ++node) {
        field.grid.coords(node, x);
        out += std::to_string(node);
        for (double c : x) (out += ',') += format_double(c);
        for (const auto& v : field.values) (out += ',') += format_double(v[static_cast<Eigen::Index>(node)]);
        for (int i = 0; i < field.modes; ++i) {
            const double s = field.slack.empty() ? 0.0 : field.slack[static_cast<std::size_t>(i)][static_cast<Eigen::Index>(node)];
            (out += ',') += format_double(s);
        }
        out += '\n';
    }
    out += fmt::format("# content_hash={}\n", hex64(fnv1a64(out)));
    return out;
}

namespace {

double parse_number(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorKind::HashMismatch, fmt::format("line {}: '{}' is not a number", line, s));
    return v;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        parts.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return parts;
}

} // namespace

ValueField parse_value_field_csv(std::string_view text, const Grid& grid, int modes,
                                 std::string_view expected_config_hash) {
    const std::string_view tag = "# content_hash=";
    const auto at = text.rfind(tag);
    if (at == std::string_view::npos || (at > 0 && text[at - 1] != '\n'))
        throw Error(ErrorKind::HashMismatch, "value field has no content hash line");
    std::string_view stored = text.substr(at + tag.size());
    while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.remove_suffix(1);
    if (stored != hex64(fnv1a64(text.substr(0, at))))
        throw Error(ErrorKind::HashMismatch, "value field content hash does not match its bytes (edited by hand?)");

    std::string_view body = text.substr(0, at);
    std::vector<std::string_view> lines;
    while (!body.empty()) {
        const auto nl = body.find('\n');
        lines.push_back(body.substr(0, nl));
        if (nl == std::string_view::npos) break;
        body.remove_prefix(nl + 1);
    }
    const std::string_view cfg = "# config_hash=";
    if (lines.size() < 2 || lines[0].substr(0, cfg.size()) != cfg)
        throw Error(ErrorKind::HashMismatch, "value field has no config hash line");
    const auto config_hash = lines[0].substr(cfg.size());
    if (config_hash != expected_config_hash)
        throw Error(ErrorKind::HashMismatch, fmt::format("value field was produced for config {} but this config is {}",
                                                         config_hash, expected_config_hash));

    const int k = grid.dim();
    const std::size_t n = grid.num_nodes();
    const std::size_t columns = 1 + static_cast<std::size_t>(k + 2 * modes);
    if (split(lines[1]).size() != columns || lines.size() != n + 2)
        throw Error(ErrorKind::HashMismatch, "value field shape does not match the configured grid and modes");

    ValueField field;
    field.grid = grid;
    field.modes = modes;
    field.config_hash = std::string(config_hash);
    field.values.assign(static_cast<std::size_t>(modes), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    field.slack = field.values;
    for (std::size_t node = 0; node < n; ++node) {
        const auto parts = split(lines[node + 2]);
        if (parts.size() != columns)
            throw Error(ErrorKind::HashMismatch, fmt::format("line {}: expected {} columns", node + 3, columns));
        for (int i = 0; i < modes; ++i) {
            const auto idx = static_cast<Eigen::Index>(node);
            field.values[static_cast<std::size_t>(i)][idx] =
                parse_number(parts[1 + static_cast<std::size_t>(k + i)], node + 3);
            field.slack[static_cast<std::size_t>(i)][idx] =
                parse_number(parts[1 + static_cast<std::size_t>(k + modes + i)], node + 3);
        }
    }
    field.solver_tag = "loaded";
    return field;
}

Json point_to_json(const Point& x) {
    Json a = Json::array();
    for (double v : x) a.push_back(v);
    return a;
}

Json trace_to_json(const IterationTrace& trace) {
    Json steps = Json::array();
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const auto& st = trace.steps[s];
        steps.push_back({{"step", s + 1},
                         {"sup_change", st.sup_change},
                         {"min_increment", st.min_increment},
                         {"inner_iterations", st.inner_iterations},
                         {"residual", st.residual}});
    }
    return steps;
}

Json residual_to_json(const ResidualReport& report) {
    return {{"sup", report.sup},
            {"l2", report.l2},
            {"sup_per_mode", report.sup_per_mode},
            {"l2_per_mode", report.l2_per_mode},
            {"worst", {{"node", report.worst_node},
                       {"mode", report.worst_mode + 1},
                       {"value", report.worst_value},
                       {"obstacle_gap", report.worst_obstacle_gap},
                       {"equation", report.worst_equation}}}};
}

Json validation_to_json(const ValidationReport& report) {
    Json results = Json::object();
    for (const auto& [name, r] : report.results) {
        Json witnesses = Json::array();
        for (const auto& w : r.witnesses) witnesses.push_back({{"point", point_to_json(w.point)}, {"detail", w.detail}});
        Json entry = {{"verdict", std::string(to_string(r.verdict))}, {"witnesses", witnesses}};
        if (!r.error.empty()) entry["error"] = r.error;
        if (!r.note.empty()) entry["note"] = r.note;
        results[name] = entry;
    }
    Json out = {{"passed", report.passed()}, {"hypotheses", results}, {"warnings", report.warnings},
                {"decay_profile", report.decay_profile}};
    if (report.lipschitz_constant) out["lipschitz_constant"] = *report.lipschitz_constant;
    if (report.growth_exponent) out["growth_exponent"] = *report.growth_exponent;
    if (report.discount) out["discount"] = *report.discount;
    if (report.num_modes) out["num_modes"] = *report.num_modes;
    if (auto f = report.first_failure()) out["first_failure"] = *f;
    return out;
}

} // namespace mswitch
