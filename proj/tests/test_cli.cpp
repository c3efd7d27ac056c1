#include "mswitch/cli.hpp"
#include "mswitch/io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <sstream>

using namespace mswitch;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

template <typename F>
Run run(F command, CliOptions o) {
    std::ostringstream out, err;
    o.out_stream = &out;
    o.err_stream = &err;
    const int status = command(o);
    return {status, out.str(), err.str()};
}

CliOptions options(const fs::path& config, const fs::path& out) {
    CliOptions o;
    o.config = config;
    o.out = out;
    return o;
}

/// Copies a desk config with `patch` merged in.
fs::path patched(const std::string& desk_name, const Json& patch, const fs::path& dir) {
    Json doc = Json::parse(read_text_file(testing::desk(desk_name)));
    doc.merge_patch(patch);
    const auto path = dir / (desk_name + "_patched.json");
    write_text_file(path, doc.dump(2));
    return path;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        rows.emplace_back();
        std::istringstream cells(line);
        for (std::string cell; std::getline(cells, cell, ',');) rows.back().push_back(cell);
    }
    return rows;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    return files;
}

} // namespace

TEST_CASE("solve writes the constants fixed point") {
    const auto dir = testing::scratch("cli_solve");
    const auto r = run(run_solve, options(testing::desk("constants_binding"), dir));
    CHECK(r.status == exit_code::ok);
    CHECK(r.out.find("solve: ok") != std::string::npos);
    const auto rows = csv_rows(read_text_file(dir / "values.csv"));
    REQUIRE(rows.size() == 65);
    CHECK(rows[0] == std::vector<std::string>{"node_index", "x1", "v1", "v2", "slack1", "slack2"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(std::stod(rows[i][2]) == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(std::stod(rows[i][3]) == doctest::Approx(3.0).epsilon(1e-10));
    }
    for (const char* name : {"trace.json", "residual.json", "provenance.json", "validation.json"})
        CHECK(fs::exists(dir / name));
    const auto provenance = Json::parse(read_text_file(dir / "provenance.json"));
    CHECK(provenance["config_hash"] == load_config(testing::desk("constants_binding")).hash());

    CliOptions quiet = options(testing::desk("constants_binding"), dir);
    quiet.quiet = true;
    CHECK(run(run_solve, quiet).out.empty());
}

TEST_CASE("validation gates reject the negative controls") {
    for (const auto& [name, error] : std::vector<std::pair<std::string, std::string>>{
             {"free_loop", "NonFreeLoopViolation"},
             {"nonmonotone", "MonotonicityViolation"},
             {"discount", "DiscountTooSmall"}}) {
        CAPTURE(name);
        const auto dir = testing::scratch("cli_negative_" + name);
        const auto r = run(run_solve, options(testing::negative(name), dir));
        CHECK(r.status == exit_code::validation_failed);
        const auto report = read_text_file(dir / "validation.json");
        CHECK(report.find(error) != std::string::npos);
        CHECK_FALSE(fs::exists(dir / "values.csv"));
    }
}

TEST_CASE("configuration errors exit 1 and name the path") {
    const auto dir = testing::scratch("cli_missing");
    const auto r = run(run_solve, options("/no/such/config.json", dir));
    CHECK(r.status == exit_code::config_error);
    CHECK(r.err.find("/no/such/config.json") != std::string::npos);
}

TEST_CASE("solver failures exit 5") {
    const auto dir = testing::scratch("cli_diverged");
    const auto cfg = patched("constants_binding", {{"solver", {{"max_outer", 1}}}}, dir);
    const auto r = run(run_solve, options(cfg, dir / "out"));
    CHECK(r.status == exit_code::diverged);
    CHECK(r.err.find("MaxOuterIterations") != std::string::npos);
}

TEST_CASE("simulate on the constants problem is exact") {
    const auto dir = testing::scratch("cli_simulate");
    const auto cfg = testing::desk("constants_binding");
    REQUIRE(run(run_solve, options(cfg, dir)).status == exit_code::ok);
    const auto r = run(run_simulate, options(cfg, dir));
    CHECK(r.status == exit_code::ok);
    const auto report = Json::parse(read_text_file(dir / "simulate.json"));
    CHECK(report["passed"] == true);
    for (const auto& entry : report["entries"]) CHECK(entry["gap"].get<double>() <= 1e-12);
}

TEST_CASE("simulate refuses edited fields and coupled generators") {
    const auto dir = testing::scratch("cli_simulate_guard");
    const auto cfg = testing::desk("constants_slack");
    REQUIRE(run(run_solve, options(cfg, dir)).status == exit_code::ok);
    std::string csv = read_text_file(dir / "values.csv");
    csv.replace(csv.find(",3,"), 3, ",4,");
    write_text_file(dir / "edited.csv", csv);
    CliOptions o = options(cfg, dir);
    o.field = dir / "edited.csv";
    const auto edited = run(run_simulate, o);
    CHECK(edited.status == exit_code::config_error);
    CHECK(edited.err.find("HashMismatch") != std::string::npos);

    // A field solved under a different config is refused as well.
    o.field = dir / "values.csv";
    o.config = testing::desk("constants_binding");
    CHECK(run(run_simulate, o).status == exit_code::config_error);

    const auto coupled = run(run_simulate, options(testing::desk("fully_coupled"), dir / "coupled"));
    CHECK(coupled.status == exit_code::coupled_generator);
    CHECK(coupled.err.find("state_only") != std::string::npos);
}

TEST_CASE("verify exit statuses") {
    const auto dir = testing::scratch("cli_verify");
    const auto cfg = testing::desk("constants_binding");
    CHECK(run(run_verify, options(cfg, dir / "ok")).status == exit_code::ok);
    const auto report = Json::parse(read_text_file(dir / "ok" / "verify.json"));
    CHECK(report["checks"].size() == 4);

    CliOptions corrupt = options(cfg, dir / "corrupt");
    corrupt.corrupt_field = true;
    CHECK(run(run_verify, corrupt).status == exit_code::check_failed);

    const auto two = patched("constants_binding", {{"verify", {{"resolutions", {16, 32}}}}}, dir);
    CHECK(run(run_verify, options(two, dir / "two")).status == exit_code::config_error);

    CliOptions anti = options(testing::desk("ou_two_mode"), dir / "anti");
    anti.anti_diffusion = true;
    CHECK(run(run_verify, anti).status == exit_code::check_failed);
}

TEST_CASE("sweeps") {
    const auto dir = testing::scratch("cli_sweep");
    const auto cfg = testing::desk("constants_binding");
    SUBCASE("additive shift moves values by delta / r") {
        CliOptions o = options(cfg, dir);
        o.axis = "shift";
        o.values = {0.0, 1.0, 2.0};
        REQUIRE(run(run_sweep, o).status == exit_code::ok);
        const auto rows = csv_rows(read_text_file(dir / "sweep.csv"));
        REQUIRE(rows.size() == 4);  // header, one point per value
        CHECK(rows[0][4] == "v1");
        for (std::size_t k = 1; k < rows.size(); ++k) {
            const double delta = std::stod(rows[k][1]);
            CHECK(std::stod(rows[k][4]) == doctest::Approx(2.0 + delta).epsilon(1e-9));
            CHECK(std::stod(rows[k][5]) == doctest::Approx(3.0 + delta).epsilon(1e-9));
        }
    }
    SUBCASE("discount") {
        CliOptions o = options(cfg, dir);
        o.axis = "discount";
        o.values = {0.5, 1.0, 2.0};
        REQUIRE(run(run_sweep, o).status == exit_code::ok);
        const auto rows = csv_rows(read_text_file(dir / "sweep.csv"));
        std::vector<double> v2;
        for (std::size_t i = 1; i < rows.size(); ++i) v2.push_back(std::stod(rows[i][5]));
        REQUIRE(v2.size() == 3);
        CHECK(v2[0] == doctest::Approx(6.0));
        CHECK(v2[1] == doctest::Approx(3.0));
        CHECK(v2[2] == doctest::Approx(1.5));
    }
    SUBCASE("bad requests") {
        CliOptions o = options(cfg, dir);
        o.axis = "shift";
        CHECK(run(run_sweep, o).status == exit_code::config_error);
        o.axis = "volatility";
        o.values = {1.0};
        CHECK(run(run_sweep, o).status == exit_code::config_error);
    }
    SUBCASE("a diverging value leaves a partial table") {
        const auto limited = patched("constants_slack", {{"solver", {{"max_outer", 2}}}}, dir);
        CliOptions o = options(limited, dir / "partial");
        o.axis = "cost_scale";
        o.values = {1.0, 0.2};
        CHECK(run(run_sweep, o).status == exit_code::diverged);
        const auto rows = csv_rows(read_text_file(dir / "partial" / "sweep.csv"));
        CHECK(rows.size() == 2);
    }
}

TEST_CASE("identical runs produce byte-identical artifacts") {
    const auto a = testing::scratch("cli_repro_a"), b = testing::scratch("cli_repro_b");
    const auto cfg = patched("ou_two_mode", {{"mc", {{"n_paths", 2000}}}}, testing::scratch("cli_repro_cfg"));
    for (const auto& dir : {a, b}) {
        CliOptions o = options(cfg, dir);
        o.seed = 5;
        REQUIRE(run(run_solve, o).status == exit_code::ok);
        REQUIRE(run(run_simulate, o).status != exit_code::config_error);
        REQUIRE(run(run_verify, o).status == exit_code::ok);
    }
    const auto sa = snapshot(a), sb = snapshot(b);
    CHECK(sa.size() >= 7);
    CHECK(sa == sb);
}
