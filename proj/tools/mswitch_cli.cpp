#include "mswitch/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>

namespace {

void add_common(CLI::App* cmd, mswitch::CliOptions& o) {
    cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", o.out, "Output directory (overrides output.directory)");
    cmd->add_option("--seed", o.seed, "Override the Monte Carlo and validation seed");
    cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("-q,--quiet", o.quiet, "Suppress summary lines");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal multi-mode switching: QVI solver and Monte Carlo validation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mswitch 1.0.0");

    mswitch::CliOptions o;
    auto* solve = app.add_subcommand("solve", "Validate the configuration and solve the QVI system");
    add_common(solve, o);

    auto* simulate = app.add_subcommand("simulate", "Compare a solved field with Monte Carlo strategy values");
    add_common(simulate, o);
    simulate->add_option("--field", o.field, "Value field CSV (default <out>/values.csv)");

    auto* verify = app.add_subcommand("verify", "Run the verification suite");
    add_common(verify, o);
    verify->add_flag("--corrupt-field", o.corrupt_field, "Test hook: lift one node above the upper envelope");
    verify->add_flag("--anti-diffusion", o.anti_diffusion, "Test hook: non-monotone assembly in the refinement check");

    auto* sweep = app.add_subcommand("sweep", "Re-solve along a parameter axis");
    add_common(sweep, o);
    sweep->add_option("--axis", o.axis, "shift | discount | cost_scale")->required();
    std::string values;
    sweep->add_option("--values", values, "Comma-separated axis values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : mswitch::exit_code::config_error;
    }

    if (*sweep) {
        std::stringstream list(values);
        for (std::string item; std::getline(list, item, ',');) {
            if (item.empty()) continue;
            try {
                std::size_t used = 0;
                o.values.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                std::cerr << "error: --values: '" << item << "' is not a number\n";
                return mswitch::exit_code::config_error;
            }
        }
    }

    try {
        if (*solve) return mswitch::run_solve(o);
        if (*simulate) return mswitch::run_simulate(o);
        if (*verify) return mswitch::run_verify(o);
        if (*sweep) return mswitch::run_sweep(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mswitch::exit_code::config_error;
    }
    return mswitch::exit_code::config_error;
}
