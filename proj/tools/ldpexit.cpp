// Command-line driver: one subcommand per experiment kind, each reading a JSON config.
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ldpexit/experiments.hpp"

namespace {

enum ExitCode { ok = 0, validation_failure = 1, config_error = 2 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::string out;
};

std::string canonical_kind(const std::string& sub) { return sub == "validate-hypotheses" ? "validate" : sub; }

int run(const std::string& sub, const Options& opt) {
    ldp::ExperimentConfig config;
    try {
        config = ldp::load_config(opt.config);
        if (ldp::kind_name(config.params) != canonical_kind(sub))
            throw ldp::ConfigError("config kind '" + ldp::kind_name(config.params) + "' does not match subcommand '" +
                                   sub + "'");
        if (opt.seed) config.seed = *opt.seed;
        if (!opt.out.empty()) config.output_dir = opt.out;
        ldp::validate(config);
    } catch (const ldp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    }

    const auto out = ldp::run_experiment(config, opt.threads);
    ldp::write_output(out, config.output_dir);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << kind_name(config.params) << ": " << (out.passed ? "passed" : "FAILED") << " -> "
              << config.output_dir << '\n';
    return out.passed ? ok : validation_failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-noise exit problems for spectral stochastic evolution equations"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;

    for (const std::string name : {"simulate", "exit-mc", "fw-scaling", "exit-place", "quasipotential",
                                   "operator-norms", "validate", "validate-hypotheses"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    auto* chosen = app.get_subcommands().front();
    if (chosen->count("--seed")) opt.seed = seed;
    try {
        return run(chosen->get_name(), opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation_failure;
    }
}
