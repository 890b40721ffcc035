// Command-line front end: run experiments from JSON configs, verify their
// acceptance assertions, and list the built-in registry.
//
//   lowrank-learn run <config.json> [--out DIR] [--jobs J]
//   lowrank-learn verify <config.json> [--out DIR] [--jobs J]
//   lowrank-learn list-experiments
//   lowrank-learn dump <experiment-id>
//
// LOWRANK_SEED in the environment overrides the config seed.
// Exit codes: 0 success, 1 config error / failed checks, 2 numerical
// divergence.

#include "lowrank/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using lowrank::io::json;

namespace {

json load_config(const std::string& path, int jobs) {
    json config = lowrank::io::read_json_file(path);
    if (jobs > 0 && config.contains("params") && config["params"].is_object()) {
        config["params"]["jobs"] = jobs;
    }
    return config;
}

std::string default_out_dir(const json& config) {
    return "out/" + config.value("experiment", std::string("run"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-rank RNN learning-dynamics laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int jobs = 0;

    auto* run_cmd = app.add_subcommand("run", "run an experiment config");
    run_cmd->add_option("config", config_path, "JSON config path")->required();
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_option("--jobs", jobs, "parallel episode evaluation");

    auto* verify_cmd = app.add_subcommand("verify", "run and check acceptance assertions");
    verify_cmd->add_option("config", config_path, "JSON config path")->required();
    verify_cmd->add_option("--out", out_dir, "output directory");
    verify_cmd->add_option("--jobs", jobs, "parallel episode evaluation");

    auto* list_cmd = app.add_subcommand("list-experiments", "print the built-in registry");

    std::string dump_id;
    auto* dump_cmd = app.add_subcommand("dump", "print the default config for an experiment id");
    dump_cmd->add_option("id", dump_id, "experiment id")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (list_cmd->parsed()) {
            for (const auto& id : lowrank::list_experiments()) std::puts(id.c_str());
            return 0;
        }
        if (dump_cmd->parsed()) {
            std::cout << lowrank::default_experiment_config(dump_id).dump(2) << "\n";
            return 0;
        }
        const json config = load_config(config_path, jobs);
        const std::string out = out_dir.empty() ? default_out_dir(config) : out_dir;
        if (run_cmd->parsed()) {
            const json metrics = lowrank::run_experiment(config, out);
            std::printf("wrote %s\n", out.c_str());
            if (metrics.value("diverged", false)) {
                std::fprintf(stderr, "numerical divergence during the run\n");
                return 2;
            }
            return 0;
        }
        // verify
        const auto checks = lowrank::verify_experiment(config, out);
        bool all = true;
        std::printf("%-42s %-6s %s\n", "check", "status", "detail");
        for (const auto& c : checks) {
            std::printf("%-42s %-6s %s\n", c.name.c_str(), c.pass ? "pass" : "FAIL",
                        c.detail.c_str());
            all = all && c.pass;
        }
        return all ? 0 : 1;
    } catch (const lowrank::io::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
