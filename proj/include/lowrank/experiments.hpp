#pragma once

#include "lowrank/io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lowrank {

// Built-in experiment registry. Each id maps to a default config (JSON with
// every field materialized), a runner that writes artifacts into an output
// directory and returns a metrics object, and a set of named verification
// checks over those metrics.

std::vector<std::string> list_experiments();

io::json default_experiment_config(const std::string& id);

// Validates the config (unknown fields rejected), fills defaults, runs the
// experiment. Writes trace/summary artifacts plus resolved-config.json and
// manifest.json into out_dir. Returns the metrics object (also written to
// metrics.json).
io::json run_experiment(const io::json& config, const std::filesystem::path& out_dir);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Runs the experiment and evaluates its registered acceptance checks.
std::vector<CheckResult> verify_experiment(const io::json& config,
                                           const std::filesystem::path& out_dir);

// Checks against an existing metrics object (used by verify and the
// acceptance suite).
std::vector<CheckResult> check_metrics(const std::string& id, const io::json& metrics);

}  // namespace lowrank
