#pragma once

#include "lowrank/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <set>
#include <string>

namespace lowrank::io {

using nlohmann::json;

std::string format_double(double v);  // %.17g, locale-independent

json overlap_to_json(const OverlapState& s);
OverlapState overlap_from_json(const json& j);

json task_to_json(const TaskSpec& spec);
TaskSpec task_from_json(const json& j);

json sim_to_json(const SimConfig& cfg);
SimConfig sim_from_json(const json& j);

json record_to_json(const EpochRecord& r, Variant variant);

// One JSON object per epoch record.
void write_trace_jsonl(const std::filesystem::path& path, const TrainTrace& trace,
                       Variant variant);

// Flat per-epoch table; columns follow the canonical overlap orderings.
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace,
                     Variant variant);

// Columns: t, kappa..., delta (nonlinear), output.
void write_trajectory_csv(const std::filesystem::path& path, const EffectiveTrajectory& traj,
                          const SimConfig& cfg);

void write_text(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);  // line/column diagnostics on error

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rejects unknown keys; `context` names the object in error messages.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context);

// FNV-1a 64-bit content hash, hex-encoded.
std::string fnv1a_file(const std::filesystem::path& path);

}  // namespace lowrank::io
