#pragma once

#include "lowrank/experiments.hpp"

namespace lowrank::accept {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::vector<CheckResult> checks;
    double seconds = 0.0;
};

inline constexpr int kNumCriteria = 11;

// Runs one acceptance criterion. Experiment-backed criteria write their
// artifacts under work_dir/criterion_<id>.
CriterionResult run_criterion(int id, const std::filesystem::path& work_dir,
                              std::uint64_t seed, int jobs);

std::string criterion_title(int id);

}  // namespace lowrank::accept
