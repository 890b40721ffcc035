#pragma once

#include "lowrank/full_network.hpp"
#include "lowrank/overlaps.hpp"

#include <array>
#include <vector>

namespace lowrank {

struct TrainTrace;  // training.hpp

// The gradient-flow invariant of the linear rank-1 model, scaled like the
// overlaps: K = (1/N)(z z^T + v v^T - m m^T - u u^T). rank(K) <= 4, so the
// trace powers C_k = Tr(K^k), k = 1..4, follow from the 4x4 scaled Gram of
// (z, v, m, u) without forming K; the explicit matrix is materialized only
// for n <= 64.
struct KSummary {
    std::array<double, 4> c{};
    std::vector<double> entries;  // sampled K entries
    Eigen::MatrixXd K;            // empty unless n <= 64
};

KSummary compute_K(const ParameterVectors& pv,
                   const std::vector<std::pair<int, int>>& sample_indices = {{0, 1},
                                                                             {1, 2},
                                                                             {0, 2}});

double k_entry(const ParameterVectors& pv, int i, int j);

// C_1..C_4 from the overlap state alone (rank-1 variants).
std::array<double, 4> invariant_traces(const OverlapState& s);

// Balanced-solution residuals of the filter task: sigma_zu - sigma_vm and
// sigma_zu * sigma_vm - a*(1 - c*).
struct BalanceResiduals {
    double asymmetry = 0.0;
    double product_error = 0.0;
};
BalanceResiduals balance_residuals(const OverlapState& s, double a_star, double c_star);

// Relative drift of the invariants over a window of epoch records:
// max_e |X(e) - X(first)| / (1 + |X(first)|).
struct ConservationReport {
    std::array<double, 4> c_drift{};
    double max_c_drift = 0.0;
    std::vector<double> entry_drift;
    double max_entry_drift = 0.0;
    bool has_entries = false;
};

struct MissingInvariantData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Window is [from_epoch, to_epoch] over trace.records (to_epoch < 0 means the
// end). Sampled-entry drift needs a parameter-space trace; with
// require_entries the report throws MissingInvariantData otherwise.
ConservationReport conservation_report(const TrainTrace& trace, int from_epoch = 0,
                                       int to_epoch = -1, bool require_entries = true);

}  // namespace lowrank
