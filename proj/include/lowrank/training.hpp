#pragma once

#include "lowrank/gradients.hpp"
#include "lowrank/overlap_core.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lowrank {

enum class Space { Parameter, Overlap, OverlapNaive };
enum class OptimizerKind { Gd, Adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam update with bias correction; t is the 1-based step count.
void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, Eigen::VectorXd& m1,
               Eigen::VectorXd& m2, long t, double eta, const AdamParams& p);

struct TrainConfig {
    Variant variant = Variant::LinearRank1;
    Space space = Space::Parameter;
    OptimizerKind optimizer = OptimizerKind::Gd;
    AdamParams adam;
    double eta = 5e-3;
    int batch_size = 1;
    double label_noise_std = 0.0;
    std::uint64_t seed = 1;
    // Scale of the 1/N prefactor in the learning metric. Parameter-space
    // updates carry the matching factor n/gram_scale_n so that both spaces
    // take identical steps at the same eta for any choice of gram_scale_n.
    double gram_scale_n = 1.0;
    double divergence_threshold = 1e6;
    int ckpt_every = 0;  // 0: phase boundaries only
    int log_every = 1;   // record thinning; phase-end epochs always recorded
    int qq_every = 0;    // Gaussianity diagnostic cadence (parameter space)
    int jobs = 1;
    bool lr_decay = false;  // divide eta by 5 on downward crossings of lr_threshold
    double lr_decay_factor = 0.2;
    double lr_threshold = 0.015;
    std::vector<std::pair<int, int>> k_samples = {{0, 1}, {1, 2}, {0, 2}};

    SimConfig sim;

    void validate() const;
    Activation activation() const {
        return variant == Variant::NonlinearRank1 ? Activation::Erf : Activation::Identity;
    }
};

struct Phase {
    TaskSpec task;
    int epochs = 0;
    std::string label;
    std::optional<double> eta;
    std::optional<double> label_noise_std;
    std::optional<bool> lr_decay;
};

struct ProtocolSpec {
    std::vector<Phase> phases;
};

struct EpochRecord {
    int epoch = 0;  // global, strictly increasing across phases
    std::string phase;
    double loss = 0.0;
    double eta = 0.0;
    Eigen::VectorXd visible, invisible;
    bool has_invariants = false;
    std::array<double, 4> c{};       // Tr(K^k), rank-1 variants
    std::vector<double> k_entries;   // sampled K entries (parameter space)
    int delta_clamps = 0;
    Eigen::VectorXd qq_r;  // empty unless sampled this epoch
};

struct Checkpoint {
    std::string tag;
    int epoch = 0;
    OverlapState state;
    std::optional<ParameterVectors> params;
};

struct TrainTrace {
    std::vector<EpochRecord> records;
    std::vector<Checkpoint> checkpoints;
    bool diverged = false;
    std::string diagnostic;
    int psd_warnings = 0;

    const Checkpoint& checkpoint(const std::string& tag) const;
};

using InitState = std::variant<ParameterVectors, OverlapState>;

// Runs the phases in order. Parameter space: theta <- theta - eta * scaled
// batch-mean gradient; overlap space: one Euler step of flow_rhs per epoch at
// the same eta; overlap_naive: visible <- visible - eta * grad, invisible
// frozen. Deterministic given (init, protocol, seed). Divergence (loss above
// threshold or NaN) stops the run and flags the trace.
TrainTrace train(const InitState& init, const ProtocolSpec& protocol, const TrainConfig& cfg);

// Twin protocol: branch 1 trains phaseA then phaseC, branch 2 phaseB then
// phaseC, from a bit-exact shared initialization and shared episode streams.
// Checkpoints align at "initial", "phase_ab", and phaseC's label.
std::pair<TrainTrace, TrainTrace> train_twins(const InitState& init, Phase phaseA, Phase phaseB,
                                              const Phase& phaseC, const TrainConfig& cfg);

// Batch-mean loss/gradient on a fixed epoch's episodes; shared by train() and
// the verification suites.
struct BatchEval {
    double loss = 0.0;
    int delta_clamps = 0;
};

std::vector<Episode> epoch_episodes(const TaskSpec& task, int phase_idx, int epoch,
                                    const TrainConfig& cfg, double label_noise_std);

}  // namespace lowrank
