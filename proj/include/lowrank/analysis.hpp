#pragma once

#include "lowrank/training.hpp"

namespace lowrank {

// Dataset for training-history decoding: one feature vector per network
// (a visible or invisible overlap subset), binary label for the first-phase
// task. Feature noise is drawn fresh per split repetition.
struct DecodeDataset {
    std::vector<Eigen::VectorXd> features;
    std::vector<int> labels;  // 0 / 1
    double noise_std = 0.0;
};

struct DecodeResult {
    double mean_accuracy = 0.0;
    double sd_accuracy = 0.0;
};

// Cross-validated logistic-regression decoding: `splits` random train/test
// partitions with `test_count` held out, features standardized per split with
// train statistics, plain gradient descent (1000 iterations, step 0.1, no
// regularization). Degenerate single-class train splits are resampled.
DecodeResult decode_history(const DecodeDataset& data, int splits, std::uint64_t seed,
                            int test_count = 4);

// Functional-twin probe: two networks built from full overlap targets with
// identical visible blocks. Reports output distances before learning (clean
// and input-noise episodes) and the divergence once training starts.
struct DegeneracyReport {
    double pre_dist = 0.0;
    double noise_dist = 0.0;
    int first_epoch_above = -1;   // first epoch with output distance > 1e-3
    double divergence_at_50 = 0.0;  // max output distance within 50 epochs
    double max_loss_gap = 0.0;
    TrainTrace trace1, trace2;
    ParameterVectors init1, init2;
};

DegeneracyReport degeneracy_probe(const Eigen::MatrixXd& target1, const Eigen::MatrixXd& target2,
                                  const TaskSpec& task, int epochs, int n,
                                  const TrainConfig& cfg);

}  // namespace lowrank
