#pragma once

#include "lowrank/effective_dynamics.hpp"
#include "lowrank/overlaps.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lowrank {

// The trainable N-dimensional vectors. The rank-r recurrent matrix
// (1/N) sum_j u_j v_j^T is never materialized; all simulation and gradient
// code works with the factors, O(rN) per step.
struct ParameterVectors {
    int n = 0;
    int rank = 1;
    Eigen::VectorXd m, z;
    std::vector<Eigen::VectorXd> u, v;  // size rank

    int num_vectors() const { return 2 * rank + 2; }
    // Canonical vector order m, u_1..u_r, v_1..v_r, z.
    const Eigen::VectorXd& vec(int id) const;
    Eigen::VectorXd& vec(int id);
};

enum class Activation { Identity, Erf };

struct FullTrajectory {
    Eigen::VectorXd output;  // steps
    Eigen::MatrixXd h;       // stored rows (thinned by store_every) x N; empty if not stored
    int store_every = 0;
};

// Draws 2r+2 standard-normal N-vectors, orthonormalizes them under the scaled
// inner product (1/N) <.,.>, and maps them through a symmetric factor of the
// target overlap matrix. The extracted overlaps equal `target` to numerical
// precision, including rank-deficient targets. Vector order: m, u_1..u_r,
// v_1..v_r, z. Throws on non-PSD targets or n < 2r+2.
ParameterVectors sample_prescribed(const Eigen::MatrixXd& target, int n, std::uint64_t seed);

// I.i.d. N(0,1) initialization of all vectors.
ParameterVectors sample_iid_normal(int n, int rank, std::uint64_t seed);

// Forward Euler of the N-dim dynamics. store_every = 0 keeps only the output;
// store_every >= 1 keeps every store_every-th hidden state. Throws
// SimulationDiverged with the last valid step on NaN.
FullTrajectory simulate(const ParameterVectors& pv, Activation act, const Eigen::VectorXd& input,
                        const SimConfig& cfg, int store_every = 0);

// All pairwise (1/N)-scaled inner products and norms, partitioned per variant.
OverlapState extract_overlaps(const ParameterVectors& pv, Variant variant);
Eigen::MatrixXd full_overlap_matrix(const ParameterVectors& pv);

// Explicit sparse-block Jacobians of the overlap maps with respect to the
// stacked parameter vector (blocks in canonical vector order), including the
// 1/N factor. Row order matches the variant orderings.
Eigen::MatrixXd jacobian_visible(const ParameterVectors& pv, Variant variant);
Eigen::MatrixXd jacobian_invisible(const ParameterVectors& pv, Variant variant);
Eigen::MatrixXd jacobian_augmented(const ParameterVectors& pv);  // rank-1, 10 x 4N

// Q-Q Gaussianity diagnostic: Pearson correlation of sorted standardized
// components against normal quantiles at probability points (k-0.5)/N.
// Returns one r per vector in canonical order. Throws for n < 10 or a
// degenerate (constant) vector.
Eigen::VectorXd gaussianity_qq(const ParameterVectors& pv);

// Flat binary container: 8-byte header (magic 'L','R', version u8, rank u8,
// n u32 LE) followed by little-endian doubles in order m, u_1..u_r,
// v_1..v_r, z.
void save_params(const std::string& path, const ParameterVectors& pv);
ParameterVectors load_params(const std::string& path);

}  // namespace lowrank
