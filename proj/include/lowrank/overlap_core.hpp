#pragma once

#include "lowrank/overlaps.hpp"

namespace lowrank {

// Learning-metric matrices. Every entry is a closed-form expression in the
// overlap entries themselves: for overlap rows s_ab and columns s_cd,
//   G[(ab),(cd)] = (d_ac*s_bd + d_ad*s_bc + d_bc*s_ad + d_bd*s_ac) / n
// where d is the Kronecker delta over vector ids. The divisor is the
// gram_scale_n convention (the N of the companion full network; the scaled
// Jacobian product D D^T reproduces exactly gram_scale_n = N).

// Visible-block Gram matrix G (4x4 / 7x7 / 9x9). Symmetric, PSD for states
// extracted from real vectors.
Eigen::MatrixXd gram_visible(const OverlapState& s, double gram_scale_n);

// Invisible-vs-visible block G~ (6x4 / 3x7 / 12x9).
Eigen::MatrixXd gram_invisible(const OverlapState& s, double gram_scale_n);

// Augmented 10x10 Gram over the exhaustive overlap set, LinearRank1 only.
// Row order: sigma_zm, sigma_zu, sigma_vm, sigma_vu, sigma_mu, sigma_zv,
// norm2_m, norm2_u, norm2_v, norm2_z.
Eigen::MatrixXd gram_augmented(const OverlapState& s, double gram_scale_n);

// Right-hand side of the overlap learning ODEs: (-G * grad, -G~ * grad).
struct OverlapRates {
    Eigen::VectorXd visible;
    Eigen::VectorXd invisible;
};

// For LinearRank2 this evaluates the explicit scalar equations of the 21-dim
// system; the other variants go through the matrix form. flow_rhs_matrix is
// the matrix-form route for all variants (rank-2 cross-check oracle).
OverlapRates flow_rhs(const OverlapState& s, const GradientVector& grad, double gram_scale_n);
OverlapRates flow_rhs_matrix(const OverlapState& s, const GradientVector& grad,
                             double gram_scale_n);

// Single Gram entry from the full overlap matrix; exposed for tests.
double gram_entry(const Eigen::MatrixXd& full, const OverlapPair& p, const OverlapPair& q);

}  // namespace lowrank
