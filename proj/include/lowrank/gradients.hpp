#pragma once

#include "lowrank/full_network.hpp"
#include "lowrank/overlaps.hpp"
#include "lowrank/tasks.hpp"

#include <functional>

namespace lowrank {

// Coefficients of the two-exponential impulse response of the linear rank-1
// reduction: kernel(t) = A e^{-t} + B e^{-(1-s_vu) t}, with A + B = s_zm.
struct KernelCoefficients {
    double A = 0.0;
    double B = 0.0;
};
KernelCoefficients kernel_coefficients(const OverlapState& s);

// Closed-form filter-task gradient: the error e(t) between the analytic
// impulse kernel and the target a* e^{-c* t} is evaluated on the grid and the
// four sensitivity integrals are taken by trapezoidal quadrature on the same
// grid. Throws SingularOverlap near s_vu = 0 (use bptt_effective instead).
GradientVector filter_grad_closed(const OverlapState& s, const FilterTaskSpec& task,
                                  const SimConfig& cfg);

// Loss of the analytic-kernel output under the same trapezoid quadrature;
// this is the functional filter_grad_closed differentiates exactly.
double filter_loss_kernel(const OverlapState& s, const FilterTaskSpec& task, const SimConfig& cfg);

struct BpttOptions {
    // Mutation hook for tests: drops the d(delta)/d{sigma_mu, |m|^2, |u|^2}
    // accumulation terms of the nonlinear adjoint.
    bool zero_delta_pathway = false;
};

// Discrete adjoint through the forward-Euler recursion of the matching
// effective simulator; differentiates the episode loss with respect to every
// visible overlap. Throws SimulationDiverged on non-finite intermediates.
GradientVector bptt_effective(const OverlapState& s, const Episode& ep, const SimConfig& cfg,
                              const BpttOptions& opts = {});

double effective_loss(const OverlapState& s, const Episode& ep, const SimConfig& cfg);

EffectiveTrajectory simulate_effective(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg);

// Per-vector loss gradients through the N-dimensional recursion (O(rN) per
// step; full forward state is stored, no recomputation schedule).
struct ParamGradient {
    Eigen::VectorXd m, z;
    std::vector<Eigen::VectorXd> u, v;

    Eigen::VectorXd stacked() const;  // canonical order m, u_1..u_r, v_1..v_r, z
};

ParamGradient bptt_full(const ParameterVectors& pv, Activation act, const Episode& ep,
                        const SimConfig& cfg);

double full_loss(const ParameterVectors& pv, Activation act, const Episode& ep,
                 const SimConfig& cfg);

// Central differences, per coordinate; testing oracle.
Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& point, double eps);

}  // namespace lowrank
