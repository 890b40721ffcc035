#pragma once

#include "lowrank/overlaps.hpp"

#include <cstddef>
#include <stdexcept>

namespace lowrank {

struct SimConfig {
    double dt = 0.025;
    double horizon = 20.0;                          // seconds
    double activation_alpha = 0.88622692545275801;  // sqrt(pi)/2: unit slope at origin

    // Number of grid points t_k = k*dt, k = 0..steps-1. Guards against the
    // horizon/dt division landing epsilon above an integer.
    std::size_t steps() const {
        if (dt <= 0.0 || horizon < dt) throw std::invalid_argument("bad sim grid");
        const double q = horizon / dt;
        const double r = std::floor(q + 1e-9);
        return static_cast<std::size_t>(q - r > 1e-9 ? r + 1 : r);
    }
};

struct EffectiveTrajectory {
    Eigen::MatrixXd kappa;   // steps x (2 or 3)
    Eigen::VectorXd output;  // steps
    Eigen::VectorXd delta;   // steps; empty for linear variants
    int delta_clamps = 0;
};

struct SimulationDiverged : std::runtime_error {
    std::size_t step;
    explicit SimulationDiverged(std::size_t k)
        : std::runtime_error("non-finite state at step " + std::to_string(k)), step(k) {}
};

struct SingularOverlap : std::domain_error {
    using std::domain_error::domain_error;
};

// Forward Euler of the exact 2-D reduction of the linear rank-1 network.
EffectiveTrajectory simulate_linear_r1(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg);

// Mean-field gain <phi'> for phi = erf(alpha * .) under a centered Gaussian of
// variance delta: (2 alpha / sqrt(pi)) / sqrt(1 + 2 alpha^2 delta), which is
// (1 + (pi/2) delta)^{-1/2} at the default alpha. Throws on delta < 0.
double gain(double delta, double alpha);
double gain_ddelta(double delta, double alpha);  // d gain / d delta

// Forward Euler of the 2-D Gaussian mean-field reduction (erf activation).
// delta(t) is clamped at zero when PSD drift makes it marginally negative.
EffectiveTrajectory simulate_nonlinear_r1(const OverlapState& s, const Eigen::VectorXd& input,
                                          const SimConfig& cfg);

// Forward Euler of the 3-D reduction of the linear rank-2 network.
EffectiveTrajectory simulate_linear_r2(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg);

// Closed-form impulse response of the linear rank-1 reduction,
//   (s_zm - s_zu s_vm / s_vu) e^{-t} + (s_zu s_vm / s_vu) e^{-(1-s_vu) t}.
// Throws SingularOverlap when |s_vu| < 1e-8 (callers fall back to the
// adjoint gradient path).
double impulse_kernel_r1(const OverlapState& s, double t);

// Impulse input on the grid: x at the first point equals 1/dt so the discrete
// time-integral of x is one.
Eigen::VectorXd impulse_input(const SimConfig& cfg);

}  // namespace lowrank
