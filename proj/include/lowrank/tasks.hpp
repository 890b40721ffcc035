#pragma once

#include "lowrank/effective_dynamics.hpp"
#include "lowrank/overlaps.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace lowrank {

enum class LossKind {
    IntegratedSquaredError,  // sum_k mask_k (y_k - y*_k)^2 dt
    MaskedMse                // sum_k mask_k (y_k - y*_k)^2 / sum_k mask_k
};

enum class InputKind { Impulse, WhiteNoise };

// First-order exponential filter target, y* = a* e^{-c* t} * x.
struct FilterTaskSpec {
    double a_star = 1.0;
    double c_star = 0.2;
    InputKind input_kind = InputKind::Impulse;
};

// Damped-oscillator target, y* = e^{-c* t} cos(w* t) * x (rank-2 task).
struct OscillatorTaskSpec {
    double c_star = 0.3;
    double omega_star = 2.0;
    InputKind input_kind = InputKind::Impulse;
};

// 1-bit flip-flop: signed pulses set a persistent target of +-y_amp during
// decision periods; the loss mask is off during pulses and transients.
struct FlipFlopSpec {
    double x_amp = 1.0;
    double y_amp = 0.5;
    double t_stim = 0.2;
    double t_delay = 0.5;
    double isd_min = 2.0;  // inter-stimulus delay range, drawn uniformly
    double isd_max = 5.0;
    double transient_mask = 0.3;
};

// Noisy evidence integration: x = c + noise during the stimulus, target
// y_amp * c / c_max during the response period.
struct DecisionSpec {
    std::vector<double> coherences = {-16.0, -8.0, -2.0, 2.0, 8.0, 16.0};
    double noise_std = 0.05;
    double y_amp = 1.0;
    double c_max = 16.0;
    double t_stim = 8.0;
    double t_delay = 1.0;
};

// Teacher-student: reproduce a fixed nonlinear rank-1 teacher (given by its
// visible overlaps) on white-noise input.
struct TeacherSpec {
    Eigen::VectorXd teacher_visible;  // 7 entries, NonlinearRank1 ordering
};

using TaskSpec =
    std::variant<FilterTaskSpec, OscillatorTaskSpec, FlipFlopSpec, DecisionSpec, TeacherSpec>;

struct Episode {
    Eigen::VectorXd input;
    Eigen::VectorXd target;
    Eigen::VectorXd mask;  // 0/1 per grid point
    LossKind loss = LossKind::IntegratedSquaredError;
};

// Deterministic given (spec, seed). Masks are exact {0,1} series; white-noise
// inputs are i.i.d. N(0,1) per grid step. Filter/oscillator targets are
// produced by Euler-discretizing the target system on the same grid, so the
// exact-solution overlaps reach zero loss.
Episode generate_episode(const TaskSpec& spec, std::uint64_t seed, const SimConfig& cfg);

// Runs the teacher effective model on `input`; throws if the teacher's
// (m, u) overlap block is not PSD (unrealizable).
Eigen::VectorXd teacher_target(const TeacherSpec& spec, const Eigen::VectorXd& input,
                               const SimConfig& cfg);

double episode_loss(const Episode& ep, const Eigen::VectorXd& output, double dt);

// d loss / d output at each grid point (shared by all gradient paths).
Eigen::VectorXd loss_dout(const Episode& ep, const Eigen::VectorXd& output, double dt);

LossKind task_loss_kind(const TaskSpec& spec);
std::string task_name(const TaskSpec& spec);

}  // namespace lowrank
