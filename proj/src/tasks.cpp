#include "lowrank/tasks.hpp"

#include "lowrank/rng.hpp"

#include <cmath>

namespace lowrank {

namespace {

Eigen::VectorXd white_noise(std::size_t steps, Rng& rng) {
    Eigen::VectorXd x(steps);
    for (std::size_t k = 0; k < steps; ++k) x(k) = rng.normal();
    return x;
}

// Target of the one-pole filter, Euler-discretized on the episode grid:
// y' = -c* y + a* x.
Eigen::VectorXd filter_target(const Eigen::VectorXd& x, double a_star, double c_star, double dt) {
    Eigen::VectorXd y(x.size());
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        y(k) = s;
        s += dt * (-c_star * s + a_star * x(k));
    }
    return y;
}

// Damped-oscillator target: two-state system whose impulse response is
// e^{-c* t} cos(w* t), Euler-discretized on the grid.
Eigen::VectorXd oscillator_target(const Eigen::VectorXd& x, double c_star, double w_star,
                                  double dt) {
    Eigen::VectorXd y(x.size());
    double y1 = 0.0, y2 = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        y(k) = y1;
        const double y1n = y1 + dt * (-c_star * y1 - w_star * y2 + x(k));
        const double y2n = y2 + dt * (w_star * y1 - c_star * y2);
        y1 = y1n;
        y2 = y2n;
    }
    return y;
}

Episode make_filter(const FilterTaskSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    if (spec.c_star <= 0.0) throw std::invalid_argument("filter task: c_star must be positive");
    const std::size_t K = cfg.steps();
    Episode ep;
    if (spec.input_kind == InputKind::Impulse) {
        ep.input = impulse_input(cfg);
    } else {
        Rng rng(seed);
        ep.input = white_noise(K, rng);
    }
    ep.target = filter_target(ep.input, spec.a_star, spec.c_star, cfg.dt);
    ep.mask = Eigen::VectorXd::Ones(K);
    ep.loss = LossKind::IntegratedSquaredError;
    return ep;
}

Episode make_oscillator(const OscillatorTaskSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    if (spec.c_star <= 0.0 || spec.omega_star <= 0.0) {
        throw std::invalid_argument("oscillator task: c_star and omega_star must be positive");
    }
    const std::size_t K = cfg.steps();
    Episode ep;
    if (spec.input_kind == InputKind::Impulse) {
        ep.input = impulse_input(cfg);
    } else {
        Rng rng(seed);
        ep.input = white_noise(K, rng);
    }
    ep.target = oscillator_target(ep.input, spec.c_star, spec.omega_star, cfg.dt);
    ep.mask = Eigen::VectorXd::Ones(K);
    ep.loss = LossKind::IntegratedSquaredError;
    return ep;
}

Episode make_flipflop(const FlipFlopSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    if (spec.x_amp <= 0.0 || spec.y_amp <= 0.0) {
        throw std::invalid_argument("flip-flop: amplitudes must be positive");
    }
    if (spec.t_stim + spec.t_delay >= spec.isd_min) {
        throw std::invalid_argument("flip-flop: t_stim + t_delay must be below the minimum ISD");
    }
    const std::size_t K = cfg.steps();
    const double dt = cfg.dt;
    Episode ep;
    ep.input = Eigen::VectorXd::Zero(K);
    ep.target = Eigen::VectorXd::Zero(K);
    ep.mask = Eigen::VectorXd::Zero(K);
    ep.loss = LossKind::MaskedMse;

    Rng rng(seed);
    const double guard = std::max(spec.t_delay, spec.transient_mask);
    double onset = 0.5;
    while (onset + spec.t_stim < cfg.horizon) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double offset = onset + spec.t_stim;
        const double next_onset = onset + rng.uniform(spec.isd_min, spec.isd_max);
        for (std::size_t k = 0; k < K; ++k) {
            const double t = k * dt;
            if (t >= onset && t < offset) {
                ep.input(k) = sign * spec.x_amp;
            } else if (t >= offset + guard && t < next_onset) {
                ep.target(k) = sign * spec.y_amp;
                ep.mask(k) = 1.0;
            }
        }
        onset = next_onset;
    }
    return ep;
}

Episode make_decision(const DecisionSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    if (spec.noise_std < 0.0) throw std::invalid_argument("decision: noise_std must be >= 0");
    if (spec.coherences.empty()) throw std::invalid_argument("decision: empty coherence set");
    double mean = 0.0;
    for (double c : spec.coherences) mean += c;
    if (std::abs(mean) > 1e-12) {
        throw std::invalid_argument("decision: coherences must be symmetric about 0");
    }
    if (spec.t_stim + spec.t_delay >= cfg.horizon) {
        throw std::invalid_argument("decision: stimulus + delay exceed the horizon");
    }
    const std::size_t K = cfg.steps();
    const double dt = cfg.dt;
    Episode ep;
    ep.input = Eigen::VectorXd::Zero(K);
    ep.target = Eigen::VectorXd::Zero(K);
    ep.mask = Eigen::VectorXd::Zero(K);
    ep.loss = LossKind::MaskedMse;

    Rng rng(seed);
    const double c = spec.coherences[rng.integer(spec.coherences.size())];
    const double level = spec.y_amp * (c / spec.c_max);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = k * dt;
        if (t < spec.t_stim) {
            ep.input(k) = c + rng.normal(0.0, spec.noise_std);
        } else if (t >= spec.t_stim + spec.t_delay) {
            ep.target(k) = level;
            ep.mask(k) = 1.0;
        }
    }
    return ep;
}

OverlapState teacher_state(const TeacherSpec& spec) {
    if (spec.teacher_visible.size() != 7) {
        throw std::invalid_argument("teacher: expected 7 visible overlaps");
    }
    const double mm = spec.teacher_visible(nl1::kMm);
    const double uu = spec.teacher_visible(nl1::kUu);
    const double mu = spec.teacher_visible(nl1::kMu);
    if (mm < 0.0 || uu < 0.0 || mu * mu > mm * uu + 1e-12) {
        throw std::invalid_argument("teacher: overlaps are not PSD-completable");
    }
    // Invisible entries do not affect the teacher's output; placeholders keep
    // the state well formed.
    Eigen::VectorXd invis(3);
    invis << 0.0, 1.0, 1.0;
    return OverlapState(Variant::NonlinearRank1, spec.teacher_visible, invis);
}

Episode make_teacher(const TeacherSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    Episode ep;
    Rng rng(seed);
    ep.input = white_noise(cfg.steps(), rng);
    ep.target = teacher_target(spec, ep.input, cfg);
    ep.mask = Eigen::VectorXd::Ones(cfg.steps());
    ep.loss = LossKind::MaskedMse;
    return ep;
}

}  // namespace

Eigen::VectorXd teacher_target(const TeacherSpec& spec, const Eigen::VectorXd& input,
                               const SimConfig& cfg) {
    return simulate_nonlinear_r1(teacher_state(spec), input, cfg).output;
}

Episode generate_episode(const TaskSpec& spec, std::uint64_t seed, const SimConfig& cfg) {
    return std::visit(
        [&](const auto& s) -> Episode {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FilterTaskSpec>) return make_filter(s, seed, cfg);
            if constexpr (std::is_same_v<T, OscillatorTaskSpec>)
                return make_oscillator(s, seed, cfg);
            if constexpr (std::is_same_v<T, FlipFlopSpec>) return make_flipflop(s, seed, cfg);
            if constexpr (std::is_same_v<T, DecisionSpec>) return make_decision(s, seed, cfg);
            if constexpr (std::is_same_v<T, TeacherSpec>) return make_teacher(s, seed, cfg);
        },
        spec);
}

double episode_loss(const Episode& ep, const Eigen::VectorXd& output, double dt) {
    const Eigen::ArrayXd err = (output - ep.target).array() * ep.mask.array();
    const double sq = (err * err).sum();
    if (ep.loss == LossKind::IntegratedSquaredError) return sq * dt;
    const double m = ep.mask.sum();
    return m > 0.0 ? sq / m : 0.0;
}

Eigen::VectorXd loss_dout(const Episode& ep, const Eigen::VectorXd& output, double dt) {
    const double w = ep.loss == LossKind::IntegratedSquaredError
                         ? dt
                         : (ep.mask.sum() > 0.0 ? 1.0 / ep.mask.sum() : 0.0);
    return 2.0 * w * ((output - ep.target).array() * ep.mask.array()).matrix();
}

LossKind task_loss_kind(const TaskSpec& spec) {
    if (std::holds_alternative<FilterTaskSpec>(spec) ||
        std::holds_alternative<OscillatorTaskSpec>(spec)) {
        return LossKind::IntegratedSquaredError;
    }
    return LossKind::MaskedMse;
}

std::string task_name(const TaskSpec& spec) {
    if (std::holds_alternative<FilterTaskSpec>(spec)) return "filter";
    if (std::holds_alternative<OscillatorTaskSpec>(spec)) return "oscillator";
    if (std::holds_alternative<FlipFlopSpec>(spec)) return "flipflop";
    if (std::holds_alternative<DecisionSpec>(spec)) return "decision";
    return "teacher";
}

}  // namespace lowrank
