#include "lowrank/effective_dynamics.hpp"

#include <cmath>

namespace lowrank {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

void check_grid(const Eigen::VectorXd& input, const SimConfig& cfg) {
    if (static_cast<std::size_t>(input.size()) != cfg.steps()) {
        throw std::invalid_argument("input length does not match simulation grid");
    }
}

void check_finite(const OverlapState& s) {
    if (!s.visible.allFinite() || !s.invisible.allFinite()) {
        throw std::invalid_argument("overlap state has non-finite entries");
    }
}

}  // namespace

Eigen::VectorXd impulse_input(const SimConfig& cfg) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cfg.steps());
    x(0) = 1.0 / cfg.dt;
    return x;
}

EffectiveTrajectory simulate_linear_r1(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg) {
    if (s.variant != Variant::LinearRank1) throw VariantMismatch("expected LinearRank1 state");
    check_finite(s);
    check_grid(input, cfg);

    const double zm = s.vis(r1::kZm), zu = s.vis(r1::kZu);
    const double vm = s.vis(r1::kVm), vu = s.vis(r1::kVu);
    const double dt = cfg.dt;
    const std::size_t K = cfg.steps();

    EffectiveTrajectory traj;
    traj.kappa.setZero(K, 2);
    traj.output.setZero(K);

    double km = 0.0, ku = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        traj.kappa(k, 0) = km;
        traj.kappa(k, 1) = ku;
        traj.output(k) = zm * km + zu * ku;
        const double km_next = km + dt * (-km + input(k));
        const double ku_next = ku + dt * (-ku + vm * km + vu * ku);
        km = km_next;
        ku = ku_next;
        if (!std::isfinite(km) || !std::isfinite(ku)) throw SimulationDiverged(k);
    }
    return traj;
}

double gain(double delta, double alpha) {
    if (delta < 0.0) throw std::domain_error("gain: delta must be nonnegative");
    if (alpha <= 0.0) throw std::domain_error("gain: alpha must be positive");
    return (2.0 * alpha / kSqrtPi) / std::sqrt(1.0 + 2.0 * alpha * alpha * delta);
}

double gain_ddelta(double delta, double alpha) {
    const double a = 2.0 * alpha * alpha;
    const double c = 2.0 * alpha / kSqrtPi;
    return -0.5 * c * a * std::pow(1.0 + a * delta, -1.5);
}

EffectiveTrajectory simulate_nonlinear_r1(const OverlapState& s, const Eigen::VectorXd& input,
                                          const SimConfig& cfg) {
    if (s.variant != Variant::NonlinearRank1) {
        throw VariantMismatch("expected NonlinearRank1 state");
    }
    check_finite(s);
    check_grid(input, cfg);

    const double zm = s.vis(nl1::kZm), zu = s.vis(nl1::kZu);
    const double vm = s.vis(nl1::kVm), vu = s.vis(nl1::kVu);
    const double mu = s.vis(nl1::kMu), mm = s.vis(nl1::kMm), uu = s.vis(nl1::kUu);
    const double dt = cfg.dt;
    const double alpha = cfg.activation_alpha;
    const std::size_t K = cfg.steps();

    EffectiveTrajectory traj;
    traj.kappa.setZero(K, 2);
    traj.output.setZero(K);
    traj.delta.setZero(K);

    double km = 0.0, ku = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double delta = mm * km * km + uu * ku * ku + 2.0 * mu * km * ku;
        if (delta < 0.0) {
            delta = 0.0;
            ++traj.delta_clamps;
        }
        const double g = gain(delta, alpha);
        traj.kappa(k, 0) = km;
        traj.kappa(k, 1) = ku;
        traj.delta(k) = delta;
        traj.output(k) = (zm * km + zu * ku) * g;
        const double km_next = km + dt * (-km + input(k));
        const double ku_next = ku + dt * (-ku + (vm * km + vu * ku) * g);
        km = km_next;
        ku = ku_next;
        if (!std::isfinite(km) || !std::isfinite(ku)) throw SimulationDiverged(k);
    }
    return traj;
}

EffectiveTrajectory simulate_linear_r2(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg) {
    if (s.variant != Variant::LinearRank2) throw VariantMismatch("expected LinearRank2 state");
    check_finite(s);
    check_grid(input, cfg);

    const double zm = s.vis(0);
    const double zu[2] = {s.vis(1), s.vis(2)};
    const double vm[2] = {s.vis(3), s.vis(4)};
    const double vu[2][2] = {{s.vis(5), s.vis(6)}, {s.vis(7), s.vis(8)}};
    const double dt = cfg.dt;
    const std::size_t K = cfg.steps();

    EffectiveTrajectory traj;
    traj.kappa.setZero(K, 3);
    traj.output.setZero(K);

    double km = 0.0, k1 = 0.0, k2 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        traj.kappa(k, 0) = km;
        traj.kappa(k, 1) = k1;
        traj.kappa(k, 2) = k2;
        traj.output(k) = zm * km + zu[0] * k1 + zu[1] * k2;
        const double km_next = km + dt * (-km + input(k));
        const double k1_next = k1 + dt * (-k1 + vm[0] * km + vu[0][0] * k1 + vu[0][1] * k2);
        const double k2_next = k2 + dt * (-k2 + vm[1] * km + vu[1][0] * k1 + vu[1][1] * k2);
        km = km_next;
        k1 = k1_next;
        k2 = k2_next;
        if (!std::isfinite(km) || !std::isfinite(k1) || !std::isfinite(k2)) {
            throw SimulationDiverged(k);
        }
    }
    return traj;
}

double impulse_kernel_r1(const OverlapState& s, double t) {
    if (s.variant != Variant::LinearRank1) throw VariantMismatch("expected LinearRank1 state");
    const double zm = s.vis(r1::kZm), zu = s.vis(r1::kZu);
    const double vm = s.vis(r1::kVm), vu = s.vis(r1::kVu);
    if (std::abs(vu) < 1e-8) {
        throw SingularOverlap("impulse kernel singular at sigma_vu ~ 0");
    }
    const double b = zu * vm / vu;
    return (zm - b) * std::exp(-t) + b * std::exp(-(1.0 - vu) * t);
}

}  // namespace lowrank
