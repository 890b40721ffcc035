#include "lowrank/gradients.hpp"

#include <cmath>

namespace lowrank {

KernelCoefficients kernel_coefficients(const OverlapState& s) {
    if (s.variant != Variant::LinearRank1) throw VariantMismatch("expected LinearRank1 state");
    const double vu = s.vis(r1::kVu);
    if (std::abs(vu) < 1e-8) throw SingularOverlap("kernel coefficients singular at sigma_vu ~ 0");
    KernelCoefficients kc;
    kc.B = s.vis(r1::kZu) * s.vis(r1::kVm) / vu;
    kc.A = s.vis(r1::kZm) - kc.B;
    return kc;
}

namespace {

// Trapezoid weight on the episode grid.
inline double trapz_w(std::size_t k, std::size_t K, double dt) {
    return (k == 0 || k + 1 == K) ? 0.5 * dt : dt;
}

}  // namespace

GradientVector filter_grad_closed(const OverlapState& s, const FilterTaskSpec& task,
                                  const SimConfig& cfg) {
    const KernelCoefficients kc = kernel_coefficients(s);  // throws near the singularity
    const double zu = s.vis(r1::kZu), vm = s.vis(r1::kVm), vu = s.vis(r1::kVu);
    const std::size_t K = cfg.steps();
    const double dt = cfg.dt;

    // Exponentials advanced by recurrence; no per-step exp calls.
    const double f1 = std::exp(-dt);
    const double f2 = std::exp(-(1.0 - vu) * dt);
    const double ft = std::exp(-task.c_star * dt);
    double e1 = 1.0, e2 = 1.0, et = 1.0;

    Eigen::Vector4d grad = Eigen::Vector4d::Zero();
    for (std::size_t k = 0; k < K; ++k) {
        const double t = k * dt;
        const double yhat = kc.A * e1 + kc.B * e2;
        const double err = yhat - task.a_star * et;
        const double delta = e2 - e1;
        const double w = trapz_w(k, K, dt);
        grad(0) += w * err * e1;                                      // d/d sigma_zm
        grad(1) += w * err * (vm / vu) * delta;                       // d/d sigma_zu
        grad(2) += w * err * (zu / vu) * delta;                       // d/d sigma_vm
        grad(3) += w * err * kc.B * (-delta / vu + t * e2);           // d/d sigma_vu
        e1 *= f1;
        e2 *= f2;
        et *= ft;
    }
    return GradientVector(Variant::LinearRank1, 2.0 * grad);
}

double filter_loss_kernel(const OverlapState& s, const FilterTaskSpec& task,
                          const SimConfig& cfg) {
    const KernelCoefficients kc = kernel_coefficients(s);
    const double vu = s.vis(r1::kVu);
    const std::size_t K = cfg.steps();
    const double dt = cfg.dt;
    const double f1 = std::exp(-dt), f2 = std::exp(-(1.0 - vu) * dt),
                 ft = std::exp(-task.c_star * dt);
    double e1 = 1.0, e2 = 1.0, et = 1.0, loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double err = kc.A * e1 + kc.B * e2 - task.a_star * et;
        loss += trapz_w(k, K, dt) * err * err;
        e1 *= f1;
        e2 *= f2;
        et *= ft;
    }
    return loss;
}

EffectiveTrajectory simulate_effective(const OverlapState& s, const Eigen::VectorXd& input,
                                       const SimConfig& cfg) {
    switch (s.variant) {
        case Variant::LinearRank1: return simulate_linear_r1(s, input, cfg);
        case Variant::NonlinearRank1: return simulate_nonlinear_r1(s, input, cfg);
        case Variant::LinearRank2: return simulate_linear_r2(s, input, cfg);
    }
    throw std::logic_error("bad variant");
}

double effective_loss(const OverlapState& s, const Episode& ep, const SimConfig& cfg) {
    return episode_loss(ep, simulate_effective(s, ep.input, cfg).output, cfg.dt);
}

namespace {

GradientVector bptt_linear_r1(const OverlapState& s, const Episode& ep, const SimConfig& cfg) {
    const double zm = s.vis(r1::kZm), zu = s.vis(r1::kZu);
    const double vm = s.vis(r1::kVm), vu = s.vis(r1::kVu);
    const double dt = cfg.dt;
    const std::size_t K = cfg.steps();

    const EffectiveTrajectory traj = simulate_linear_r1(s, ep.input, cfg);
    const Eigen::VectorXd g = loss_dout(ep, traj.output, dt);

    Eigen::Vector4d grad = Eigen::Vector4d::Zero();
    double lm = 0.0, lu = 0.0;  // adjoints of kappa at step k+1
    for (std::size_t kk = K; kk-- > 0;) {
        const double km = traj.kappa(kk, 0), ku = traj.kappa(kk, 1);
        grad(0) += g(kk) * km;
        grad(1) += g(kk) * ku;
        grad(2) += dt * lu * km;
        grad(3) += dt * lu * ku;
        const double lm_k = g(kk) * zm + (1.0 - dt) * lm + dt * vm * lu;
        const double lu_k = g(kk) * zu + (1.0 - dt * (1.0 - vu)) * lu;
        lm = lm_k;
        lu = lu_k;
        if (!std::isfinite(lm) || !std::isfinite(lu)) throw SimulationDiverged(kk);
    }
    return GradientVector(Variant::LinearRank1, grad);
}

GradientVector bptt_nonlinear_r1(const OverlapState& s, const Episode& ep, const SimConfig& cfg,
                                 const BpttOptions& opts) {
    const double zm = s.vis(nl1::kZm), zu = s.vis(nl1::kZu);
    const double vm = s.vis(nl1::kVm), vu = s.vis(nl1::kVu);
    const double mu = s.vis(nl1::kMu), mm = s.vis(nl1::kMm), uu = s.vis(nl1::kUu);
    const double dt = cfg.dt;
    const double alpha = cfg.activation_alpha;
    const std::size_t K = cfg.steps();

    const EffectiveTrajectory traj = simulate_nonlinear_r1(s, ep.input, cfg);
    const Eigen::VectorXd g = loss_dout(ep, traj.output, dt);

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(7);
    double lm = 0.0, lu = 0.0;
    for (std::size_t kk = K; kk-- > 0;) {
        const double km = traj.kappa(kk, 0), ku = traj.kappa(kk, 1);
        const double delta = traj.delta(kk);
        // Raw delta < 0 was clamped in the forward pass; the clamp has zero
        // derivative, matching the subgradient of max(., 0).
        const double raw = mm * km * km + uu * ku * ku + 2.0 * mu * km * ku;
        const bool clamped = raw < 0.0;
        const double G = gain(delta, alpha);
        const double Gp = clamped ? 0.0 : gain_ddelta(delta, alpha);
        const double c_out = zm * km + zu * ku;
        const double r_rec = vm * km + vu * ku;

        grad(nl1::kZm) += g(kk) * km * G;
        grad(nl1::kZu) += g(kk) * ku * G;
        grad(nl1::kVm) += dt * lu * km * G;
        grad(nl1::kVu) += dt * lu * ku * G;

        // Total sensitivity to delta_k: output term plus recurrent term.
        const double ddelta = g(kk) * c_out * Gp + dt * lu * r_rec * Gp;
        if (!opts.zero_delta_pathway) {
            grad(nl1::kMu) += ddelta * 2.0 * km * ku;
            grad(nl1::kMm) += ddelta * km * km;
            grad(nl1::kUu) += ddelta * ku * ku;
        }

        const double ddelta_dkm = 2.0 * (mm * km + mu * ku);
        const double ddelta_dku = 2.0 * (uu * ku + mu * km);
        const double lm_k =
            g(kk) * zm * G + (1.0 - dt) * lm + dt * lu * vm * G + ddelta * ddelta_dkm;
        const double lu_k =
            g(kk) * zu * G + (1.0 - dt) * lu + dt * lu * vu * G + ddelta * ddelta_dku;
        lm = lm_k;
        lu = lu_k;
        if (!std::isfinite(lm) || !std::isfinite(lu)) throw SimulationDiverged(kk);
    }
    return GradientVector(Variant::NonlinearRank1, grad);
}

GradientVector bptt_linear_r2(const OverlapState& s, const Episode& ep, const SimConfig& cfg) {
    const double zm = s.vis(0);
    const double zu[2] = {s.vis(1), s.vis(2)};
    const double vm[2] = {s.vis(3), s.vis(4)};
    const double vu[2][2] = {{s.vis(5), s.vis(6)}, {s.vis(7), s.vis(8)}};
    const double dt = cfg.dt;
    const std::size_t K = cfg.steps();

    const EffectiveTrajectory traj = simulate_linear_r2(s, ep.input, cfg);
    const Eigen::VectorXd g = loss_dout(ep, traj.output, dt);

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(9);
    double lm = 0.0;
    double lui[2] = {0.0, 0.0};
    for (std::size_t kk = K; kk-- > 0;) {
        const double km = traj.kappa(kk, 0);
        const double ki[2] = {traj.kappa(kk, 1), traj.kappa(kk, 2)};
        grad(0) += g(kk) * km;
        for (int i = 0; i < 2; ++i) {
            grad(1 + i) += g(kk) * ki[i];
            grad(3 + i) += dt * lui[i] * km;
            for (int j = 0; j < 2; ++j) grad(5 + 2 * i + j) += dt * lui[i] * ki[j];
        }
        const double lm_k = g(kk) * zm + (1.0 - dt) * lm + dt * (vm[0] * lui[0] + vm[1] * lui[1]);
        double lnew[2];
        for (int i = 0; i < 2; ++i) {
            lnew[i] = g(kk) * zu[i] + (1.0 - dt) * lui[i] +
                      dt * (vu[0][i] * lui[0] + vu[1][i] * lui[1]);
        }
        lm = lm_k;
        lui[0] = lnew[0];
        lui[1] = lnew[1];
        if (!std::isfinite(lm) || !std::isfinite(lui[0]) || !std::isfinite(lui[1])) {
            throw SimulationDiverged(kk);
        }
    }
    return GradientVector(Variant::LinearRank2, grad);
}

}  // namespace

GradientVector bptt_effective(const OverlapState& s, const Episode& ep, const SimConfig& cfg,
                              const BpttOptions& opts) {
    switch (s.variant) {
        case Variant::LinearRank1: return bptt_linear_r1(s, ep, cfg);
        case Variant::NonlinearRank1: return bptt_nonlinear_r1(s, ep, cfg, opts);
        case Variant::LinearRank2: return bptt_linear_r2(s, ep, cfg);
    }
    throw std::logic_error("bad variant");
}

Eigen::VectorXd ParamGradient::stacked() const {
    const int rank = static_cast<int>(u.size());
    const Eigen::Index n = m.size();
    Eigen::VectorXd out((2 * rank + 2) * n);
    out.segment(0, n) = m;
    for (int j = 0; j < rank; ++j) out.segment((1 + j) * n, n) = u[j];
    for (int j = 0; j < rank; ++j) out.segment((1 + rank + j) * n, n) = v[j];
    out.segment((2 * rank + 1) * n, n) = z;
    return out;
}

ParamGradient bptt_full(const ParameterVectors& pv, Activation act, const Episode& ep,
                        const SimConfig& cfg) {
    const int n = pv.n;
    const int rank = pv.rank;
    const double dt = cfg.dt;
    const double alpha = cfg.activation_alpha;
    const double inv_n = 1.0 / n;
    const std::size_t K = cfg.steps();

    const FullTrajectory traj = simulate(pv, act, ep.input, cfg, /*store_every=*/1);
    const Eigen::VectorXd g = loss_dout(ep, traj.output, dt);

    ParamGradient pg;
    pg.m.setZero(n);
    pg.z.setZero(n);
    pg.u.assign(rank, Eigen::VectorXd::Zero(n));
    pg.v.assign(rank, Eigen::VectorXd::Zero(n));

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd phi(n), dphi(n);
    constexpr double kTwoOverSqrtPi = 1.1283791670955125739;
    for (std::size_t kk = K; kk-- > 0;) {
        const Eigen::VectorXd h = traj.h.row(kk).transpose();
        if (act == Activation::Identity) {
            phi = h;
        } else {
            phi = (alpha * h.array()).unaryExpr([](double x) { return std::erf(x); }).matrix();
            dphi = ((alpha * kTwoOverSqrtPi) *
                    (-(alpha * h.array()).square()).exp()).matrix();
        }
        // Transition k -> k+1 uses lambda_{k+1}.
        pg.m += (dt * ep.input(kk)) * lambda;
        for (int j = 0; j < rank; ++j) {
            const double s_j = inv_n * pv.v[j].dot(phi);
            const double ul = pv.u[j].dot(lambda);
            pg.u[j] += (dt * s_j) * lambda;
            pg.v[j] += (dt * inv_n * ul) * phi;
        }
        pg.z += (g(kk) * inv_n) * phi;

        // lambda_k
        Eigen::VectorXd back = (g(kk) * inv_n) * pv.z;
        for (int j = 0; j < rank; ++j) back += (dt * inv_n * pv.u[j].dot(lambda)) * pv.v[j];
        if (act == Activation::Identity) {
            lambda = (1.0 - dt) * lambda + back;
        } else {
            lambda = (1.0 - dt) * lambda + (back.array() * dphi.array()).matrix();
        }
        if (!lambda.allFinite()) throw SimulationDiverged(kk);
    }
    return pg;
}

double full_loss(const ParameterVectors& pv, Activation act, const Episode& ep,
                 const SimConfig& cfg) {
    return episode_loss(ep, simulate(pv, act, ep.input, cfg).output, cfg.dt);
}

Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& point, double eps) {
    Eigen::VectorXd grad(point.size());
    Eigen::VectorXd x = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        x(i) = point(i) + eps;
        const double fp = f(x);
        x(i) = point(i) - eps;
        const double fm = f(x);
        x(i) = point(i);
        grad(i) = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace lowrank
