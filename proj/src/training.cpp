#include "lowrank/training.hpp"

#include "lowrank/invariants.hpp"
#include "lowrank/rng.hpp"

#include <cmath>
#include <future>

namespace lowrank {

void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, Eigen::VectorXd& m1,
               Eigen::VectorXd& m2, long t, double eta, const AdamParams& p) {
    m1 = p.beta1 * m1 + (1.0 - p.beta1) * grad;
    m2 = p.beta2 * m2 + (1.0 - p.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    x -= (eta * (m1 / c1).array() / ((m2 / c2).array().sqrt() + p.eps)).matrix();
}

void TrainConfig::validate() const {
    if (eta <= 0.0) throw std::invalid_argument("train: eta must be positive");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (gram_scale_n <= 0.0) throw std::invalid_argument("train: gram_scale_n must be positive");
    if (space != Space::Parameter && optimizer == OptimizerKind::Adam) {
        throw std::invalid_argument(
            "train: Adam is defined for parameter space only; overlap-space "
            "dynamics are specific to gradient flow");
    }
}

const Checkpoint& TrainTrace::checkpoint(const std::string& tag) const {
    for (const auto& c : checkpoints) {
        if (c.tag == tag) return c;
    }
    throw std::out_of_range("no checkpoint tagged " + tag);
}

std::vector<Episode> epoch_episodes(const TaskSpec& task, int phase_idx, int epoch,
                                    const TrainConfig& cfg, double label_noise_std) {
    std::vector<Episode> eps;
    eps.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
        const std::uint64_t s = derive_seed(
            cfg.seed, {static_cast<std::uint64_t>(phase_idx), static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(b)});
        Episode ep = generate_episode(task, s, cfg.sim);
        if (label_noise_std > 0.0) {
            Rng noise(derive_seed(cfg.seed, {static_cast<std::uint64_t>(phase_idx),
                                             static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(b), 0x6e6f6973ull}));
            for (Eigen::Index k = 0; k < ep.target.size(); ++k) {
                ep.target(k) += noise.normal(0.0, label_noise_std);
            }
        }
        eps.push_back(std::move(ep));
    }
    return eps;
}

namespace {

struct OverlapEval {
    double loss = 0.0;
    GradientVector grad;
    int clamps = 0;
};

OverlapEval eval_overlap_batch(const OverlapState& s, const std::vector<Episode>& eps,
                               const TrainConfig& cfg) {
    const auto eval_one = [&](const Episode& ep) {
        OverlapEval r;
        const EffectiveTrajectory traj = simulate_effective(s, ep.input, cfg.sim);
        r.loss = episode_loss(ep, traj.output, cfg.sim.dt);
        r.clamps = traj.delta_clamps;
        r.grad = bptt_effective(s, ep, cfg.sim);
        return r;
    };

    std::vector<OverlapEval> results(eps.size());
    if (cfg.jobs > 1 && eps.size() > 1) {
        std::vector<std::future<OverlapEval>> futs;
        futs.reserve(eps.size());
        for (const auto& ep : eps) {
            futs.push_back(std::async(std::launch::async, eval_one, std::cref(ep)));
        }
        for (std::size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < eps.size(); ++i) results[i] = eval_one(eps[i]);
    }

    OverlapEval sum;
    sum.grad = GradientVector(s.variant, Eigen::VectorXd::Zero(results[0].grad.values.size()));
    for (const auto& r : results) {  // fixed-index-order reduction
        sum.loss += r.loss;
        sum.clamps += r.clamps;
        sum.grad.values += r.grad.values;
    }
    sum.loss /= static_cast<double>(results.size());
    sum.grad.values /= static_cast<double>(results.size());
    return sum;
}

struct ParamEval {
    double loss = 0.0;
    ParamGradient grad;
};

ParamEval eval_param_batch(const ParameterVectors& pv, const std::vector<Episode>& eps,
                           const TrainConfig& cfg) {
    const Activation act = cfg.activation();
    const auto eval_one = [&](const Episode& ep) {
        ParamEval r;
        r.grad = bptt_full(pv, act, ep, cfg.sim);
        r.loss = full_loss(pv, act, ep, cfg.sim);
        return r;
    };

    std::vector<ParamEval> results(eps.size());
    if (cfg.jobs > 1 && eps.size() > 1) {
        std::vector<std::future<ParamEval>> futs;
        futs.reserve(eps.size());
        for (const auto& ep : eps) {
            futs.push_back(std::async(std::launch::async, eval_one, std::cref(ep)));
        }
        for (std::size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < eps.size(); ++i) results[i] = eval_one(eps[i]);
    }

    ParamEval sum;
    sum.grad.m.setZero(pv.n);
    sum.grad.z.setZero(pv.n);
    sum.grad.u.assign(pv.rank, Eigen::VectorXd::Zero(pv.n));
    sum.grad.v.assign(pv.rank, Eigen::VectorXd::Zero(pv.n));
    for (const auto& r : results) {
        sum.loss += r.loss;
        sum.grad.m += r.grad.m;
        sum.grad.z += r.grad.z;
        for (int j = 0; j < pv.rank; ++j) {
            sum.grad.u[j] += r.grad.u[j];
            sum.grad.v[j] += r.grad.v[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(results.size());
    sum.loss *= inv;
    sum.grad.m *= inv;
    sum.grad.z *= inv;
    for (int j = 0; j < pv.rank; ++j) {
        sum.grad.u[j] *= inv;
        sum.grad.v[j] *= inv;
    }
    return sum;
}

struct AdamMoments {
    Eigen::VectorXd m1, m2;
    long t = 0;
};

}  // namespace

TrainTrace train(const InitState& init, const ProtocolSpec& protocol, const TrainConfig& cfg) {
    cfg.validate();
    TrainTrace trace;

    const bool param_space = cfg.space == Space::Parameter;
    ParameterVectors pv;
    OverlapState state;
    if (param_space) {
        if (!std::holds_alternative<ParameterVectors>(init)) {
            throw std::invalid_argument("parameter-space training needs ParameterVectors init");
        }
        pv = std::get<ParameterVectors>(init);
        state = extract_overlaps(pv, cfg.variant);
    } else if (std::holds_alternative<OverlapState>(init)) {
        state = std::get<OverlapState>(init);
        if (state.variant != cfg.variant) throw VariantMismatch("init variant mismatch");
    } else {
        state = extract_overlaps(std::get<ParameterVectors>(init), cfg.variant);
    }

    AdamMoments adam;
    if (param_space && cfg.optimizer == OptimizerKind::Adam) {
        const Eigen::Index dim = static_cast<Eigen::Index>(pv.num_vectors()) * pv.n;
        adam.m1.setZero(dim);
        adam.m2.setZero(dim);
    }
    // Parameter-space factor matching the gram_scale_n convention (see header).
    const double grad_scale = param_space ? static_cast<double>(pv.n) / cfg.gram_scale_n : 1.0;
    const bool rank1 = cfg.variant != Variant::LinearRank2;

    trace.checkpoints.push_back(
        Checkpoint{"initial", 0, state,
                   param_space ? std::optional<ParameterVectors>(pv) : std::nullopt});

    int epoch_global = 0;
    for (std::size_t phase_idx = 0; phase_idx < protocol.phases.size(); ++phase_idx) {
        const Phase& phase = protocol.phases[phase_idx];
        const std::string label =
            phase.label.empty() ? task_name(phase.task) + std::to_string(phase_idx) : phase.label;
        double eta = phase.eta.value_or(cfg.eta);
        const double noise_std = phase.label_noise_std.value_or(cfg.label_noise_std);
        const bool lr_decay = phase.lr_decay.value_or(cfg.lr_decay);
        double prev_loss = std::numeric_limits<double>::infinity();

        for (int e = 0; e < phase.epochs; ++e, ++epoch_global) {
            const std::vector<Episode> eps =
                epoch_episodes(phase.task, static_cast<int>(phase_idx), e, cfg, noise_std);

            double loss = 0.0;
            int clamps = 0;
            GradientVector ograd;
            ParamEval peval;
            try {
                if (param_space) {
                    peval = eval_param_batch(pv, eps, cfg);
                    loss = peval.loss;
                } else {
                    OverlapEval oeval = eval_overlap_batch(state, eps, cfg);
                    loss = oeval.loss;
                    clamps = oeval.clamps;
                    ograd = std::move(oeval.grad);
                }
            } catch (const SimulationDiverged& e) {
                trace.diverged = true;
                trace.diagnostic = "divergence at epoch " + std::to_string(epoch_global) + ": " +
                                   e.what();
                return trace;
            }

            if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
                trace.diverged = true;
                trace.diagnostic = "divergence at epoch " + std::to_string(epoch_global) +
                                   " (loss " + std::to_string(loss) + ")";
                return trace;
            }

            if (lr_decay && loss < cfg.lr_threshold && prev_loss >= cfg.lr_threshold) {
                eta *= cfg.lr_decay_factor;
            }
            prev_loss = loss;

            const bool last_of_phase = e + 1 == phase.epochs;
            if (e % cfg.log_every == 0 || last_of_phase) {
                EpochRecord rec;
                rec.epoch = epoch_global;
                rec.phase = label;
                rec.loss = loss;
                rec.eta = eta;
                rec.visible = state.visible;
                rec.invisible = state.invisible;
                rec.delta_clamps = clamps;
                if (rank1) {
                    rec.has_invariants = true;
                    rec.c = invariant_traces(state);
                    if (param_space) {
                        rec.k_entries.reserve(cfg.k_samples.size());
                        for (const auto& [i, j] : cfg.k_samples) {
                            rec.k_entries.push_back(k_entry(pv, i, j));
                        }
                    }
                }
                if (param_space && cfg.qq_every > 0 &&
                    (e % cfg.qq_every == 0 || last_of_phase)) {
                    rec.qq_r = gaussianity_qq(pv);
                }
                trace.records.push_back(std::move(rec));
            }
            if (!psd_ok(state)) ++trace.psd_warnings;

            // Update (one GD epoch == one Euler step of the overlap flow).
            if (param_space) {
                if (cfg.optimizer == OptimizerKind::Adam) {
                    Eigen::VectorXd theta(adam.m1.size());
                    const Eigen::Index n = pv.n;
                    for (int id = 0; id < pv.num_vectors(); ++id) {
                        theta.segment(id * n, n) = pv.vec(id);
                    }
                    adam_step(theta, grad_scale * peval.grad.stacked(), adam.m1, adam.m2,
                              ++adam.t, eta, cfg.adam);
                    for (int id = 0; id < pv.num_vectors(); ++id) {
                        pv.vec(id) = theta.segment(id * n, n);
                    }
                } else {
                    const double step = eta * grad_scale;
                    pv.m -= step * peval.grad.m;
                    pv.z -= step * peval.grad.z;
                    for (int j = 0; j < pv.rank; ++j) {
                        pv.u[j] -= step * peval.grad.u[j];
                        pv.v[j] -= step * peval.grad.v[j];
                    }
                }
                state = extract_overlaps(pv, cfg.variant);
            } else if (cfg.space == Space::Overlap) {
                const OverlapRates rates = flow_rhs(state, ograd, cfg.gram_scale_n);
                state.visible += eta * rates.visible;
                state.invisible += eta * rates.invisible;
            } else {  // OverlapNaive: plain descent on the visible set
                state.visible -= eta * ograd.values;
            }

            if (cfg.ckpt_every > 0 && (epoch_global + 1) % cfg.ckpt_every == 0) {
                Checkpoint c{"epoch" + std::to_string(epoch_global + 1), epoch_global + 1, state,
                             param_space ? std::optional<ParameterVectors>(pv) : std::nullopt};
                trace.checkpoints.push_back(std::move(c));
            }
        }

        Checkpoint c{label, epoch_global, state,
                     param_space ? std::optional<ParameterVectors>(pv) : std::nullopt};
        trace.checkpoints.push_back(std::move(c));
    }
    return trace;
}

std::pair<TrainTrace, TrainTrace> train_twins(const InitState& init, Phase phaseA, Phase phaseB,
                                              const Phase& phaseC, const TrainConfig& cfg) {
    if (phaseA.label.empty()) phaseA.label = "phase_ab";
    if (phaseB.label.empty()) phaseB.label = "phase_ab";
    ProtocolSpec p1{{phaseA, phaseC}};
    ProtocolSpec p2{{phaseB, phaseC}};
    TrainTrace t1 = train(init, p1, cfg);
    TrainTrace t2 = train(init, p2, cfg);
    return {std::move(t1), std::move(t2)};
}

}  // namespace lowrank
