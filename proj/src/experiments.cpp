#include "lowrank/experiments.hpp"

#include "lowrank/analysis.hpp"
#include "lowrank/invariants.hpp"
#include "lowrank/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>

namespace lowrank {

namespace fs = std::filesystem;
using io::json;

namespace {

double rel_dev(double a, double b) {
    const double m = std::max(std::abs(a), std::abs(b));
    return m > 0.0 ? std::abs(a - b) / m : 0.0;
}

// Max per-epoch relative loss deviation between two traces.
double max_loss_dev(const TrainTrace& a, const TrainTrace& b) {
    double dev = 0.0;
    const std::size_t n = std::min(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < n; ++i) {
        dev = std::max(dev, rel_dev(a.records[i].loss, b.records[i].loss));
    }
    return dev;
}

struct Ctx {
    std::string id;
    std::uint64_t seed = 1;
    json params;
    fs::path out;
    json metrics = json::object();
    std::vector<std::string> files;

    void add_file(const std::string& name) { files.push_back(name); }

    void write_trace(const std::string& name, const TrainTrace& trace, Variant v) {
        io::write_trace_jsonl(out / (name + ".jsonl"), trace, v);
        io::write_trace_csv(out / (name + ".csv"), trace, v);
        add_file(name + ".jsonl");
        add_file(name + ".csv");
    }
};

double pnum(const Ctx& ctx, const std::string& key) { return ctx.params.at(key).get<double>(); }
int pint(const Ctx& ctx, const std::string& key) { return ctx.params.at(key).get<int>(); }

SimConfig psim(const Ctx& ctx) {
    SimConfig sim;
    sim.dt = pnum(ctx, "dt");
    sim.horizon = pnum(ctx, "horizon");
    return sim;
}

TrainConfig ptrain(const Ctx& ctx, Variant variant, Space space) {
    TrainConfig cfg;
    cfg.variant = variant;
    cfg.space = space;
    cfg.eta = pnum(ctx, "eta");
    cfg.batch_size = ctx.params.value("batch_size", 1);
    cfg.gram_scale_n = ctx.params.value("gram_scale_n", 1.0);
    cfg.seed = ctx.seed;
    cfg.jobs = ctx.params.value("jobs", 1);
    cfg.sim = psim(ctx);
    return cfg;
}

void write_loss_summary(Ctx& ctx, const std::vector<std::pair<std::string, const TrainTrace*>>& traces) {
    std::string csv = "epoch";
    for (const auto& [name, t] : traces) csv += ",loss_" + name;
    csv += "\n";
    std::size_t rows = 0;
    for (const auto& [name, t] : traces) rows = std::max(rows, t->records.size());
    for (std::size_t i = 0; i < rows; ++i) {
        csv += std::to_string(i);
        for (const auto& [name, t] : traces) {
            csv += ",";
            if (i < t->records.size()) csv += io::format_double(t->records[i].loss);
        }
        csv += "\n";
    }
    io::write_text(ctx.out / "summary.csv", csv);
    ctx.add_file("summary.csv");
}

// ---------------------------------------------------------------- fig1c/fig5

const json kFilterDefaults = {
    {"n", 500},       {"eta", 5e-3},          {"epochs", 1000}, {"a_star", 1.0},
    {"c_star", 0.2},  {"dt", 0.025},          {"horizon", 20.0}, {"gram_scale_n", 1.0},
    {"batch_size", 1}, {"jobs", 1},
};

void run_filter_compare(Ctx& ctx) {
    const FilterTaskSpec task{pnum(ctx, "a_star"), pnum(ctx, "c_star"), InputKind::Impulse};
    const int epochs = pint(ctx, "epochs");
    const int n = pint(ctx, "n");
    const ProtocolSpec protocol{{Phase{task, epochs, "A"}}};

    const ParameterVectors pv = sample_iid_normal(n, 1, derive_seed(ctx.seed, {0x1417}));
    const OverlapState sigma0 = extract_overlaps(pv, Variant::LinearRank1);

    TrainConfig cfg = ptrain(ctx, Variant::LinearRank1, Space::Parameter);
    const TrainTrace tp = train(pv, protocol, cfg);
    cfg.space = Space::Overlap;
    const TrainTrace to = train(sigma0, protocol, cfg);
    cfg.space = Space::OverlapNaive;
    const TrainTrace tn = train(sigma0, protocol, cfg);

    ctx.write_trace("trace_parameter", tp, Variant::LinearRank1);
    ctx.write_trace("trace_overlap", to, Variant::LinearRank1);
    ctx.write_trace("trace_naive", tn, Variant::LinearRank1);
    write_loss_summary(ctx, {{"parameter", &tp}, {"overlap", &to}, {"naive", &tn}});

    const EpochRecord& last = tp.records.back();
    const double zm = last.visible(r1::kZm), zu = last.visible(r1::kZu);
    const double vm = last.visible(r1::kVm), vu = last.visible(r1::kVu);
    const double a_star = pnum(ctx, "a_star"), c_star = pnum(ctx, "c_star");

    ctx.metrics["diverged"] = tp.diverged || to.diverged || tn.diverged;
    ctx.metrics["max_rel_dev_overlap"] = max_loss_dev(tp, to);
    ctx.metrics["max_rel_dev_naive"] = max_loss_dev(tp, tn);
    ctx.metrics["final_loss_parameter"] = last.loss;
    ctx.metrics["final_loss_overlap"] = to.records.back().loss;
    ctx.metrics["res_sigma_vu"] = std::abs(vu - (1.0 - c_star));
    ctx.metrics["res_sigma_zm"] = std::abs(zm - a_star);
    ctx.metrics["res_product"] = std::abs(zu * vm - a_star * (1.0 - c_star));

    if (ctx.id == "fig5_filter") {
        // Learned impulse response against the target filter.
        const OverlapState fin(Variant::LinearRank1, last.visible, last.invisible);
        const SimConfig sim = psim(ctx);
        std::string csv = "t,target,learned\n";
        for (std::size_t k = 0; k < sim.steps(); ++k) {
            const double t = k * sim.dt;
            csv += io::format_double(t) + "," +
                   io::format_double(a_star * std::exp(-c_star * t)) + "," +
                   io::format_double(impulse_kernel_r1(fin, t)) + "\n";
        }
        io::write_text(ctx.out / "impulse_response.csv", csv);
        ctx.add_file("impulse_response.csv");

        // Final overlaps: simulation vs the overlap-ODE prediction.
        const auto& info = variant_info(Variant::LinearRank1);
        std::string tbl = "overlap,simulated,predicted\n";
        const EpochRecord& lo = to.records.back();
        for (std::size_t i = 0; i < info.visible_names.size(); ++i) {
            tbl += info.visible_names[i] + "," + io::format_double(last.visible(i)) + "," +
                   io::format_double(lo.visible(i)) + "\n";
        }
        for (std::size_t i = 0; i < info.invisible_names.size(); ++i) {
            tbl += info.invisible_names[i] + "," + io::format_double(last.invisible(i)) + "," +
                   io::format_double(lo.invisible(i)) + "\n";
        }
        io::write_text(ctx.out / "final_overlaps.csv", tbl);
        ctx.add_file("final_overlaps.csv");
    }
}

std::vector<CheckResult> check_filter_compare(const json& m) {
    std::vector<CheckResult> out;
    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        out.push_back({name, pass, detail});
    };
    add("no_divergence", !m.at("diverged").get<bool>(), "");
    add("overlap_ode_overlay_1e-2", m.at("max_rel_dev_overlap").get<double>() < 1e-2,
        "max rel dev " + io::format_double(m.at("max_rel_dev_overlap").get<double>()));
    add("naive_deviates_10pct", m.at("max_rel_dev_naive").get<double>() > 0.10,
        "max rel dev " + io::format_double(m.at("max_rel_dev_naive").get<double>()));
    add("final_loss_1e-3", m.at("final_loss_parameter").get<double>() < 1e-3,
        "loss " + io::format_double(m.at("final_loss_parameter").get<double>()));
    const bool a24 = m.at("res_sigma_vu").get<double>() < 1e-2 &&
                     m.at("res_sigma_zm").get<double>() < 1e-2 &&
                     m.at("res_product").get<double>() < 1e-2;
    add("converges_to_exact_solution", a24,
        "residuals vu " + io::format_double(m.at("res_sigma_vu").get<double>()) + ", zm " +
            io::format_double(m.at("res_sigma_zm").get<double>()) + ", product " +
            io::format_double(m.at("res_product").get<double>()));
    return out;
}

// ------------------------------------------------------------ fig2 degeneracy

const json kDegeneracyDefaults = {
    {"n", 500},   {"eta", 5e-3},     {"epochs", 400},      {"dt", 0.025},
    {"horizon", 20.0}, {"gram_scale_n", 1.0}, {"batch_size", 1}, {"jobs", 1},
};

Eigen::MatrixXd degeneracy_target(bool second) {
    // Equal visible block (zm, zu, vm, vu, zv shared); sigma_mu and |u|^2 differ.
    Eigen::MatrixXd t(4, 4);
    const double zm = 0.3, zu = 0.4, vm = 0.5, vu = 0.2, zv = 0.1;
    const double mu = second ? -0.3 : 0.5;
    const double uu = second ? 1.0 : 2.0;
    t << 1.0, mu, vm, zm,
         mu, uu, vu, zu,
         vm, vu, 1.2, zv,
         zm, zu, zv, 1.5;
    return t;
}

void run_degeneracy(Ctx& ctx) {
    TrainConfig cfg = ptrain(ctx, Variant::LinearRank1, Space::Parameter);
    const int epochs = pint(ctx, "epochs");
    const FilterTaskSpec task;

    const DegeneracyReport rep =
        degeneracy_probe(degeneracy_target(false), degeneracy_target(true), task, epochs,
                         pint(ctx, "n"), cfg);

    // Each network's own overlap-ODE prediction.
    cfg.space = Space::Overlap;
    const ProtocolSpec protocol{{Phase{task, epochs, "train"}}};
    const TrainTrace ode1 =
        train(extract_overlaps(rep.init1, Variant::LinearRank1), protocol, cfg);
    const TrainTrace ode2 =
        train(extract_overlaps(rep.init2, Variant::LinearRank1), protocol, cfg);

    ctx.write_trace("trace_net1", rep.trace1, Variant::LinearRank1);
    ctx.write_trace("trace_net2", rep.trace2, Variant::LinearRank1);
    write_loss_summary(ctx, {{"net1", &rep.trace1},
                             {"net2", &rep.trace2},
                             {"ode1", &ode1},
                             {"ode2", &ode2}});

    ctx.metrics["pre_dist"] = rep.pre_dist;
    ctx.metrics["noise_dist"] = rep.noise_dist;
    ctx.metrics["divergence_at_50"] = rep.divergence_at_50;
    ctx.metrics["first_epoch_above"] = rep.first_epoch_above;
    ctx.metrics["max_loss_gap"] = rep.max_loss_gap;
    ctx.metrics["overlay_dev_net1"] = max_loss_dev(rep.trace1, ode1);
    ctx.metrics["overlay_dev_net2"] = max_loss_dev(rep.trace2, ode2);
}

std::vector<CheckResult> check_degeneracy(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"pre_learning_outputs_match", m.at("pre_dist").get<double>() < 1e-10,
                   "distance " + io::format_double(m.at("pre_dist").get<double>())});
    out.push_back({"noise_probe_outputs_match", m.at("noise_dist").get<double>() < 1e-10,
                   "distance " + io::format_double(m.at("noise_dist").get<double>())});
    const int first = m.at("first_epoch_above").get<int>();
    out.push_back({"learning_reveals_divergence_within_50",
                   first >= 0 && first <= 50 &&
                       m.at("divergence_at_50").get<double>() > 1e-3,
                   "first epoch above 1e-3: " + std::to_string(first)});
    out.push_back({"ode_overlay_net1", m.at("overlay_dev_net1").get<double>() < 1e-2,
                   "dev " + io::format_double(m.at("overlay_dev_net1").get<double>())});
    out.push_back({"ode_overlay_net2", m.at("overlay_dev_net2").get<double>() < 1e-2,
                   "dev " + io::format_double(m.at("overlay_dev_net2").get<double>())});
    return out;
}

// ------------------------------------------------------------------- fig3/6/7

const json kAbaDefaults = {
    {"n", 500},             {"eta", 2e-3},      {"epochs_per_phase", 1200},
    {"noisy_epochs", 8000}, {"label_noise_std", 0.1},
    {"c_star_a", 0.2},      {"c_star_b", 0.4},  {"dt", 0.025},
    {"horizon", 20.0},      {"gram_scale_n", 1.0}, {"batch_size", 1}, {"jobs", 1},
};

struct AbaOutcome {
    TrainTrace trace;
    double vanilla_drift = 0.0;
    double recover_max_abs = 0.0;
};

AbaOutcome run_aba_protocol(Ctx& ctx, OptimizerKind opt, double eta, bool with_noise) {
    const FilterTaskSpec taskA{1.0, pnum(ctx, "c_star_a"), InputKind::Impulse};
    const FilterTaskSpec taskB{1.0, pnum(ctx, "c_star_b"), InputKind::Impulse};
    const int e = pint(ctx, "epochs_per_phase");

    ProtocolSpec protocol{{Phase{taskA, e, "A1"}, Phase{taskB, e, "B1"}, Phase{taskA, e, "A2"},
                           Phase{taskB, e, "B2"}}};
    if (with_noise) {
        Phase noisy{taskA, pint(ctx, "noisy_epochs"), "A_noise"};
        noisy.label_noise_std = pnum(ctx, "label_noise_std");
        protocol.phases.push_back(noisy);
    }

    TrainConfig cfg = ptrain(ctx, Variant::LinearRank1, Space::Parameter);
    cfg.eta = eta;
    cfg.optimizer = opt;

    AbaOutcome out;
    out.trace = train(sample_iid_normal(pint(ctx, "n"), 1, derive_seed(ctx.seed, {0x1417})),
                      protocol, cfg);
    if (out.trace.diverged) return out;

    const ConservationReport vanilla =
        conservation_report(out.trace, 0, 4 * e - 1, /*require_entries=*/true);
    out.vanilla_drift = std::max(vanilla.max_c_drift, vanilla.max_entry_drift);

    const OverlapState a1 = out.trace.checkpoint("A1").state;
    const OverlapState a2 = out.trace.checkpoint("A2").state;
    out.recover_max_abs =
        std::max((a1.visible - a2.visible).cwiseAbs().maxCoeff(),
                 (a1.invisible - a2.invisible).cwiseAbs().maxCoeff());
    return out;
}

void run_aba(Ctx& ctx) {
    const int e = pint(ctx, "epochs_per_phase");
    AbaOutcome aba = run_aba_protocol(ctx, OptimizerKind::Gd, pnum(ctx, "eta"), true);

    ctx.write_trace("trace_aba", aba.trace, Variant::LinearRank1);
    ctx.metrics["diverged"] = aba.trace.diverged;
    if (aba.trace.diverged) return;

    ctx.metrics["vanilla_drift"] = aba.vanilla_drift;
    ctx.metrics["recover_max_abs"] = aba.recover_max_abs;

    const ConservationReport noisy = conservation_report(aba.trace, 4 * e, -1, true);
    const double noisy_drift = std::max(noisy.max_c_drift, noisy.max_entry_drift);
    ctx.metrics["noisy_drift"] = noisy_drift;
    ctx.metrics["drift_ratio"] = noisy_drift / std::max(aba.vanilla_drift, 1e-300);

    const EpochRecord& last = aba.trace.records.back();
    const double balanced = std::sqrt(1.0 - pnum(ctx, "c_star_a"));
    ctx.metrics["balance_dev_zu"] = std::abs(last.visible(r1::kZu) - balanced);
    ctx.metrics["balance_dev_vm"] = std::abs(last.visible(r1::kVm) - balanced);
    ctx.metrics["product_err"] =
        std::abs(last.visible(r1::kZu) * last.visible(r1::kVm) -
                 (1.0 - pnum(ctx, "c_star_a")));
}

std::vector<CheckResult> check_aba(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"no_divergence", !m.at("diverged").get<bool>(), ""});
    if (m.at("diverged").get<bool>()) return out;
    out.push_back({"vanilla_conserves_1e-3", m.at("vanilla_drift").get<double>() < 1e-3,
                   "drift " + io::format_double(m.at("vanilla_drift").get<double>())});
    out.push_back({"a2_recovers_a1_1e-3", m.at("recover_max_abs").get<double>() < 1e-3,
                   "max abs " + io::format_double(m.at("recover_max_abs").get<double>())});
    out.push_back({"noise_breaks_conservation_10x", m.at("drift_ratio").get<double>() > 10.0,
                   "ratio " + io::format_double(m.at("drift_ratio").get<double>())});
    out.push_back({"drifts_to_balanced_solution",
                   m.at("balance_dev_zu").get<double>() < 0.05 &&
                       m.at("balance_dev_vm").get<double>() < 0.05,
                   "devs " + io::format_double(m.at("balance_dev_zu").get<double>()) + ", " +
                       io::format_double(m.at("balance_dev_vm").get<double>())});
    out.push_back({"product_constraint_held", m.at("product_err").get<double>() < 1e-2,
                   "err " + io::format_double(m.at("product_err").get<double>())});
    return out;
}

const json kAdamDefaults = {
    {"n", 500},        {"eta", 1e-3},      {"eta_baseline", 2e-3},
    {"epochs_per_phase", 1200}, {"c_star_a", 0.2}, {"c_star_b", 0.4},
    {"dt", 0.025},     {"horizon", 20.0},  {"gram_scale_n", 1.0},
    {"batch_size", 1}, {"jobs", 1},
};

void run_adam_aba(Ctx& ctx) {
    AbaOutcome adam = run_aba_protocol(ctx, OptimizerKind::Adam, pnum(ctx, "eta"), false);
    AbaOutcome gd = run_aba_protocol(ctx, OptimizerKind::Gd, pnum(ctx, "eta_baseline"), false);

    ctx.write_trace("trace_adam", adam.trace, Variant::LinearRank1);
    ctx.write_trace("trace_gd_baseline", gd.trace, Variant::LinearRank1);

    ctx.metrics["diverged"] = adam.trace.diverged || gd.trace.diverged;
    if (ctx.metrics["diverged"].get<bool>()) return;

    const ConservationReport adam_rep = conservation_report(adam.trace, 0, -1, true);
    const double adam_drift = std::max(adam_rep.max_c_drift, adam_rep.max_entry_drift);
    ctx.metrics["adam_drift"] = adam_drift;
    ctx.metrics["vanilla_drift"] = gd.vanilla_drift;
    ctx.metrics["drift_ratio"] = adam_drift / std::max(gd.vanilla_drift, 1e-300);

    const OverlapState a1 = adam.trace.checkpoint("A1").state;
    const OverlapState a2 = adam.trace.checkpoint("A2").state;
    ctx.metrics["invisible_recovery_gap"] =
        (a1.invisible - a2.invisible).cwiseAbs().maxCoeff();
    ctx.metrics["gd_recover_max_abs"] = gd.recover_max_abs;
}

std::vector<CheckResult> check_adam_aba(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"no_divergence", !m.at("diverged").get<bool>(), ""});
    if (m.at("diverged").get<bool>()) return out;
    out.push_back({"adam_breaks_invariant_10x", m.at("drift_ratio").get<double>() > 10.0,
                   "ratio " + io::format_double(m.at("drift_ratio").get<double>())});
    out.push_back({"invisible_overlap_not_recovered",
                   m.at("invisible_recovery_gap").get<double>() > 0.05,
                   "gap " + io::format_double(m.at("invisible_recovery_gap").get<double>())});
    return out;
}

// --------------------------------------------------------- fig4 flip-flop MF

const json kFlipflopDefaults = {
    {"n_train", 1000}, {"eta", 0.05},     {"epochs", 1500},   {"batch_size", 10},
    {"dt", 0.025},     {"horizon", 20.0}, {"gram_scale_n", 1.0},
    {"sweep_seeds", 3}, {"jobs", 2},
};

Eigen::MatrixXd teacher_full_target() {
    Eigen::MatrixXd t(4, 4);  // teacher visible overlaps with a PSD completion
    t << 1.8, 1.6, 2.0, 0.5,
         1.6, 2.2, 1.5, 2.3,
         2.0, 1.5, 3.0, -0.1,
         0.5, 2.3, -0.1, 5.2;
    return t;
}

void run_flipflop_meanfield(Ctx& ctx) {
    const SimConfig sim = psim(ctx);
    const FlipFlopSpec task;

    // (a) N-sweep: full network vs effective model at prescribed overlaps.
    const Eigen::MatrixXd target = teacher_full_target();
    const Episode probe = generate_episode(task, derive_seed(ctx.seed, {0xf1}), sim);
    json rms_by_n = json::object();
    double prev = std::numeric_limits<double>::infinity();
    bool decreasing = true;
    for (int n : {250, 1000, 4000}) {
        double rms = 0.0;
        const int seeds = pint(ctx, "sweep_seeds");
        for (int s = 0; s < seeds; ++s) {
            const auto pv = sample_prescribed(target, n, derive_seed(ctx.seed, {0xab, (std::uint64_t)s, (std::uint64_t)n}));
            const OverlapState st = extract_overlaps(pv, Variant::NonlinearRank1);
            const Eigen::VectorXd eff = simulate_nonlinear_r1(st, probe.input, sim).output;
            const Eigen::VectorXd full = simulate(pv, Activation::Erf, probe.input, sim).output;
            rms += std::sqrt((eff - full).squaredNorm() / eff.size());
        }
        rms /= pint(ctx, "sweep_seeds");
        rms_by_n[std::to_string(n)] = rms;
        if (rms >= prev) decreasing = false;
        prev = rms;
    }
    ctx.metrics["rms_by_n"] = rms_by_n;
    ctx.metrics["rms_decreasing"] = decreasing;

    // (b) training overlay: full-network GD vs the 10-dim overlap ODE.
    const int n = pint(ctx, "n_train");
    const ParameterVectors pv = sample_iid_normal(n, 1, derive_seed(ctx.seed, {0x1417}));
    const OverlapState sigma0 = extract_overlaps(pv, Variant::NonlinearRank1);
    const ProtocolSpec protocol{{Phase{task, pint(ctx, "epochs"), "train"}}};

    TrainConfig cfg = ptrain(ctx, Variant::NonlinearRank1, Space::Parameter);
    const TrainTrace tp = train(pv, protocol, cfg);
    cfg.space = Space::Overlap;
    const TrainTrace to = train(sigma0, protocol, cfg);

    ctx.write_trace("trace_parameter", tp, Variant::NonlinearRank1);
    ctx.write_trace("trace_overlap", to, Variant::NonlinearRank1);
    write_loss_summary(ctx, {{"parameter", &tp}, {"overlap", &to}});

    ctx.metrics["diverged"] = tp.diverged || to.diverged;
    ctx.metrics["max_rel_loss_dev"] = max_loss_dev(tp, to);
    ctx.metrics["final_loss_parameter"] = tp.records.back().loss;

    // (c) Gaussianity after gradient-flow training.
    const auto& final_params = tp.checkpoints.back().params;
    if (final_params) {
        const Eigen::VectorXd r = gaussianity_qq(*final_params);
        ctx.metrics["qq_min"] = r.minCoeff();
        ctx.metrics["qq_r"] = std::vector<double>(r.data(), r.data() + r.size());
    }
}

std::vector<CheckResult> check_flipflop_meanfield(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"no_divergence", !m.at("diverged").get<bool>(), ""});
    out.push_back({"mean_field_rms_decreasing", m.at("rms_decreasing").get<bool>(),
                   m.at("rms_by_n").dump()});
    out.push_back({"ode_tracks_loss_within_10pct",
                   m.at("max_rel_loss_dev").get<double>() < 0.10,
                   "dev " + io::format_double(m.at("max_rel_loss_dev").get<double>())});
    out.push_back({"gaussianity_qq_0995", m.at("qq_min").get<double>() >= 0.995,
                   "min r " + io::format_double(m.at("qq_min").get<double>())});
    return out;
}

// --------------------------------------------------------- fig8 limits

const json kGaussianityDefaults = {
    {"n", 1000},   {"epochs", 600},   {"batch_size", 10}, {"dt", 0.025},
    {"horizon", 20.0}, {"gram_scale_n", 1.0}, {"eta_gf", 0.05},
    {"eta_adam", 1e-3}, {"eta_large", 0.5}, {"jobs", 2},
};

void run_gaussianity_limits(Ctx& ctx) {
    const FlipFlopSpec task;
    const int n = pint(ctx, "n");
    const ParameterVectors pv = sample_iid_normal(n, 1, derive_seed(ctx.seed, {0x1417}));
    const OverlapState sigma0 = extract_overlaps(pv, Variant::NonlinearRank1);
    const ProtocolSpec protocol{{Phase{task, pint(ctx, "epochs"), "train"}}};

    auto run_branch = [&](const std::string& name, OptimizerKind opt, double eta) {
        TrainConfig cfg = ptrain(ctx, Variant::NonlinearRank1, Space::Parameter);
        cfg.optimizer = opt;
        cfg.eta = eta;
        const TrainTrace tp = train(pv, protocol, cfg);
        TrainConfig ocfg = cfg;
        ocfg.space = Space::Overlap;
        ocfg.optimizer = OptimizerKind::Gd;  // the theory models gradient flow
        const TrainTrace to = train(sigma0, protocol, ocfg);
        ctx.write_trace("trace_" + name, tp, Variant::NonlinearRank1);

        json b;
        b["diverged"] = tp.diverged;
        b["ode_dev"] = tp.diverged ? 1.0 : max_loss_dev(tp, to);
        if (!tp.diverged && tp.checkpoints.back().params) {
            b["qq_min"] = gaussianity_qq(*tp.checkpoints.back().params).minCoeff();
        } else {
            b["qq_min"] = 0.0;
        }
        ctx.metrics[name] = b;
    };

    run_branch("gf", OptimizerKind::Gd, pnum(ctx, "eta_gf"));
    run_branch("adam", OptimizerKind::Adam, pnum(ctx, "eta_adam"));
    run_branch("gd_large", OptimizerKind::Gd, pnum(ctx, "eta_large"));
}

std::vector<CheckResult> check_gaussianity_limits(const json& m) {
    std::vector<CheckResult> out;
    const auto& gf = m.at("gf");
    out.push_back({"gradient_flow_tracks", !gf.at("diverged").get<bool>() &&
                                               gf.at("ode_dev").get<double>() < 0.10,
                   "dev " + io::format_double(gf.at("ode_dev").get<double>())});
    out.push_back({"gradient_flow_gaussian", gf.at("qq_min").get<double>() >= 0.995,
                   "min r " + io::format_double(gf.at("qq_min").get<double>())});
    const auto& adam = m.at("adam");
    out.push_back({"adam_mismatch_appears",
                   adam.at("diverged").get<bool>() || adam.at("ode_dev").get<double>() > 0.10,
                   "dev " + io::format_double(adam.at("ode_dev").get<double>())});
    const auto& lg = m.at("gd_large");
    out.push_back({"large_eta_mismatch_appears",
                   lg.at("diverged").get<bool>() || lg.at("ode_dev").get<double>() > 0.10,
                   "dev " + io::format_double(lg.at("ode_dev").get<double>())});
    return out;
}

// ------------------------------------------------------------------ fig4 twins

const json kTwinsDefaults = {
    {"pairs", 10},      {"epochs_ab", 4000}, {"epochs_c", 4000}, {"batch_size", 32},
    {"eta0", 0.01},     {"eta_c", 1e-3},     {"dt", 0.05},       {"horizon", 20.0},
    {"noise_std", 0.1}, {"splits", 50},      {"lr_threshold", 0.015},
    {"gram_scale_n", 1.0}, {"jobs", 2},      {"eta", 0.01},
};

OverlapState sample_twin_init(std::uint64_t seed) {
    // Cross-overlaps |N(0, 0.4)|, squared norms U[0.5, 2.0]; rejection-sampled
    // until the full overlap matrix is PSD.
    Rng rng(seed);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Eigen::MatrixXd full(4, 4);
        for (int i = 0; i < 4; ++i) full(i, i) = rng.uniform(0.5, 2.0);
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) {
                full(i, j) = full(j, i) = std::abs(rng.normal(0.0, 0.4));
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() > 1e-6) {
            return OverlapState::from_full_matrix(Variant::NonlinearRank1, full);
        }
    }
    throw std::runtime_error("twin init sampling failed to find a PSD draw");
}

void run_twins(Ctx& ctx) {
    TeacherSpec teacher;
    teacher.teacher_visible.resize(7);
    teacher.teacher_visible << 0.5, 2.3, 2.0, 1.5, 1.6, 1.8, 2.2;
    const TaskSpec taskA = FlipFlopSpec{};
    const TaskSpec taskB = DecisionSpec{};
    const TaskSpec taskC = teacher;

    TrainConfig cfg = ptrain(ctx, Variant::NonlinearRank1, Space::Overlap);
    cfg.lr_threshold = pnum(ctx, "lr_threshold");

    Phase phaseA{taskA, pint(ctx, "epochs_ab"), "phase_ab"};
    phaseA.eta = pnum(ctx, "eta0");
    phaseA.lr_decay = true;
    Phase phaseB = phaseA;
    phaseB.task = taskB;
    Phase phaseC{taskC, pint(ctx, "epochs_c"), "phase_c"};
    phaseC.eta = pnum(ctx, "eta_c");
    phaseC.lr_decay = false;

    const int pairs = pint(ctx, "pairs");
    struct Sample {
        Eigen::VectorXd visible, invisible;
        int label;
        std::string tag;
        double loss;
    };
    std::vector<Sample> samples;
    double max_postc_loss = 0.0;
    int below_threshold = 0;

    std::string pair_csv = "pair,branch,postab_loss,postc_loss\n";
    for (int p = 0; p < pairs; ++p) {
        const OverlapState init = sample_twin_init(derive_seed(ctx.seed, {0x7717, (std::uint64_t)p}));
        TrainConfig pcfg = cfg;
        pcfg.seed = derive_seed(ctx.seed, {0xec0, (std::uint64_t)p});
        pcfg.log_every = 25;
        const auto [t1, t2] = train_twins(init, phaseA, phaseB, phaseC, pcfg);
        if (t1.diverged || t2.diverged) {
            ctx.metrics["diverged"] = true;
            return;
        }
        const TrainTrace* branches[2] = {&t1, &t2};
        for (int b = 0; b < 2; ++b) {
            for (const std::string tag : {"initial", "phase_ab", "phase_c"}) {
                const Checkpoint& c = branches[b]->checkpoint(tag);
                samples.push_back(
                    {c.state.visible, c.state.invisible, b, tag, 0.0});
            }
            double postab = std::numeric_limits<double>::quiet_NaN();
            for (const auto& r : branches[b]->records) {
                if (r.phase == "phase_ab") postab = r.loss;
            }
            const double postc = branches[b]->records.back().loss;
            max_postc_loss = std::max(max_postc_loss, postc);
            if (postc < pnum(ctx, "lr_threshold")) ++below_threshold;
            pair_csv += std::to_string(p) + "," + std::to_string(b) + "," +
                        io::format_double(postab) + "," + io::format_double(postc) + "\n";
        }
    }
    io::write_text(ctx.out / "pair_losses.csv", pair_csv);
    ctx.add_file("pair_losses.csv");
    ctx.metrics["diverged"] = false;
    ctx.metrics["max_postc_loss"] = max_postc_loss;
    ctx.metrics["branches_below_threshold"] = below_threshold;
    ctx.metrics["branches_total"] = 2 * pairs;

    // Decode training history from visible vs invisible overlaps.
    json acc = json::object();
    std::string dec_csv = "checkpoint,features,mean_accuracy,sd_accuracy\n";
    for (const std::string tag : {"initial", "phase_ab", "phase_c"}) {
        for (const bool invisible : {false, true}) {
            DecodeDataset d;
            d.noise_std = pnum(ctx, "noise_std");
            for (const auto& s : samples) {
                if (s.tag != tag) continue;
                d.features.push_back(invisible ? s.invisible : s.visible);
                d.labels.push_back(s.label);
            }
            const DecodeResult r =
                decode_history(d, pint(ctx, "splits"), derive_seed(ctx.seed, {0xdec0de}));
            const std::string key = tag + (invisible ? "_invisible" : "_visible");
            acc[key] = {{"mean", r.mean_accuracy}, {"sd", r.sd_accuracy}};
            dec_csv += tag + "," + (invisible ? "invisible" : "visible") + "," +
                       io::format_double(r.mean_accuracy) + "," +
                       io::format_double(r.sd_accuracy) + "\n";
        }
    }
    io::write_text(ctx.out / "decoding.csv", dec_csv);
    ctx.add_file("decoding.csv");
    ctx.metrics["accuracy"] = acc;
}

std::vector<CheckResult> check_twins(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"no_divergence", !m.at("diverged").get<bool>(), ""});
    if (m.at("diverged").get<bool>()) return out;
    const auto& acc = m.at("accuracy");
    const double inv_mean = acc.at("phase_c_invisible").at("mean").get<double>();
    out.push_back({"invisible_decodes_history", inv_mean > 0.9,
                   "accuracy " + io::format_double(inv_mean)});
    const double vis_mean = acc.at("phase_c_visible").at("mean").get<double>();
    const double vis_sd = acc.at("phase_c_visible").at("sd").get<double>();
    out.push_back({"visible_at_chance", std::abs(vis_mean - 0.5) <= 2.0 * vis_sd,
                   "accuracy " + io::format_double(vis_mean) + " +- " +
                       io::format_double(vis_sd)});
    out.push_back({"losses_reach_threshold",
                   m.at("branches_below_threshold").get<int>() ==
                       m.at("branches_total").get<int>(),
                   std::to_string(m.at("branches_below_threshold").get<int>()) + "/" +
                       std::to_string(m.at("branches_total").get<int>())});
    return out;
}

// ------------------------------------------------------------------ fig12

const json kRank2Defaults = {
    {"n", 500},    {"eta", 5e-3},     {"epochs", 1500},  {"c_star", 0.3},
    {"omega_star", 2.0}, {"dt", 0.025}, {"horizon", 20.0}, {"gram_scale_n", 1.0},
    {"batch_size", 1},   {"jobs", 1},
};

void run_rank2(Ctx& ctx) {
    const OscillatorTaskSpec task{pnum(ctx, "c_star"), pnum(ctx, "omega_star"),
                                  InputKind::Impulse};
    const int n = pint(ctx, "n");
    const ProtocolSpec protocol{{Phase{task, pint(ctx, "epochs"), "train"}}};
    const ParameterVectors pv = sample_iid_normal(n, 2, derive_seed(ctx.seed, {0x1417}));
    const OverlapState sigma0 = extract_overlaps(pv, Variant::LinearRank2);

    TrainConfig cfg = ptrain(ctx, Variant::LinearRank2, Space::Parameter);
    const TrainTrace tp = train(pv, protocol, cfg);
    cfg.space = Space::Overlap;
    const TrainTrace to = train(sigma0, protocol, cfg);

    ctx.write_trace("trace_parameter", tp, Variant::LinearRank2);
    ctx.write_trace("trace_overlap", to, Variant::LinearRank2);
    write_loss_summary(ctx, {{"parameter", &tp}, {"overlap", &to}});

    double overlap_dev = 0.0;
    const std::size_t rows = std::min(tp.records.size(), to.records.size());
    for (std::size_t i = 0; i < rows; ++i) {
        overlap_dev = std::max(
            overlap_dev,
            (tp.records[i].visible - to.records[i].visible).cwiseAbs().maxCoeff());
        overlap_dev = std::max(
            overlap_dev,
            (tp.records[i].invisible - to.records[i].invisible).cwiseAbs().maxCoeff());
    }
    ctx.metrics["diverged"] = tp.diverged || to.diverged;
    ctx.metrics["max_rel_loss_dev"] = max_loss_dev(tp, to);
    ctx.metrics["max_overlap_abs_dev"] = overlap_dev;
    ctx.metrics["final_loss_parameter"] = tp.records.back().loss;
}

std::vector<CheckResult> check_rank2(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"no_divergence", !m.at("diverged").get<bool>(), ""});
    out.push_back({"loss_overlay_1e-2", m.at("max_rel_loss_dev").get<double>() < 1e-2,
                   "dev " + io::format_double(m.at("max_rel_loss_dev").get<double>())});
    out.push_back({"all_21_overlaps_within_1e-2",
                   m.at("max_overlap_abs_dev").get<double>() < 1e-2,
                   "max abs dev " + io::format_double(m.at("max_overlap_abs_dev").get<double>())});
    return out;
}

// ------------------------------------------------------------------ registry

struct Entry {
    json defaults;
    std::function<void(Ctx&)> run;
    std::function<std::vector<CheckResult>(const json&)> check;
};

std::vector<CheckResult> props_check(const json& m);
void run_props(Ctx& ctx);
const json kPropsDefaults = json::object();

const std::map<std::string, Entry>& registry() {
    static const std::map<std::string, Entry> reg = {
        {"fig1c", {kFilterDefaults, run_filter_compare, check_filter_compare}},
        {"fig5_filter", {kFilterDefaults, run_filter_compare, check_filter_compare}},
        {"fig2_degeneracy", {kDegeneracyDefaults, run_degeneracy, check_degeneracy}},
        {"fig3_aba", {kAbaDefaults, run_aba, check_aba}},
        {"fig6_noise_drift", {kAbaDefaults, run_aba, check_aba}},
        {"fig7_adam", {kAdamDefaults, run_adam_aba, check_adam_aba}},
        {"fig4_flipflop", {kFlipflopDefaults, run_flipflop_meanfield, check_flipflop_meanfield}},
        {"fig8_gaussianity",
         {kGaussianityDefaults, run_gaussianity_limits, check_gaussianity_limits}},
        {"fig4_twins", {kTwinsDefaults, run_twins, check_twins}},
        {"fig12_rank2", {kRank2Defaults, run_rank2, check_rank2}},
        {"props_core", {kPropsDefaults, run_props, props_check}},
    };
    return reg;
}

}  // namespace

std::vector<std::string> list_experiments() {
    std::vector<std::string> ids;
    for (const auto& [id, entry] : registry()) ids.push_back(id);
    return ids;
}

io::json default_experiment_config(const std::string& id) {
    const auto it = registry().find(id);
    if (it == registry().end()) throw io::ConfigError("unknown experiment id: " + id);
    return json{{"experiment", id}, {"seed", 1}, {"params", it->second.defaults}};
}

io::json run_experiment(const io::json& config, const fs::path& out_dir) {
    io::check_keys(config, {"experiment", "seed", "params"}, "experiment config");
    const std::string id = config.at("experiment").get<std::string>();
    const auto it = registry().find(id);
    if (it == registry().end()) throw io::ConfigError("unknown experiment id: " + id);

    Ctx ctx;
    ctx.id = id;
    ctx.seed = config.contains("seed") ? config.at("seed").get<std::uint64_t>() : 1;
    if (const char* env = std::getenv("LOWRANK_SEED")) {
        ctx.seed = std::strtoull(env, nullptr, 10);
    }
    ctx.params = it->second.defaults;
    if (config.contains("params")) {
        std::set<std::string> allowed;
        for (const auto& [k, v] : it->second.defaults.items()) allowed.insert(k);
        io::check_keys(config.at("params"), allowed, id + " params");
        ctx.params.update(config.at("params"));
    }
    ctx.out = out_dir;
    fs::create_directories(out_dir);

    const json resolved{{"experiment", id}, {"seed", ctx.seed}, {"params", ctx.params}};
    io::write_json(ctx.out / "resolved-config.json", resolved);
    ctx.add_file("resolved-config.json");

    it->second.run(ctx);

    io::write_json(ctx.out / "metrics.json", ctx.metrics);
    ctx.add_file("metrics.json");

    json files = json::object();
    for (const auto& f : ctx.files) files[f] = io::fnv1a_file(ctx.out / f);
    io::write_json(ctx.out / "manifest.json",
                   json{{"experiment", id}, {"seed", ctx.seed}, {"files", files}});
    return ctx.metrics;
}

std::vector<CheckResult> check_metrics(const std::string& id, const io::json& metrics) {
    const auto it = registry().find(id);
    if (it == registry().end()) throw io::ConfigError("unknown experiment id: " + id);
    return it->second.check(metrics);
}

std::vector<CheckResult> verify_experiment(const io::json& config, const fs::path& out_dir) {
    const json metrics = run_experiment(config, out_dir);
    return check_metrics(config.at("experiment").get<std::string>(), metrics);
}

// ------------------------------------------------------------ property suite

namespace {

void run_props(Ctx& ctx) {
    const SimConfig sim;
    const double alpha = sim.activation_alpha;

    // Gain: bounds, monotonicity, Monte-Carlo agreement.
    bool gain_ok = true;
    double prev = 1.0 + 1e-12;
    for (double d = 0.0; d <= 10.0; d += 0.2) {
        const double g = gain(d, alpha);
        if (!(g > 0.0 && g <= 1.0 && g < prev)) gain_ok = false;
        prev = g;
    }
    double max_mc_z = 0.0;
    for (double d : {0.5, 1.5, 3.0}) {
        Rng rng(derive_seed(ctx.seed, {0x6a, static_cast<std::uint64_t>(d * 16)}));
        const int samples = 400000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double g = std::sqrt(d) * rng.normal();
            const double val = alpha * 1.1283791670955126 * std::exp(-alpha * alpha * g * g);
            sum += val;
            sumsq += val * val;
        }
        const double mean = sum / samples;
        const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
        max_mc_z = std::max(max_mc_z, std::abs(gain(d, alpha) - mean) / se);
    }
    ctx.metrics["gain_bounds_ok"] = gain_ok;
    ctx.metrics["gain_mc_max_z"] = max_mc_z;

    // flow_rhs linearity across variants.
    double lin_res = 0.0;
    for (Variant v : {Variant::LinearRank1, Variant::NonlinearRank1, Variant::LinearRank2}) {
        Rng rng(derive_seed(ctx.seed, {0x11, static_cast<std::uint64_t>(v)}));
        const OverlapState s = extract_overlaps(
            sample_iid_normal(64, variant_info(v).rank, derive_seed(ctx.seed, {0x5, (std::uint64_t)v})), v);
        const int dim = static_cast<int>(variant_info(v).visible.size());
        Eigen::VectorXd g1(dim), g2(dim);
        for (int i = 0; i < dim; ++i) {
            g1(i) = rng.normal();
            g2(i) = rng.normal();
        }
        const OverlapRates ra = flow_rhs(s, GradientVector(v, g1), 64.0);
        const OverlapRates rb = flow_rhs(s, GradientVector(v, g2), 64.0);
        const OverlapRates rc =
            flow_rhs(s, GradientVector(v, (2.0 * g1 - 0.5 * g2).eval()), 64.0);
        lin_res = std::max(lin_res,
                           (rc.visible - (2.0 * ra.visible - 0.5 * rb.visible))
                               .cwiseAbs()
                               .maxCoeff());
        lin_res = std::max(lin_res,
                           (rc.invisible - (2.0 * ra.invisible - 0.5 * rb.invisible))
                               .cwiseAbs()
                               .maxCoeff());
    }
    ctx.metrics["flow_linearity_residual"] = lin_res;

    // Round trip: extract_overlaps(sample_prescribed(target)) == target.
    double rt_err = 0.0;
    Rng rng(derive_seed(ctx.seed, {0x22}));
    for (int rank : {1, 2}) {
        const int k = 2 * rank + 2;
        Eigen::MatrixXd a(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) a(i, j) = rng.normal();
        const Eigen::MatrixXd target = a * a.transpose() / k;
        const auto pv = sample_prescribed(target, 200, derive_seed(ctx.seed, {0x23, (std::uint64_t)rank}));
        rt_err = std::max(rt_err, (full_overlap_matrix(pv) - target).cwiseAbs().maxCoeff());
    }
    ctx.metrics["roundtrip_max_err"] = rt_err;

    // Mask-loss consistency.
    const Episode ep = generate_episode(FlipFlopSpec{}, derive_seed(ctx.seed, {0x31}), sim);
    const OverlapState st = extract_overlaps(
        sample_iid_normal(64, 1, derive_seed(ctx.seed, {0x32})), Variant::NonlinearRank1);
    Episode mutated = ep;
    for (Eigen::Index i = 0; i < ep.mask.size(); ++i) {
        if (ep.mask(i) == 0.0) mutated.target(i) -= 7.0;
    }
    ctx.metrics["mask_loss_consistent"] =
        effective_loss(st, ep, sim) == effective_loss(st, mutated, sim);

    // Determinism of traces.
    TrainConfig cfg;
    cfg.variant = Variant::LinearRank1;
    cfg.space = Space::Parameter;
    cfg.eta = 5e-3;
    cfg.seed = derive_seed(ctx.seed, {0x41});
    cfg.sim.horizon = 5.0;
    const auto pv = sample_iid_normal(100, 1, derive_seed(ctx.seed, {0x42}));
    const ProtocolSpec protocol{{Phase{FilterTaskSpec{}, 30, "A"}}};
    const TrainTrace t1 = train(pv, protocol, cfg);
    const TrainTrace t2 = train(pv, protocol, cfg);
    bool deterministic = t1.records.size() == t2.records.size();
    for (std::size_t i = 0; deterministic && i < t1.records.size(); ++i) {
        deterministic = t1.records[i].loss == t2.records[i].loss &&
                        (t1.records[i].visible.array() == t2.records[i].visible.array()).all() &&
                        (t1.records[i].invisible.array() == t2.records[i].invisible.array()).all();
    }
    ctx.metrics["trace_deterministic"] = deterministic;
}

std::vector<CheckResult> props_check(const json& m) {
    std::vector<CheckResult> out;
    out.push_back({"gain_bounds_monotone", m.at("gain_bounds_ok").get<bool>(), ""});
    out.push_back({"gain_matches_monte_carlo", m.at("gain_mc_max_z").get<double>() < 3.0,
                   "max z " + io::format_double(m.at("gain_mc_max_z").get<double>())});
    out.push_back({"flow_rhs_linear", m.at("flow_linearity_residual").get<double>() < 1e-12,
                   "residual " + io::format_double(m.at("flow_linearity_residual").get<double>())});
    out.push_back({"prescribed_roundtrip_1e-10",
                   m.at("roundtrip_max_err").get<double>() < 1e-10,
                   "err " + io::format_double(m.at("roundtrip_max_err").get<double>())});
    out.push_back({"mask_loss_consistent", m.at("mask_loss_consistent").get<bool>(), ""});
    out.push_back({"traces_deterministic", m.at("trace_deterministic").get<bool>(), ""});
    return out;
}

}  // namespace

}  // namespace lowrank
