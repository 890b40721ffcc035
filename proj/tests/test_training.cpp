#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lowrank/training.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace lowrank;
using test::random_params;

namespace {

TrainConfig small_filter_config() {
    TrainConfig cfg;
    cfg.variant = Variant::LinearRank1;
    cfg.space = Space::Parameter;
    cfg.eta = 5e-3;
    cfg.seed = 11;
    cfg.gram_scale_n = 1.0;  // paper-timescale convention
    cfg.sim.dt = 0.025;
    cfg.sim.horizon = 10.0;
    return cfg;
}

}  // namespace

TEST_CASE("adam_step: zero gradient with zero moments leaves state unchanged") {
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    const Eigen::VectorXd x0 = x;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(5), m2 = Eigen::VectorXd::Zero(5);
    adam_step(x, Eigen::VectorXd::Zero(5), m1, m2, 1, 1e-3, AdamParams{});
    CHECK((x - x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam_step: constant gradient approaches steps of size eta") {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd g(3);
    g << 2.0, -0.5, 10.0;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(3), m2 = Eigen::VectorXd::Zero(3);
    const double eta = 1e-3;
    Eigen::VectorXd prev = x;
    for (long t = 1; t <= 500; ++t) {
        prev = x;
        adam_step(x, g, m1, m2, t, eta, AdamParams{});
    }
    const Eigen::VectorXd step = (x - prev).cwiseAbs();
    for (int i = 0; i < 3; ++i) CHECK(step(i) == doctest::Approx(eta).epsilon(1e-3));
}

TEST_CASE("train: filter task loss decreases and spaces agree (small run)") {
    TrainConfig cfg = small_filter_config();
    const int n = 200;
    const int epochs = 150;
    const auto pv = random_params(n, 1, 2);

    ProtocolSpec protocol{{Phase{FilterTaskSpec{}, epochs, "A"}}};
    const TrainTrace tp = train(pv, protocol, cfg);
    REQUIRE(!tp.diverged);
    REQUIRE(static_cast<int>(tp.records.size()) == epochs);
    // Monotone decrease after the first epoch.
    for (std::size_t i = 2; i < tp.records.size(); ++i) {
        CHECK(tp.records[i].loss <= tp.records[i - 1].loss + 1e-12);
    }

    TrainConfig ocfg = cfg;
    ocfg.space = Space::Overlap;
    const TrainTrace to = train(extract_overlaps(pv, cfg.variant), protocol, ocfg);
    REQUIRE(!to.diverged);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < tp.records.size(); ++i) {
        const double a = tp.records[i].loss, b = to.records[i].loss;
        max_rel = std::max(max_rel, std::abs(a - b) / std::max(a, b));
    }
    CHECK(max_rel < 1e-3);

    // Overlap trajectories agree too (space equivalence at the state level).
    for (std::size_t i = 0; i < tp.records.size(); i += 37) {
        CHECK((tp.records[i].visible - to.records[i].visible).cwiseAbs().maxCoeff() < 5e-3);
        CHECK((tp.records[i].invisible - to.records[i].invisible).cwiseAbs().maxCoeff() < 5e-3);
    }

    // Naive overlap descent produces a different trajectory.
    TrainConfig ncfg = cfg;
    ncfg.space = Space::OverlapNaive;
    const TrainTrace tn = train(extract_overlaps(pv, cfg.variant), protocol, ncfg);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < tp.records.size(); ++i) {
        const double a = tp.records[i].loss, b = tn.records[i].loss;
        max_dev = std::max(max_dev, std::abs(a - b) / std::max(a, b));
    }
    CHECK(max_dev > 0.10);
}

TEST_CASE("train: determinism and batch invariance for deterministic tasks") {
    TrainConfig cfg = small_filter_config();
    cfg.sim.horizon = 5.0;
    const auto pv = random_params(100, 1, 5);
    ProtocolSpec protocol{{Phase{FilterTaskSpec{}, 40, "A"}}};

    const TrainTrace a = train(pv, protocol, cfg);
    const TrainTrace b = train(pv, protocol, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].loss == b.records[i].loss);
        CHECK((a.records[i].visible.array() == b.records[i].visible.array()).all());
    }

    TrainConfig batched = cfg;
    batched.batch_size = 4;  // impulse-input filter episodes are identical
    const TrainTrace c = train(pv, protocol, batched);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].loss == doctest::Approx(c.records[i].loss).epsilon(1e-12));
    }
}

TEST_CASE("train: divergence aborts with a diagnostic record") {
    TrainConfig cfg = small_filter_config();
    cfg.eta = 50.0;  // absurd step size
    cfg.divergence_threshold = 1e6;
    const auto pv = random_params(100, 1, 6);
    ProtocolSpec protocol{{Phase{FilterTaskSpec{}, 200, "A"}}};
    const TrainTrace t = train(pv, protocol, cfg);
    CHECK(t.diverged);
    CHECK(!t.diagnostic.empty());
}

TEST_CASE("train: gradient-flow consistency under eta halving") {
    TrainConfig cfg = small_filter_config();
    cfg.sim.horizon = 5.0;
    const auto pv = random_params(120, 1, 21);

    TrainConfig half = cfg;
    half.eta = cfg.eta / 2;
    const TrainTrace t1 = train(pv, ProtocolSpec{{Phase{FilterTaskSpec{}, 200, "A"}}}, cfg);
    const TrainTrace t2 = train(pv, ProtocolSpec{{Phase{FilterTaskSpec{}, 400, "A"}}}, half);
    const Eigen::VectorXd v1 = t1.checkpoints.back().state.visible;
    const Eigen::VectorXd v2 = t2.checkpoints.back().state.visible;
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 10 * cfg.eta);
}

TEST_CASE("train_twins: degenerate twins produce identical traces") {
    TrainConfig cfg = small_filter_config();
    cfg.space = Space::Overlap;
    cfg.sim.horizon = 5.0;
    const OverlapState init = extract_overlaps(random_params(100, 1, 9), Variant::LinearRank1);

    const TaskSpec task = FilterTaskSpec{};
    const auto [t1, t2] = train_twins(init, Phase{task, 60, "phase_ab"},
                                      Phase{task, 60, "phase_ab"}, Phase{task, 30, "phase_c"},
                                      cfg);
    REQUIRE(t1.records.size() == t2.records.size());
    for (std::size_t i = 0; i < t1.records.size(); ++i) {
        CHECK(t1.records[i].loss == t2.records[i].loss);
        CHECK((t1.records[i].visible.array() == t2.records[i].visible.array()).all());
        CHECK((t1.records[i].invisible.array() == t2.records[i].invisible.array()).all());
    }
}

TEST_CASE("train: learning-rate decay triggers on downward crossings") {
    TrainConfig cfg = small_filter_config();
    cfg.lr_decay = true;
    cfg.lr_threshold = 0.05;
    cfg.lr_decay_factor = 0.2;
    const auto pv = random_params(150, 1, 13);
    const TrainTrace t = train(pv, ProtocolSpec{{Phase{FilterTaskSpec{}, 250, "A"}}}, cfg);
    REQUIRE(!t.diverged);
    bool decayed = false;
    for (const auto& r : t.records) {
        if (r.eta < cfg.eta * 0.9) decayed = true;
    }
    CHECK(decayed);
    CHECK(t.records.back().loss < 0.05);
}

TEST_CASE("train: config validation") {
    TrainConfig cfg = small_filter_config();
    cfg.space = Space::Overlap;
    cfg.optimizer = OptimizerKind::Adam;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.optimizer = OptimizerKind::Gd;
    cfg.eta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
