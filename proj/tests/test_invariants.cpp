#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lowrank/invariants.hpp"
#include "lowrank/training.hpp"
#include "test_support.hpp"

#include <Eigen/Eigenvalues>

using namespace lowrank;
using test::random_params;

TEST_CASE("compute_K: exact cancellation when z = m and v = u") {
    ParameterVectors pv = random_params(50, 1, 1);
    pv.z = pv.m;
    pv.v[0] = pv.u[0];
    const KSummary ks = compute_K(pv);
    CHECK(ks.K.cwiseAbs().maxCoeff() < 1e-14);
    for (double c : ks.c) CHECK(std::abs(c) < 1e-12);
}

TEST_CASE("compute_K: orthonormal vectors give C1 = 0 and the closed-form C2") {
    // Orthonormal under the scaled inner product: all cross-overlaps 0, norms 1.
    const auto pv = sample_prescribed(Eigen::MatrixXd::Identity(4, 4), 50, 3);
    const KSummary ks = compute_K(pv);
    CHECK(std::abs(ks.c[0]) < 1e-10);
    // C2 = (|z|^4 + |v|^4 + 2 s_zv^2) + (|m|^4 + |u|^4 + 2 s_mu^2) - 2 * (cross terms) = 4.
    CHECK(ks.c[1] == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("compute_K: trace powers match the explicit matrix at n = 50") {
    for (int trial = 0; trial < 5; ++trial) {
        const auto pv = random_params(50, 1, 400 + trial);
        const KSummary ks = compute_K(pv);
        REQUIRE(ks.K.size() > 0);
        Eigen::MatrixXd p = ks.K;
        for (int k = 0; k < 4; ++k) {
            CHECK(ks.c[k] == doctest::Approx(p.trace()).epsilon(1e-10));
            p = p * ks.K;
        }
    }
}

TEST_CASE("K has rank at most 4") {
    const auto pv = random_params(50, 1, 77);
    const KSummary ks = compute_K(pv);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ks.K, Eigen::EigenvaluesOnly);
    int nonzero = 0;
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (std::abs(es.eigenvalues()(i)) > 1e-10 * scale) ++nonzero;
    }
    CHECK(nonzero <= 4);
}

TEST_CASE("invariant traces are overlap-expressible") {
    for (int trial = 0; trial < 5; ++trial) {
        const auto pv = random_params(80, 1, 900 + trial);
        const KSummary ks = compute_K(pv);
        const auto from_state = invariant_traces(extract_overlaps(pv, Variant::LinearRank1));
        for (int k = 0; k < 4; ++k) {
            CHECK(std::abs(from_state[k] - ks.c[k]) < 1e-12 * (1.0 + std::abs(ks.c[k])));
        }
    }
}

TEST_CASE("C1 equals the norm combination by construction") {
    const auto pv = random_params(60, 1, 5);
    const OverlapState s = extract_overlaps(pv, Variant::LinearRank1);
    const auto c = invariant_traces(s);
    const double direct = s.invis(r1::kZz) + s.invis(r1::kVv) - s.invis(r1::kMm) -
                          s.invis(r1::kUu);
    CHECK(c[0] == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("balance residuals at the balanced filter solution") {
    Eigen::VectorXd vis(4), invis(6);
    const double b = std::sqrt(0.8);
    vis << 1.0, b, b, 0.8;
    invis.setZero();
    const OverlapState s(Variant::LinearRank1, vis, invis);
    const auto r = balance_residuals(s, 1.0, 0.2);
    CHECK(std::abs(r.asymmetry) < 1e-14);
    CHECK(std::abs(r.product_error) < 1e-14);
}

TEST_CASE("conservation_report: vanilla GD conserves, overlap runs lack K entries") {
    TrainConfig cfg;
    cfg.variant = Variant::LinearRank1;
    cfg.space = Space::Parameter;
    cfg.eta = 5e-4;  // near the gradient-flow regime, where K is conserved
    cfg.seed = 3;
    cfg.sim.horizon = 10.0;
    const auto pv = random_params(150, 1, 31);
    ProtocolSpec protocol{{Phase{FilterTaskSpec{}, 240, "A"}}};
    const TrainTrace tp = train(pv, protocol, cfg);
    const ConservationReport rep = conservation_report(tp);
    CHECK(rep.has_entries);
    CHECK(rep.max_c_drift < 1e-3);
    CHECK(rep.max_entry_drift < 1e-3);

    TrainConfig ocfg = cfg;
    ocfg.space = Space::Overlap;
    const TrainTrace to = train(extract_overlaps(pv, cfg.variant), protocol, ocfg);
    CHECK_THROWS_AS(conservation_report(to), MissingInvariantData);
    const ConservationReport orep = conservation_report(to, 0, -1, /*require_entries=*/false);
    CHECK(orep.max_c_drift < 1e-3);
    CHECK(!orep.has_entries);
}
