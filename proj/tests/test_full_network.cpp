#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lowrank/full_network.hpp"
#include "lowrank/gradients.hpp"
#include "lowrank/rng.hpp"
#include "test_support.hpp"

#include <cstdio>
#include <filesystem>

using namespace lowrank;
using test::random_params;
using test::rel_err;

TEST_CASE("sample_prescribed: identity target round-trips") {
    const Eigen::MatrixXd target = Eigen::MatrixXd::Identity(4, 4);
    const auto pv = sample_prescribed(target, 100, 11);
    CHECK(rel_err(full_overlap_matrix(pv), target) < 1e-10);
}

TEST_CASE("sample_prescribed: random PSD targets round-trip, rank 1 and 2") {
    Rng rng(2024);
    for (int rank : {1, 2}) {
        const int k = 2 * rank + 2;
        for (int trial = 0; trial < 4; ++trial) {
            Eigen::MatrixXd a(k, k);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) a(i, j) = rng.normal();
            const Eigen::MatrixXd target = a * a.transpose() / k;
            const auto pv = sample_prescribed(target, 150, 500 + trial);
            CHECK(pv.rank == rank);
            CHECK(rel_err(full_overlap_matrix(pv), target) < 1e-10);
        }
    }
}

TEST_CASE("sample_prescribed: rank-deficient target (u = m exactly)") {
    Eigen::MatrixXd target(4, 4);
    target << 1.0, 1.0, 0.2, 0.3,
              1.0, 1.0, 0.2, 0.3,
              0.2, 0.2, 1.5, 0.1,
              0.3, 0.3, 0.1, 2.0;
    const auto pv = sample_prescribed(target, 200, 9);
    CHECK(rel_err(full_overlap_matrix(pv), target) < 1e-10);
    CHECK((pv.m - pv.u[0]).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("sample_prescribed: error cases") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(4, 4);
    bad(0, 1) = bad(1, 0) = 2.0;  // not PSD
    CHECK_THROWS_AS(sample_prescribed(bad, 100, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_prescribed(Eigen::MatrixXd::Identity(4, 4), 3, 1),
                    std::invalid_argument);
}

TEST_CASE("functional twins share outputs when visible overlaps match") {
    // Equal visible block, different sigma_mu and |u|^2.
    Eigen::MatrixXd t1(4, 4), t2(4, 4);
    const double zm = 0.3, zu = 0.4, vm = 0.5, vu = 0.2, zv = 0.1;
    t1 << 1.0, 0.5, vm, zm,
          0.5, 2.0, vu, zu,
          vm, vu, 1.2, zv,
          zm, zu, zv, 1.5;
    t2 << 1.0, -0.3, vm, zm,
          -0.3, 1.0, vu, zu,
          vm, vu, 1.2, zv,
          zm, zu, zv, 1.5;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(t1, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(t2, Eigen::EigenvaluesOnly);
    REQUIRE(e1.eigenvalues().minCoeff() > 0.0);
    REQUIRE(e2.eigenvalues().minCoeff() > 0.0);

    const auto pv1 = sample_prescribed(t1, 400, 21);
    const auto pv2 = sample_prescribed(t2, 400, 22);
    SimConfig cfg;
    Rng rng(77);
    Eigen::VectorXd x(cfg.steps());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = rng.normal();
    const auto y1 = simulate(pv1, Activation::Identity, x, cfg);
    const auto y2 = simulate(pv2, Activation::Identity, x, cfg);
    CHECK((y1.output - y2.output).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("simulate: zero input keeps h at zero; erf matches linear slope regime") {
    const auto pv = random_params(200, 1, 5);
    SimConfig cfg;
    cfg.horizon = 2.0;
    const auto traj = simulate(pv, Activation::Identity, Eigen::VectorXd::Zero(cfg.steps()), cfg,
                               /*store_every=*/1);
    CHECK(traj.output.cwiseAbs().maxCoeff() == 0.0);
    CHECK(traj.h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extract_overlaps: degenerate hand case") {
    ParameterVectors pv;
    pv.n = 4;
    pv.rank = 1;
    pv.z = Eigen::Vector4d(1, 2, 0, -1);
    pv.m = pv.z;
    pv.u = {Eigen::Vector4d::Zero()};
    pv.v = {Eigen::Vector4d::Zero()};
    const auto s = extract_overlaps(pv, Variant::LinearRank1);
    CHECK(s.vis(r1::kZm) == doctest::Approx(s.invis(r1::kMm)).epsilon(1e-15));
    CHECK(s.vis(r1::kZu) == 0.0);
    CHECK(s.vis(r1::kVm) == 0.0);
    CHECK(s.vis(r1::kVu) == 0.0);
    CHECK(s.invis(r1::kUu) == 0.0);
}

TEST_CASE("jacobians: finite-difference columns") {
    const int n = 30;
    const auto pv = random_params(n, 1, 61);
    const Eigen::MatrixXd d = jacobian_visible(pv, Variant::LinearRank1);

    auto sigma_of = [&](const Eigen::VectorXd& theta) {
        ParameterVectors q = pv;
        q.m = theta.segment(0, n);
        q.u[0] = theta.segment(n, n);
        q.v[0] = theta.segment(2 * n, n);
        q.z = theta.segment(3 * n, n);
        return extract_overlaps(q, Variant::LinearRank1).visible;
    };
    Eigen::VectorXd theta(4 * n);
    theta << pv.m, pv.u[0], pv.v[0], pv.z;

    Rng rng(17);
    const double eps = 1e-5;
    for (int probe = 0; probe < 20; ++probe) {
        const int i = static_cast<int>(rng.integer(4 * n));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += eps;
        tm(i) -= eps;
        const Eigen::VectorXd col = (sigma_of(tp) - sigma_of(tm)) / (2 * eps);
        CHECK((col - d.col(i)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("gaussianity_qq: calibration") {
    // i.i.d. normal components score near 1.
    for (int seed = 0; seed < 20; ++seed) {
        const auto pv = sample_iid_normal(1000, 1, 3000 + seed);
        const Eigen::VectorXd r = gaussianity_qq(pv);
        CHECK(r.minCoeff() > 0.995);
    }

    // Degenerate constant vector.
    ParameterVectors pv = sample_iid_normal(100, 1, 1);
    pv.m.setConstant(2.0);
    CHECK_THROWS_AS(gaussianity_qq(pv), std::invalid_argument);

    // Too few samples.
    CHECK_THROWS_AS(gaussianity_qq(sample_iid_normal(8, 1, 1)), std::invalid_argument);

    // Heavily bimodal components score clearly lower.
    ParameterVectors bimodal = sample_iid_normal(1000, 1, 2);
    for (int i = 0; i < bimodal.n; ++i) bimodal.m(i) = i % 2 == 0 ? 1.0 : -1.0;
    CHECK(gaussianity_qq(bimodal)(0) < 0.98);
}

TEST_CASE("binary container round-trip") {
    namespace fs = std::filesystem;
    const auto pv = random_params(64, 2, 8);
    const std::string path = (fs::temp_directory_path() / "lowrank_params_test.bin").string();
    save_params(path, pv);
    const auto back = load_params(path);
    CHECK(back.n == pv.n);
    CHECK(back.rank == pv.rank);
    CHECK((back.m - pv.m).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.z - pv.z).cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j < 2; ++j) {
        CHECK((back.u[j] - pv.u[j]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.v[j] - pv.v[j]).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove(path.c_str());
}
