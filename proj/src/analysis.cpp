#include "lowrank/analysis.hpp"

#include "lowrank/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lowrank {

namespace {

double logistic_accuracy(const std::vector<Eigen::VectorXd>& x, const std::vector<int>& y,
                         const std::vector<int>& train, const std::vector<int>& test) {
    const Eigen::Index d = x[0].size();

    // Standardize with train statistics.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i : train) mean += x[i];
    mean /= static_cast<double>(train.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (int i : train) var += (x[i] - mean).cwiseAbs2();
    var /= static_cast<double>(train.size());
    const Eigen::VectorXd sd = var.cwiseMax(1e-12).cwiseSqrt();

    auto feat = [&](int i) { return ((x[i] - mean).array() / sd.array()).matrix().eval(); };

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    const double step = 0.1;
    for (int it = 0; it < 1000; ++it) {
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(d);
        double gb = 0.0;
        for (int i : train) {
            const Eigen::VectorXd f = feat(i);
            const double p = 1.0 / (1.0 + std::exp(-(w.dot(f) + b)));
            const double err = p - y[i];
            gw += err * f;
            gb += err;
        }
        gw /= static_cast<double>(train.size());
        gb /= static_cast<double>(train.size());
        w -= step * gw;
        b -= step * gb;
    }

    int correct = 0;
    for (int i : test) {
        const double p = 1.0 / (1.0 + std::exp(-(w.dot(feat(i)) + b)));
        if ((p >= 0.5 ? 1 : 0) == y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

DecodeResult decode_history(const DecodeDataset& data, int splits, std::uint64_t seed,
                            int test_count) {
    const int n = static_cast<int>(data.features.size());
    if (n != static_cast<int>(data.labels.size()) || n < 2) {
        throw std::invalid_argument("decode_history: bad dataset");
    }
    int per_class[2] = {0, 0};
    for (int y : data.labels) ++per_class[y];
    if (per_class[0] < 2 || per_class[1] < 2) {
        throw std::invalid_argument("decode_history: need at least 2 samples per class");
    }
    if (test_count < 1 || test_count >= n) throw std::invalid_argument("bad test_count");

    std::vector<double> accs;
    accs.reserve(splits);
    for (int rep = 0; rep < splits; ++rep) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rep)}));

        // Fresh feature noise each repetition.
        std::vector<Eigen::VectorXd> x = data.features;
        if (data.noise_std > 0.0) {
            for (auto& f : x) {
                for (Eigen::Index i = 0; i < f.size(); ++i) {
                    f(i) += rng.normal(0.0, data.noise_std);
                }
            }
        }

        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (int attempt = 0;; ++attempt) {
            for (int i = n - 1; i > 0; --i) {
                std::swap(order[i], order[rng.integer(static_cast<std::uint64_t>(i) + 1)]);
            }
            int train_class[2] = {0, 0};
            for (int i = test_count; i < n; ++i) ++train_class[data.labels[order[i]]];
            if (train_class[0] > 0 && train_class[1] > 0) break;
            if (attempt > 64) throw std::runtime_error("could not draw a two-class train split");
        }
        const std::vector<int> test(order.begin(), order.begin() + test_count);
        const std::vector<int> train(order.begin() + test_count, order.end());
        accs.push_back(logistic_accuracy(x, data.labels, train, test));
    }

    DecodeResult out;
    for (double a : accs) out.mean_accuracy += a;
    out.mean_accuracy /= accs.size();
    double var = 0.0;
    for (double a : accs) var += (a - out.mean_accuracy) * (a - out.mean_accuracy);
    out.sd_accuracy = std::sqrt(var / accs.size());
    return out;
}

DegeneracyReport degeneracy_probe(const Eigen::MatrixXd& target1, const Eigen::MatrixXd& target2,
                                  const TaskSpec& task, int epochs, int n,
                                  const TrainConfig& cfg) {
    const OverlapState s1 = OverlapState::from_full_matrix(Variant::LinearRank1, target1);
    const OverlapState s2 = OverlapState::from_full_matrix(Variant::LinearRank1, target2);
    if ((s1.visible - s2.visible).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument(
            "degeneracy probe requires functional twins (equal visible blocks)");
    }

    DegeneracyReport rep;
    rep.init1 = sample_prescribed(target1, n, derive_seed(cfg.seed, {1}));
    rep.init2 = sample_prescribed(target2, n, derive_seed(cfg.seed, {2}));

    const Eigen::VectorXd probe = impulse_input(cfg.sim);
    auto out_dist = [&](const ParameterVectors& a, const ParameterVectors& b,
                        const Eigen::VectorXd& input) {
        const Eigen::VectorXd y1 = simulate(a, cfg.activation(), input, cfg.sim).output;
        const Eigen::VectorXd y2 = simulate(b, cfg.activation(), input, cfg.sim).output;
        return (y1 - y2).cwiseAbs().maxCoeff();
    };

    rep.pre_dist = out_dist(rep.init1, rep.init2, probe);
    for (int k = 0; k < 3; ++k) {
        Rng rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(k)}));
        Eigen::VectorXd noisy = probe;
        for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy(i) += rng.normal(0.0, 0.1);
        rep.noise_dist = std::max(rep.noise_dist, out_dist(rep.init1, rep.init2, noisy));
    }

    // Train both on the task and track the revealed output divergence.
    ProtocolSpec protocol{{Phase{task, epochs, "train"}}};
    TrainConfig tc = cfg;
    tc.ckpt_every = 1;  // per-epoch parameter checkpoints feed the probe below
    rep.trace1 = train(rep.init1, protocol, tc);
    rep.trace2 = train(rep.init2, protocol, tc);

    const std::size_t steps = std::min(rep.trace1.checkpoints.size(),
                                       rep.trace2.checkpoints.size());
    for (std::size_t i = 0; i < steps; ++i) {
        const auto& c1 = rep.trace1.checkpoints[i];
        const auto& c2 = rep.trace2.checkpoints[i];
        if (!c1.params || !c2.params) continue;
        const double d = out_dist(*c1.params, *c2.params, probe);
        if (d > 1e-3 && rep.first_epoch_above < 0) rep.first_epoch_above = c1.epoch;
        if (c1.epoch <= 50) rep.divergence_at_50 = std::max(rep.divergence_at_50, d);
    }
    for (std::size_t i = 0;
         i < std::min(rep.trace1.records.size(), rep.trace2.records.size()); ++i) {
        rep.max_loss_gap = std::max(
            rep.max_loss_gap, std::abs(rep.trace1.records[i].loss - rep.trace2.records[i].loss));
    }
    return rep;
}

}  // namespace lowrank
