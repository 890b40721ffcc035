#include "lowrank/invariants.hpp"

#include "lowrank/training.hpp"

#include <cmath>

namespace lowrank {

namespace {

// Trace powers of K from the scaled 4x4 Gram over (z, v, m, u) with signature
// S = diag(+1, +1, -1, -1): Tr(K^k) = Tr((S Sigma)^k).
std::array<double, 4> traces_from_gram(const Eigen::Matrix4d& sigma_zvmu) {
    Eigen::Matrix4d s = Eigen::Vector4d(1.0, 1.0, -1.0, -1.0).asDiagonal();
    const Eigen::Matrix4d ks = s * sigma_zvmu;
    std::array<double, 4> c{};
    Eigen::Matrix4d p = ks;
    for (int k = 0; k < 4; ++k) {
        c[k] = p.trace();
        p = p * ks;
    }
    return c;
}

Eigen::Matrix4d zvmu_gram(const Eigen::MatrixXd& full_muvz) {
    // full matrix order is (m, u, v, z); reorder to (z, v, m, u).
    const int idx[4] = {3, 2, 0, 1};
    Eigen::Matrix4d out;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out(i, j) = full_muvz(idx[i], idx[j]);
    return out;
}

}  // namespace

double k_entry(const ParameterVectors& pv, int i, int j) {
    if (pv.rank != 1) throw std::invalid_argument("K is defined for rank-1 parameters");
    if (i < 0 || j < 0 || i >= pv.n || j >= pv.n) throw std::out_of_range("K entry index");
    return (pv.z(i) * pv.z(j) + pv.v[0](i) * pv.v[0](j) - pv.m(i) * pv.m(j) -
            pv.u[0](i) * pv.u[0](j)) /
           pv.n;
}

KSummary compute_K(const ParameterVectors& pv,
                   const std::vector<std::pair<int, int>>& sample_indices) {
    if (pv.rank != 1) throw std::invalid_argument("K is defined for rank-1 parameters");
    KSummary out;
    out.c = traces_from_gram(zvmu_gram(full_overlap_matrix(pv)));
    out.entries.reserve(sample_indices.size());
    for (const auto& [i, j] : sample_indices) out.entries.push_back(k_entry(pv, i, j));
    if (pv.n <= 64) {
        out.K = (pv.z * pv.z.transpose() + pv.v[0] * pv.v[0].transpose() -
                 pv.m * pv.m.transpose() - pv.u[0] * pv.u[0].transpose()) /
                pv.n;
    }
    return out;
}

std::array<double, 4> invariant_traces(const OverlapState& s) {
    if (s.variant == Variant::LinearRank2) {
        throw std::invalid_argument("invariant traces are defined for rank-1 variants");
    }
    return traces_from_gram(zvmu_gram(s.full_matrix()));
}

BalanceResiduals balance_residuals(const OverlapState& s, double a_star, double c_star) {
    const auto& info = variant_info(s.variant);
    if (info.rank != 1) throw std::invalid_argument("balance residuals need a rank-1 state");
    const double zu = s.vis(1), vm = s.vis(2);  // same slots in both rank-1 layouts
    return {zu - vm, zu * vm - a_star * (1.0 - c_star)};
}

ConservationReport conservation_report(const TrainTrace& trace, int from_epoch, int to_epoch,
                                       bool require_entries) {
    std::vector<const EpochRecord*> window;
    for (const auto& r : trace.records) {
        if (r.epoch >= from_epoch && (to_epoch < 0 || r.epoch <= to_epoch)) {
            window.push_back(&r);
        }
    }
    if (window.size() < 2) throw MissingInvariantData("conservation window has < 2 records");
    if (!window.front()->has_invariants) {
        throw MissingInvariantData("trace carries no invariant records (rank-2 run?)");
    }

    ConservationReport rep;
    const auto& base = *window.front();
    rep.has_entries = !base.k_entries.empty();
    if (require_entries && !rep.has_entries) {
        throw MissingInvariantData(
            "sampled K entries need a parameter-space trace; overlap-space runs "
            "carry only the trace invariants");
    }
    if (rep.has_entries) rep.entry_drift.assign(base.k_entries.size(), 0.0);

    for (const auto* r : window) {
        for (int k = 0; k < 4; ++k) {
            const double d = std::abs(r->c[k] - base.c[k]) / (1.0 + std::abs(base.c[k]));
            rep.c_drift[k] = std::max(rep.c_drift[k], d);
        }
        if (rep.has_entries) {
            for (std::size_t i = 0; i < rep.entry_drift.size() && i < r->k_entries.size(); ++i) {
                const double d = std::abs(r->k_entries[i] - base.k_entries[i]) /
                                 (1.0 + std::abs(base.k_entries[i]));
                rep.entry_drift[i] = std::max(rep.entry_drift[i], d);
            }
        }
    }
    for (int k = 0; k < 4; ++k) rep.max_c_drift = std::max(rep.max_c_drift, rep.c_drift[k]);
    for (double d : rep.entry_drift) rep.max_entry_drift = std::max(rep.max_entry_drift, d);
    return rep;
}

}  // namespace lowrank
