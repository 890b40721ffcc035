#pragma once

#include "lowrank/full_network.hpp"
#include "lowrank/overlaps.hpp"
#include "lowrank/rng.hpp"

#include <Eigen/Dense>

namespace lowrank::test {

// Random realizable state: draw vectors with per-vector scales and extract.
inline ParameterVectors random_params(int n, int rank, std::uint64_t seed,
                                      double scale_lo = 0.6, double scale_hi = 1.5) {
    ParameterVectors pv = sample_iid_normal(n, rank, seed);
    Rng rng(derive_seed(seed, {0x5ca1e}));
    pv.m *= rng.uniform(scale_lo, scale_hi);
    pv.z *= rng.uniform(scale_lo, scale_hi);
    for (auto& u : pv.u) u *= rng.uniform(scale_lo, scale_hi);
    for (auto& v : pv.v) v *= rng.uniform(scale_lo, scale_hi);
    return pv;
}

inline OverlapState random_state(Variant variant, int n, std::uint64_t seed) {
    const int rank = variant_info(variant).rank;
    return extract_overlaps(random_params(n, rank, seed), variant);
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double denom = std::max({a.norm(), b.norm(), 1e-300});
    return (a - b).norm() / denom;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace lowrank::test
