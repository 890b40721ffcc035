#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowrank {

// Architecture variants. Each fixes a partition of the pairwise overlaps into
// the set that determines the within-episode dynamics (visible) and the set
// that only enters the learning metric (invisible).
enum class Variant { LinearRank1, NonlinearRank1, LinearRank2 };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// An overlap is identified by an unordered pair of connectivity vectors.
// Vector ids follow the canonical storage order m, u_1..u_r, v_1..v_r, z.
struct OverlapPair {
    int a, b;
};

struct VariantInfo {
    int rank;
    int num_vectors;  // 2r + 2
    std::vector<OverlapPair> visible;
    std::vector<OverlapPair> invisible;
    std::vector<std::string> visible_names;
    std::vector<std::string> invisible_names;
};

const VariantInfo& variant_info(Variant v);

// Scalar macroscopic state: all pairwise scaled overlaps (1/N)a^T b and scaled
// squared norms, split per variant. Orderings are fixed and are the canonical
// serialization order.
struct OverlapState {
    Variant variant = Variant::LinearRank1;
    Eigen::VectorXd visible;
    Eigen::VectorXd invisible;

    OverlapState() = default;
    OverlapState(Variant v, Eigen::VectorXd vis, Eigen::VectorXd invis);

    // Assembles the full symmetric (2r+2)x(2r+2) matrix of scaled overlaps.
    Eigen::MatrixXd full_matrix() const;
    static OverlapState from_full_matrix(Variant v, const Eigen::MatrixXd& full);

    double& vis(int i) { return visible(i); }
    double vis(int i) const { return visible(i); }
    double& invis(int i) { return invisible(i); }
    double invis(int i) const { return invisible(i); }
};

// Indices into the visible/invisible vectors, per variant layout.
namespace r1 {
// LinearRank1 visible
inline constexpr int kZm = 0, kZu = 1, kVm = 2, kVu = 3;
// LinearRank1 invisible
inline constexpr int kMu = 0, kZv = 1, kMm = 2, kUu = 3, kVv = 4, kZz = 5;
}  // namespace r1

namespace nl1 {
// NonlinearRank1 visible
inline constexpr int kZm = 0, kZu = 1, kVm = 2, kVu = 3, kMu = 4, kMm = 5, kUu = 6;
// NonlinearRank1 invisible
inline constexpr int kZv = 0, kVv = 1, kZz = 2;
}  // namespace nl1

// Gradient of the loss with respect to the visible overlaps, in the same
// ordering as OverlapState::visible.
struct GradientVector {
    Variant variant = Variant::LinearRank1;
    Eigen::VectorXd values;

    GradientVector() = default;
    GradientVector(Variant v, Eigen::VectorXd vals);
};

// Smallest eigenvalue of the full overlap matrix; used for the advisory PSD
// check (threshold: min_eig >= -1e-8 * trace during ODE evolution).
double min_overlap_eigenvalue(const OverlapState& s);
bool psd_ok(const OverlapState& s, double tol_ratio = 1e-8);

struct VariantMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace lowrank
