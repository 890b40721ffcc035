#include "lowrank/overlaps.hpp"

#include <Eigen/Eigenvalues>

namespace lowrank {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::LinearRank1: return "linear_rank1";
        case Variant::NonlinearRank1: return "nonlinear_rank1";
        case Variant::LinearRank2: return "linear_rank2";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "linear_rank1") return Variant::LinearRank1;
    if (name == "nonlinear_rank1") return Variant::NonlinearRank1;
    if (name == "linear_rank2") return Variant::LinearRank2;
    throw std::invalid_argument("unknown variant: " + name);
}

namespace {

// Vector ids: rank 1 -> m=0, u=1, v=2, z=3; rank 2 -> m=0, u1=1, u2=2, v1=3, v2=4, z=5.
VariantInfo make_linear_r1() {
    VariantInfo info;
    info.rank = 1;
    info.num_vectors = 4;
    info.visible = {{3, 0}, {3, 1}, {2, 0}, {2, 1}};
    info.invisible = {{0, 1}, {3, 2}, {0, 0}, {1, 1}, {2, 2}, {3, 3}};
    info.visible_names = {"sigma_zm", "sigma_zu", "sigma_vm", "sigma_vu"};
    info.invisible_names = {"sigma_mu", "sigma_zv", "norm2_m", "norm2_u", "norm2_v", "norm2_z"};
    return info;
}

VariantInfo make_nonlinear_r1() {
    VariantInfo info;
    info.rank = 1;
    info.num_vectors = 4;
    info.visible = {{3, 0}, {3, 1}, {2, 0}, {2, 1}, {0, 1}, {0, 0}, {1, 1}};
    info.invisible = {{3, 2}, {2, 2}, {3, 3}};
    info.visible_names = {"sigma_zm", "sigma_zu", "sigma_vm", "sigma_vu",
                          "sigma_mu", "norm2_m",  "norm2_u"};
    info.invisible_names = {"sigma_zv", "norm2_v", "norm2_z"};
    return info;
}

VariantInfo make_linear_r2() {
    VariantInfo info;
    info.rank = 2;
    info.num_vectors = 6;
    info.visible = {{5, 0}, {5, 1}, {5, 2}, {3, 0}, {4, 0}, {3, 1}, {3, 2}, {4, 1}, {4, 2}};
    info.invisible = {{0, 1}, {0, 2}, {5, 3}, {5, 4}, {1, 2}, {3, 4},
                      {0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}};
    info.visible_names = {"sigma_zm",   "sigma_zu1",  "sigma_zu2",
                          "sigma_v1m",  "sigma_v2m",  "sigma_v1u1",
                          "sigma_v1u2", "sigma_v2u1", "sigma_v2u2"};
    info.invisible_names = {"sigma_mu1", "sigma_mu2", "sigma_zv1", "sigma_zv2",
                            "sigma_u1u2", "sigma_v1v2", "norm2_m",  "norm2_u1",
                            "norm2_u2",   "norm2_v1",   "norm2_v2", "norm2_z"};
    return info;
}

}  // namespace

const VariantInfo& variant_info(Variant v) {
    static const VariantInfo lin_r1 = make_linear_r1();
    static const VariantInfo nl_r1 = make_nonlinear_r1();
    static const VariantInfo lin_r2 = make_linear_r2();
    switch (v) {
        case Variant::LinearRank1: return lin_r1;
        case Variant::NonlinearRank1: return nl_r1;
        case Variant::LinearRank2: return lin_r2;
    }
    throw std::logic_error("bad variant");
}

OverlapState::OverlapState(Variant v, Eigen::VectorXd vis, Eigen::VectorXd invis)
    : variant(v), visible(std::move(vis)), invisible(std::move(invis)) {
    const auto& info = variant_info(v);
    if (visible.size() != static_cast<Eigen::Index>(info.visible.size()) ||
        invisible.size() != static_cast<Eigen::Index>(info.invisible.size())) {
        throw std::invalid_argument("overlap state dimensions do not match variant " +
                                    variant_name(v));
    }
}

Eigen::MatrixXd OverlapState::full_matrix() const {
    const auto& info = variant_info(variant);
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(info.num_vectors, info.num_vectors);
    auto put = [&full](const OverlapPair& p, double value) {
        full(p.a, p.b) = value;
        full(p.b, p.a) = value;
    };
    for (std::size_t i = 0; i < info.visible.size(); ++i) put(info.visible[i], visible(i));
    for (std::size_t i = 0; i < info.invisible.size(); ++i) put(info.invisible[i], invisible(i));
    return full;
}

OverlapState OverlapState::from_full_matrix(Variant v, const Eigen::MatrixXd& full) {
    const auto& info = variant_info(v);
    if (full.rows() != info.num_vectors || full.cols() != info.num_vectors) {
        throw std::invalid_argument("full overlap matrix has wrong size");
    }
    OverlapState s;
    s.variant = v;
    s.visible.resize(info.visible.size());
    s.invisible.resize(info.invisible.size());
    for (std::size_t i = 0; i < info.visible.size(); ++i)
        s.visible(i) = full(info.visible[i].a, info.visible[i].b);
    for (std::size_t i = 0; i < info.invisible.size(); ++i)
        s.invisible(i) = full(info.invisible[i].a, info.invisible[i].b);
    return s;
}

GradientVector::GradientVector(Variant v, Eigen::VectorXd vals)
    : variant(v), values(std::move(vals)) {
    const auto& info = variant_info(v);
    if (values.size() != static_cast<Eigen::Index>(info.visible.size())) {
        throw std::invalid_argument("gradient dimension does not match variant");
    }
}

double min_overlap_eigenvalue(const OverlapState& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.full_matrix(), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool psd_ok(const OverlapState& s, double tol_ratio) {
    const Eigen::MatrixXd full = s.full_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol_ratio * std::max(full.trace(), 1.0);
}

}  // namespace lowrank
