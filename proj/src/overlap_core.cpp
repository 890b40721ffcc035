#include "lowrank/overlap_core.hpp"

namespace lowrank {

double gram_entry(const Eigen::MatrixXd& full, const OverlapPair& p, const OverlapPair& q) {
    double e = 0.0;
    if (p.a == q.a) e += full(p.b, q.b);
    if (p.a == q.b) e += full(p.b, q.a);
    if (p.b == q.a) e += full(p.a, q.b);
    if (p.b == q.b) e += full(p.a, q.a);
    return e;
}

namespace {

Eigen::MatrixXd gram_block(const OverlapState& s, const std::vector<OverlapPair>& rows,
                           const std::vector<OverlapPair>& cols, double gram_scale_n) {
    if (gram_scale_n <= 0.0) throw std::invalid_argument("gram_scale_n must be positive");
    const Eigen::MatrixXd full = s.full_matrix();
    Eigen::MatrixXd g(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            g(i, j) = gram_entry(full, rows[i], cols[j]) / gram_scale_n;
    return g;
}

}  // namespace

Eigen::MatrixXd gram_visible(const OverlapState& s, double gram_scale_n) {
    const auto& info = variant_info(s.variant);
    return gram_block(s, info.visible, info.visible, gram_scale_n);
}

Eigen::MatrixXd gram_invisible(const OverlapState& s, double gram_scale_n) {
    const auto& info = variant_info(s.variant);
    return gram_block(s, info.invisible, info.visible, gram_scale_n);
}

Eigen::MatrixXd gram_augmented(const OverlapState& s, double gram_scale_n) {
    if (s.variant != Variant::LinearRank1) {
        throw VariantMismatch("gram_augmented requires a LinearRank1 state");
    }
    const auto& info = variant_info(s.variant);
    std::vector<OverlapPair> all = info.visible;
    all.insert(all.end(), info.invisible.begin(), info.invisible.end());
    return gram_block(s, all, all, gram_scale_n);
}

OverlapRates flow_rhs_matrix(const OverlapState& s, const GradientVector& grad,
                             double gram_scale_n) {
    if (grad.variant != s.variant) {
        throw VariantMismatch("gradient variant does not match state");
    }
    OverlapRates r;
    r.visible = -(gram_visible(s, gram_scale_n) * grad.values);
    r.invisible = -(gram_invisible(s, gram_scale_n) * grad.values);
    return r;
}

namespace {

// Explicit scalar equations for the rank-2 21-dim system. Index layout follows
// the canonical orderings in variant_info(LinearRank2).
OverlapRates rank2_scalar_rhs(const OverlapState& s, const GradientVector& grad,
                              double gram_scale_n) {
    const auto& g = grad.values;  // (zm, zu1, zu2, v1m, v2m, v11, v12, v21, v22)
    const double g_zm = g(0);
    const double g_zu[2] = {g(1), g(2)};
    const double g_vm[2] = {g(3), g(4)};
    const double g_vu[2][2] = {{g(5), g(6)}, {g(7), g(8)}};

    const double s_zm = s.vis(0);
    const double s_zu[2] = {s.vis(1), s.vis(2)};
    const double s_vm[2] = {s.vis(3), s.vis(4)};
    const double s_vu[2][2] = {{s.vis(5), s.vis(6)}, {s.vis(7), s.vis(8)}};

    const double s_mu[2] = {s.invis(0), s.invis(1)};
    const double s_zv[2] = {s.invis(2), s.invis(3)};
    const double s_u1u2 = s.invis(4);
    const double s_v1v2 = s.invis(5);
    const double mm = s.invis(6);
    const double uu[2] = {s.invis(7), s.invis(8)};
    const double vv[2] = {s.invis(9), s.invis(10)};
    const double zz = s.invis(11);

    auto s_uu = [&](int j, int k) { return j == k ? uu[j] : s_u1u2; };
    auto s_vv = [&](int i, int k) { return i == k ? vv[i] : s_v1v2; };

    Eigen::VectorXd vis(9), invis(12);

    // d sigma_zm
    double d = (mm + zz) * g_zm;
    for (int j = 0; j < 2; ++j) d += s_mu[j] * g_zu[j];
    for (int i = 0; i < 2; ++i) d += s_zv[i] * g_vm[i];
    vis(0) = -d;

    // d sigma_zu_j
    for (int j = 0; j < 2; ++j) {
        d = s_mu[j] * g_zm + zz * g_zu[j];
        for (int k = 0; k < 2; ++k) d += s_uu(j, k) * g_zu[k];
        for (int i = 0; i < 2; ++i) d += s_zv[i] * g_vu[i][j];
        vis(1 + j) = -d;
    }

    // d sigma_v_i m
    for (int i = 0; i < 2; ++i) {
        d = s_zv[i] * g_zm + mm * g_vm[i];
        for (int k = 0; k < 2; ++k) d += s_vv(i, k) * g_vm[k];
        for (int j = 0; j < 2; ++j) d += s_mu[j] * g_vu[i][j];
        vis(3 + i) = -d;
    }

    // d sigma_v_i u_j
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            d = s_mu[j] * g_vm[i] + s_zv[i] * g_zu[j];
            for (int k = 0; k < 2; ++k) d += s_vv(i, k) * g_vu[k][j];
            for (int l = 0; l < 2; ++l) d += s_uu(j, l) * g_vu[i][l];
            vis(5 + 2 * i + j) = -d;
        }
    }

    // d sigma_mu_j
    for (int j = 0; j < 2; ++j) {
        d = s_zu[j] * g_zm + s_zm * g_zu[j];
        for (int i = 0; i < 2; ++i) d += s_vm[i] * g_vu[i][j] + s_vu[i][j] * g_vm[i];
        invis(j) = -d;
    }

    // d sigma_zv_i
    for (int i = 0; i < 2; ++i) {
        d = s_vm[i] * g_zm + s_zm * g_vm[i];
        for (int j = 0; j < 2; ++j) d += s_zu[j] * g_vu[i][j] + s_vu[i][j] * g_zu[j];
        invis(2 + i) = -d;
    }

    // d sigma_u1u2
    d = s_zu[0] * g_zu[1] + s_zu[1] * g_zu[0];
    for (int i = 0; i < 2; ++i) d += s_vu[i][0] * g_vu[i][1] + s_vu[i][1] * g_vu[i][0];
    invis(4) = -d;

    // d sigma_v1v2
    d = s_vm[0] * g_vm[1] + s_vm[1] * g_vm[0];
    for (int j = 0; j < 2; ++j) d += s_vu[0][j] * g_vu[1][j] + s_vu[1][j] * g_vu[0][j];
    invis(5) = -d;

    // d norms
    d = s_zm * g_zm;
    for (int i = 0; i < 2; ++i) d += s_vm[i] * g_vm[i];
    invis(6) = -2.0 * d;
    for (int j = 0; j < 2; ++j) {
        d = s_zu[j] * g_zu[j];
        for (int i = 0; i < 2; ++i) d += s_vu[i][j] * g_vu[i][j];
        invis(7 + j) = -2.0 * d;
    }
    for (int i = 0; i < 2; ++i) {
        d = s_vm[i] * g_vm[i];
        for (int j = 0; j < 2; ++j) d += s_vu[i][j] * g_vu[i][j];
        invis(9 + i) = -2.0 * d;
    }
    d = s_zm * g_zm;
    for (int j = 0; j < 2; ++j) d += s_zu[j] * g_zu[j];
    invis(11) = -2.0 * d;

    OverlapRates r;
    r.visible = vis / gram_scale_n;
    r.invisible = invis / gram_scale_n;
    return r;
}

}  // namespace

OverlapRates flow_rhs(const OverlapState& s, const GradientVector& grad, double gram_scale_n) {
    if (grad.variant != s.variant) {
        throw VariantMismatch("gradient variant does not match state");
    }
    if (s.variant == Variant::LinearRank2) {
        return rank2_scalar_rhs(s, grad, gram_scale_n);
    }
    return flow_rhs_matrix(s, grad, gram_scale_n);
}

}  // namespace lowrank
