#include "lowrank/full_network.hpp"

#include "lowrank/rng.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace lowrank {

const Eigen::VectorXd& ParameterVectors::vec(int id) const {
    if (id == 0) return m;
    if (id <= rank) return u[id - 1];
    if (id <= 2 * rank) return v[id - rank - 1];
    if (id == 2 * rank + 1) return z;
    throw std::out_of_range("vector id");
}

Eigen::VectorXd& ParameterVectors::vec(int id) {
    return const_cast<Eigen::VectorXd&>(std::as_const(*this).vec(id));
}

namespace {

ParameterVectors make_empty(int n, int rank) {
    ParameterVectors pv;
    pv.n = n;
    pv.rank = rank;
    pv.m.setZero(n);
    pv.z.setZero(n);
    pv.u.assign(rank, Eigen::VectorXd::Zero(n));
    pv.v.assign(rank, Eigen::VectorXd::Zero(n));
    return pv;
}

Eigen::VectorXd draw_normal(int n, Rng& rng) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.normal();
    return x;
}

}  // namespace

ParameterVectors sample_iid_normal(int n, int rank, std::uint64_t seed) {
    if (n < 1 || (rank != 1 && rank != 2)) throw std::invalid_argument("bad n/rank");
    Rng rng(seed);
    ParameterVectors pv = make_empty(n, rank);
    pv.m = draw_normal(n, rng);
    for (int j = 0; j < rank; ++j) pv.u[j] = draw_normal(n, rng);
    for (int j = 0; j < rank; ++j) pv.v[j] = draw_normal(n, rng);
    pv.z = draw_normal(n, rng);
    return pv;
}

ParameterVectors sample_prescribed(const Eigen::MatrixXd& target, int n, std::uint64_t seed) {
    const int k = static_cast<int>(target.rows());
    if (target.cols() != k || (k != 4 && k != 6)) {
        throw std::invalid_argument("target overlap matrix must be 4x4 (rank 1) or 6x6 (rank 2)");
    }
    if ((target - target.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument("target overlap matrix must be symmetric");
    }
    if (n < k) throw std::invalid_argument("n too small for prescribed overlaps");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(target);
    const Eigen::VectorXd evals = es.eigenvalues();
    if (evals.minCoeff() < -1e-10 * std::max(1.0, evals.maxCoeff())) {
        throw std::invalid_argument("target overlap matrix is not PSD");
    }
    // Symmetric factor L with L L^T = target; zero-clipped eigenvalues keep
    // rank-deficient targets (e.g. u = m exactly) working.
    Eigen::MatrixXd factor =
        es.eigenvectors() * evals.cwiseMax(0.0).cwiseSqrt().asDiagonal();

    // Orthonormal rows under the scaled inner product: (1/n) Q Q^T = I.
    Rng rng(seed);
    Eigen::MatrixXd q(k, n);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd w = draw_normal(n, rng);
        for (int attempt = 0;; ++attempt) {
            for (int j = 0; j < i; ++j) w -= (q.row(j).dot(w) / n) * q.row(j).transpose();
            const double norm2 = w.squaredNorm() / n;
            if (norm2 > 1e-12) {
                w /= std::sqrt(norm2);
                break;
            }
            if (attempt > 8) throw std::runtime_error("orthonormalization failed");
            w = draw_normal(n, rng);
        }
        q.row(i) = w.transpose();
    }

    const Eigen::MatrixXd x = factor * q;  // rows realize exactly the target overlaps
    const int rank = (k - 2) / 2;
    ParameterVectors pv = make_empty(n, rank);
    pv.m = x.row(0).transpose();
    for (int j = 0; j < rank; ++j) pv.u[j] = x.row(1 + j).transpose();
    for (int j = 0; j < rank; ++j) pv.v[j] = x.row(1 + rank + j).transpose();
    pv.z = x.row(k - 1).transpose();
    return pv;
}

FullTrajectory simulate(const ParameterVectors& pv, Activation act, const Eigen::VectorXd& input,
                        const SimConfig& cfg, int store_every) {
    const std::size_t K = cfg.steps();
    if (static_cast<std::size_t>(input.size()) != K) {
        throw std::invalid_argument("input length does not match simulation grid");
    }
    const int n = pv.n;
    const double dt = cfg.dt;
    const double alpha = cfg.activation_alpha;
    const double inv_n = 1.0 / n;

    FullTrajectory traj;
    traj.output.setZero(K);
    traj.store_every = store_every;
    if (store_every > 0) traj.h.setZero((K + store_every - 1) / store_every, n);

    Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd phi(n);
    for (std::size_t k = 0; k < K; ++k) {
        if (act == Activation::Identity) {
            phi = h;
        } else {
            phi = (alpha * h.array()).unaryExpr([](double x) { return std::erf(x); }).matrix();
        }
        traj.output(k) = inv_n * pv.z.dot(phi);
        if (store_every > 0 && k % static_cast<std::size_t>(store_every) == 0) {
            traj.h.row(k / store_every) = h.transpose();
        }
        Eigen::VectorXd drive = pv.m * input(k);
        for (int j = 0; j < pv.rank; ++j) drive += pv.u[j] * (inv_n * pv.v[j].dot(phi));
        h += dt * (-h + drive);
        if (!h.allFinite()) throw SimulationDiverged(k);
    }
    return traj;
}

Eigen::MatrixXd full_overlap_matrix(const ParameterVectors& pv) {
    const int k = pv.num_vectors();
    Eigen::MatrixXd full(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) {
            full(i, j) = pv.vec(i).dot(pv.vec(j)) / pv.n;
            full(j, i) = full(i, j);
        }
    return full;
}

OverlapState extract_overlaps(const ParameterVectors& pv, Variant variant) {
    const auto& info = variant_info(variant);
    if (info.num_vectors != pv.num_vectors()) {
        throw VariantMismatch("variant rank does not match parameter vectors");
    }
    return OverlapState::from_full_matrix(variant, full_overlap_matrix(pv));
}

namespace {

Eigen::MatrixXd jacobian_rows(const ParameterVectors& pv, const std::vector<OverlapPair>& pairs) {
    const int n = pv.n;
    const int blocks = pv.num_vectors();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(pairs.size(), static_cast<Eigen::Index>(blocks) * n);
    const double inv_n = 1.0 / n;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto& p = pairs[r];
        // d sigma_ab / d theta: vector b in block a plus vector a in block b
        // (2a in block a for norms), all times 1/N.
        d.row(r).segment(static_cast<Eigen::Index>(p.a) * n, n) += inv_n * pv.vec(p.b).transpose();
        d.row(r).segment(static_cast<Eigen::Index>(p.b) * n, n) += inv_n * pv.vec(p.a).transpose();
    }
    return d;
}

}  // namespace

Eigen::MatrixXd jacobian_visible(const ParameterVectors& pv, Variant variant) {
    const auto& info = variant_info(variant);
    if (info.num_vectors != pv.num_vectors()) throw VariantMismatch("variant/rank mismatch");
    return jacobian_rows(pv, info.visible);
}

Eigen::MatrixXd jacobian_invisible(const ParameterVectors& pv, Variant variant) {
    const auto& info = variant_info(variant);
    if (info.num_vectors != pv.num_vectors()) throw VariantMismatch("variant/rank mismatch");
    return jacobian_rows(pv, info.invisible);
}

Eigen::MatrixXd jacobian_augmented(const ParameterVectors& pv) {
    if (pv.rank != 1) throw VariantMismatch("augmented Jacobian requires rank 1");
    const auto& info = variant_info(Variant::LinearRank1);
    std::vector<OverlapPair> all = info.visible;
    all.insert(all.end(), info.invisible.begin(), info.invisible.end());
    return jacobian_rows(pv, all);
}

Eigen::VectorXd gaussianity_qq(const ParameterVectors& pv) {
    const int n = pv.n;
    if (n < 10) throw std::invalid_argument("gaussianity_qq: need at least 10 samples");
    const boost::math::normal_distribution<double> normal;
    Eigen::VectorXd quant(n);
    for (int i = 0; i < n; ++i) quant(i) = boost::math::quantile(normal, (i + 0.5) / n);
    const double q_mean = quant.mean();
    const double q_sd = std::sqrt((quant.array() - q_mean).square().sum() / n);

    const int k = pv.num_vectors();
    Eigen::VectorXd r(k);
    for (int id = 0; id < k; ++id) {
        std::vector<double> x(pv.vec(id).data(), pv.vec(id).data() + n);
        std::sort(x.begin(), x.end());
        double mean = 0.0;
        for (double xi : x) mean += xi;
        mean /= n;
        double var = 0.0;
        for (double xi : x) var += (xi - mean) * (xi - mean);
        var /= n;
        if (var <= 0.0) throw std::invalid_argument("gaussianity_qq: degenerate constant vector");
        const double sd = std::sqrt(var);
        double cov = 0.0;
        for (int i = 0; i < n; ++i) cov += (x[i] - mean) * (quant(i) - q_mean);
        cov /= n;
        r(id) = cov / (sd * q_sd);
    }
    return r;
}

namespace {

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_doubles_le(std::ostream& os, const Eigen::VectorXd& x) {
    static_assert(std::endian::native == std::endian::little,
                  "big-endian hosts need byte swapping here");
    os.write(reinterpret_cast<const char*>(x.data()),
             static_cast<std::streamsize>(sizeof(double)) * x.size());
}

void read_doubles_le(std::istream& is, Eigen::VectorXd& x) {
    is.read(reinterpret_cast<char*>(x.data()),
            static_cast<std::streamsize>(sizeof(double)) * x.size());
}

}  // namespace

void save_params(const std::string& path, const ParameterVectors& pv) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    const char magic[2] = {'L', 'R'};
    const unsigned char version = 1;
    const unsigned char rank = static_cast<unsigned char>(pv.rank);
    os.write(magic, 2);
    os.write(reinterpret_cast<const char*>(&version), 1);
    os.write(reinterpret_cast<const char*>(&rank), 1);
    write_u32_le(os, static_cast<std::uint32_t>(pv.n));
    write_doubles_le(os, pv.m);
    for (const auto& uj : pv.u) write_doubles_le(os, uj);
    for (const auto& vj : pv.v) write_doubles_le(os, vj);
    write_doubles_le(os, pv.z);
    if (!os) throw std::runtime_error("write failed: " + path);
}

ParameterVectors load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[2];
    unsigned char version = 0, rank = 0;
    is.read(magic, 2);
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    const std::uint32_t n = read_u32_le(is);
    if (!is || magic[0] != 'L' || magic[1] != 'R' || version != 1 || (rank != 1 && rank != 2)) {
        throw std::runtime_error("bad parameter container header: " + path);
    }
    ParameterVectors pv = make_empty(static_cast<int>(n), rank);
    read_doubles_le(is, pv.m);
    for (auto& uj : pv.u) read_doubles_le(is, uj);
    for (auto& vj : pv.v) read_doubles_le(is, vj);
    read_doubles_le(is, pv.z);
    if (!is) throw std::runtime_error("truncated parameter container: " + path);
    return pv;
}

}  // namespace lowrank
