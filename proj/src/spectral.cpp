#include "dicke/spectral.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <Eigen/Sparse>
#include <lapacke.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dicke {

namespace {

constexpr double kOrthoTol = 1e-10;
constexpr double kResidualTol = 1e-8;

[[noreturn]] void lapack_failure(const char* routine, lapack_int info, const ModelParams& p, int parity) {
    throw NumericalFailure(std::string(routine) + " failed (info=" + std::to_string(info) + ") in parity " +
                           (parity > 0 ? "+1" : "-1") + " sector for " + p.canonical());
}

// Sparse sector Hamiltonian in sector_basis order; only used for verification.
Eigen::SparseMatrix<double> sparse_sector_hamiltonian(const ModelParams& p, const std::vector<Index>& basis) {
    std::vector<Index> position(static_cast<std::size_t>(p.dimension()), -1);
    for (std::size_t k = 0; k < basis.size(); ++k) position[static_cast<std::size_t>(basis[k])] = static_cast<Index>(k);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(basis.size() * 5);
    const double j = p.j();
    const double g = p.lambda / std::sqrt(static_cast<double>(p.n_atoms));
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const auto b = BasisIndex::from_flat(p, basis[k]);
        const auto row = static_cast<Index>(k);
        trips.emplace_back(row, row, p.omega0 * b.m(p) + p.omega * b.n_photons);
        if (p.lambda == 0.0 || b.m_index >= p.n_atoms) continue;
        const double c = g * ladder_coefficient(j, b.m(p));
        auto link = [&](int n2, double v) {
            const Index col = position[static_cast<std::size_t>(BasisIndex{b.m_index + 1, n2}.flat(p))];
            trips.emplace_back(row, col, v);
            trips.emplace_back(col, row, v);
        };
        if (b.n_photons + 1 <= p.n_max) link(b.n_photons + 1, c * std::sqrt(b.n_photons + 1.0));
        if (b.n_photons >= 1) link(b.n_photons - 1, c * std::sqrt(static_cast<double>(b.n_photons)));
    }
    Eigen::SparseMatrix<double> H(static_cast<Index>(basis.size()), static_cast<Index>(basis.size()));
    H.setFromTriplets(trips.begin(), trips.end());
    return H;
}

struct SectorSolution {
    Eigen::VectorXd values;
    SectorVectors vectors;
    Index first{0};
};

// Photon-major ordering makes the sector Hamiltonian banded with bandwidth
// about N/2 + 1, so eigenvalues alone come from a cheap band reduction.
Eigen::VectorXd sector_eigenvalues_banded(const ModelParams& p, int parity) {
    std::vector<Index> order;
    for (int n = 0; n <= p.n_max; ++n) {
        for (int mi = 0; mi <= p.n_atoms; ++mi) {
            if (BasisIndex{mi, n}.parity() == parity) order.push_back(BasisIndex{mi, n}.flat(p));
        }
    }
    const auto n = static_cast<lapack_int>(order.size());
    if (n == 0) return {};
    std::vector<Index> position(static_cast<std::size_t>(p.dimension()), -1);
    for (std::size_t k = 0; k < order.size(); ++k) position[static_cast<std::size_t>(order[k])] = static_cast<Index>(k);

    const double j = p.j();
    const double g = p.lambda / std::sqrt(static_cast<double>(p.n_atoms));
    Index kd = 0;
    struct Entry { Index r, c; double v; };
    std::vector<Entry> off;
    for (int mi = 0; mi < p.n_atoms; ++mi) {
        const double c = g * ladder_coefficient(j, mi - j);
        for (int q = 0; q <= p.n_max; ++q) {
            if (BasisIndex{mi, q}.parity() != parity || c == 0.0) continue;
            const Index a = position[static_cast<std::size_t>(BasisIndex{mi, q}.flat(p))];
            auto add = [&](int q2, double v) {
                const Index b = position[static_cast<std::size_t>(BasisIndex{mi + 1, q2}.flat(p))];
                off.push_back({std::max(a, b), std::min(a, b), v});
                kd = std::max(kd, std::abs(a - b));
            };
            if (q + 1 <= p.n_max) add(q + 1, c * std::sqrt(q + 1.0));
            if (q >= 1) add(q - 1, c * std::sqrt(static_cast<double>(q)));
        }
    }
    const lapack_int ldab = static_cast<lapack_int>(kd) + 1;
    std::vector<double> ab(static_cast<std::size_t>(ldab) * static_cast<std::size_t>(n), 0.0);
    // Lower band storage: ab(i - k, k) = A(i, k) for k <= i <= k + kd.
    auto at = [&](Index i, Index k) -> double& { return ab[static_cast<std::size_t>(k * ldab + (i - k))]; };
    for (lapack_int k = 0; k < n; ++k) {
        const auto b = BasisIndex::from_flat(p, order[static_cast<std::size_t>(k)]);
        at(k, k) = p.omega0 * b.m(p) + p.omega * b.n_photons;
    }
    for (const auto& e : off) at(e.r, e.c) = e.v;

    std::vector<double> d(static_cast<std::size_t>(n)), e(static_cast<std::size_t>(std::max<lapack_int>(n, 1)));
    lapack_int info = LAPACKE_dsbtrd(LAPACK_COL_MAJOR, 'N', 'L', n, static_cast<lapack_int>(kd), ab.data(), ldab,
                                     d.data(), e.data(), nullptr, 1);
    if (info != 0) lapack_failure("dsbtrd", info, p, parity);
    info = LAPACKE_dsterf(n, d.data(), e.data());
    if (info != 0) lapack_failure("dsterf", info, p, parity);
    return Eigen::Map<Eigen::VectorXd>(d.data(), n);
}

SectorSolution solve_sector(const ModelParams& p, int parity, const DiagonalizeOptions& opts) {
    SectorSolution out;
    out.vectors.parity = parity;
    out.vectors.basis = sector_basis(p, parity);
    const auto n = static_cast<lapack_int>(out.vectors.basis.size());
    if (n == 0) {
        out.vectors.vectors.resize(0, 0);
        return out;
    }

    const bool want_vectors = opts.vector_energy_min <= opts.vector_energy_max;
    if (!want_vectors) {
        out.values = sector_eigenvalues_banded(p, parity);
        out.vectors.vectors.resize(n, 0);
        return out;
    }

    Eigen::MatrixXd A = build_sector_hamiltonian(p, parity, opts.max_bytes);
    std::vector<double> d(static_cast<std::size_t>(n)), e(static_cast<std::size_t>(n), 0.0),
        tau(static_cast<std::size_t>(std::max<lapack_int>(n - 1, 1)));
    lapack_int info = LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n, A.data(), n, d.data(), e.data(), tau.data());
    if (info != 0) lapack_failure("dsytrd", info, p, parity);

    std::vector<double> dv = d, ev = e;
    info = LAPACKE_dsterf(n, dv.data(), ev.data());
    if (info != 0) lapack_failure("dsterf", info, p, parity);
    out.values = Eigen::Map<Eigen::VectorXd>(dv.data(), n);

    const auto lo = std::lower_bound(dv.begin(), dv.end(), opts.vector_energy_min) - dv.begin();
    const auto hi = std::upper_bound(dv.begin(), dv.end(), opts.vector_energy_max) - dv.begin();
    const auto K = static_cast<lapack_int>(std::max<Index>(hi - lo, 0));
    out.first = lo;
    if (K == 0) {
        out.vectors.vectors.resize(n, 0);
        return out;
    }

    check_dense_capacity(n, K, opts.max_bytes);
    Eigen::MatrixXd Z(n, K);
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(K));
    lapack_int found = 0;
    lapack_logical tryrac = 1;
    info = LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0, 0.0,
                          static_cast<lapack_int>(lo) + 1, static_cast<lapack_int>(lo) + K, &found, w.data(),
                          Z.data(), n, K, isuppz.data(), &tryrac);
    if (info != 0) lapack_failure("dstemr", info, p, parity);
    if (found != K) lapack_failure("dstemr (eigenvector count)", found, p, parity);
    info = LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', n, K, A.data(), n, tau.data(), Z.data(), n);
    if (info != 0) lapack_failure("dormtr", info, p, parity);
    A.resize(0, 0);

    // Deterministic sign: the largest-magnitude component (first on ties) is positive.
    for (Index c = 0; c < K; ++c) {
        Index arg = 0;
        Z.col(c).cwiseAbs().maxCoeff(&arg);
        if (Z(arg, c) < 0.0) Z.col(c) *= -1.0;
    }
    out.vectors.vectors = std::move(Z);
    return out;
}

} // namespace

// --------------------------------------------------------------------------

SpectralData SpectralData::assemble(const ModelParams& p, std::array<Eigen::VectorXd, 2> sector_values,
                                    std::array<SectorVectors, 2> vectors, std::array<Index, 2> first_vector,
                                    double window_min, double window_max) {
    SpectralData s;
    s.params_ = p;
    const Index D = sector_values[0].size() + sector_values[1].size();
    if (D != p.dimension()) throw InvalidParams("assemble: sector sizes do not add up to the dimension");
    s.eigenvalues_.resize(D);
    s.parities_.resize(static_cast<std::size_t>(D));
    s.sector_.resize(static_cast<std::size_t>(D));
    s.column_.assign(static_cast<std::size_t>(D), -1);

    std::array<Index, 2> next{0, 0};
    Index begin = -1, end = -1;
    for (Index n = 0; n < D; ++n) {
        int slot;
        if (next[0] >= sector_values[0].size()) slot = 1;
        else if (next[1] >= sector_values[1].size()) slot = 0;
        else slot = sector_values[1](next[1]) < sector_values[0](next[0]) ? 1 : 0;
        const Index k = next[static_cast<std::size_t>(slot)]++;
        const auto su = static_cast<std::size_t>(slot);
        const auto nu = static_cast<std::size_t>(n);
        s.eigenvalues_(n) = sector_values[su](k);
        s.parities_[nu] = slot == 0 ? 1 : -1;
        s.sector_[nu] = slot;
        const Index col = k - first_vector[su];
        if (col >= 0 && col < vectors[su].vectors.cols()) {
            s.column_[nu] = col;
            if (begin < 0) begin = n;
            if (end >= 0 && end != n) throw NumericalFailure("eigenvector window is not contiguous");
            end = n + 1;
        }
    }
    s.vector_begin_ = begin < 0 ? 0 : begin;
    s.vector_end_ = begin < 0 ? 0 : end;
    s.sectors_ = std::move(vectors);
    s.window_min_ = window_min;
    s.window_max_ = window_max;
    return s;
}

Eigen::VectorXd SpectralData::eigenvector(Index n) const {
    if (!has_vector(n)) throw std::out_of_range("no eigenvector stored for index " + std::to_string(n));
    const auto& sec = sector(sector_of(n));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension());
    const Index c = column_of(n);
    for (std::size_t k = 0; k < sec.basis.size(); ++k) v(sec.basis[k]) = sec.vectors(static_cast<Index>(k), c);
    return v;
}

Eigen::VectorXcd SpectralData::project(const Eigen::VectorXcd& psi) const {
    if (psi.size() != dimension()) throw InvalidPairing("project: state dimension does not match spectrum");
    Eigen::VectorXcd out(vector_count());
    for (int s = 0; s < 2; ++s) {
        const auto& sec = sector(s);
        if (sec.vectors.cols() == 0) continue;
        const auto m = static_cast<Index>(sec.basis.size());
        Eigen::VectorXd re(m), im(m);
        for (Index k = 0; k < m; ++k) {
            const cplx a = psi(sec.basis[static_cast<std::size_t>(k)]);
            re(k) = a.real();
            im(k) = a.imag();
        }
        const Eigen::VectorXd cr = sec.vectors.transpose() * re;
        const Eigen::VectorXd ci = sec.vectors.transpose() * im;
        for (Index n = vector_begin_; n < vector_end_; ++n) {
            if (sector_of(n) != s) continue;
            out(n - vector_begin_) = cplx(cr(column_of(n)), ci(column_of(n)));
        }
    }
    return out;
}

Eigen::VectorXcd SpectralData::synthesize(const Eigen::VectorXcd& c) const {
    if (c.size() != vector_count()) throw InvalidPairing("synthesize: coefficient count does not match spectrum");
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dimension());
    for (int s = 0; s < 2; ++s) {
        const auto& sec = sector(s);
        if (sec.vectors.cols() == 0) continue;
        Eigen::VectorXd cr = Eigen::VectorXd::Zero(sec.vectors.cols());
        Eigen::VectorXd ci = Eigen::VectorXd::Zero(sec.vectors.cols());
        for (Index n = vector_begin_; n < vector_end_; ++n) {
            if (sector_of(n) != s) continue;
            cr(column_of(n)) = c(n - vector_begin_).real();
            ci(column_of(n)) = c(n - vector_begin_).imag();
        }
        const Eigen::VectorXd re = sec.vectors * cr;
        const Eigen::VectorXd im = sec.vectors * ci;
        for (std::size_t k = 0; k < sec.basis.size(); ++k) {
            out(sec.basis[k]) = cplx(re(static_cast<Index>(k)), im(static_cast<Index>(k)));
        }
    }
    return out;
}

Eigen::VectorXd SpectralData::diagonal_expectations(const Eigen::VectorXd& diag) const {
    if (diag.size() != dimension()) throw InvalidParams("diagonal_expectations: operator dimension mismatch");
    Eigen::VectorXd out(vector_count());
    std::array<Eigen::VectorXd, 2> per;
    for (int s = 0; s < 2; ++s) {
        const auto& sec = sector(s);
        Eigen::VectorXd d(static_cast<Index>(sec.basis.size()));
        for (std::size_t k = 0; k < sec.basis.size(); ++k) d(static_cast<Index>(k)) = diag(sec.basis[k]);
        per[static_cast<std::size_t>(s)] = sec.vectors.cols() == 0
                                               ? Eigen::VectorXd()
                                               : Eigen::VectorXd(sec.vectors.array().square().matrix().transpose() * d);
    }
    for (Index n = vector_begin_; n < vector_end_; ++n) {
        out(n - vector_begin_) = per[static_cast<std::size_t>(sector_of(n))](column_of(n));
    }
    return out;
}

double SpectralData::orthonormality_error() const {
    // Columns of different sectors have disjoint support, so only intra-sector
    // products can deviate; those are formed panel by panel to bound memory.
    double worst = 0.0;
    constexpr Index panel = 512;
    for (int s = 0; s < 2; ++s) {
        const auto& V = sector(s).vectors;
        for (Index c0 = 0; c0 < V.cols(); c0 += panel) {
            const Index w = std::min(panel, V.cols() - c0);
            Eigen::MatrixXd G = V.transpose() * V.middleCols(c0, w);
            for (Index c = 0; c < w; ++c) G(c0 + c, c) -= 1.0;
            worst = std::max(worst, G.cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

double SpectralData::residual_error() const {
    const double scale = std::max(eigenvalues_.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    double worst = 0.0;
    constexpr Index panel = 512;
    for (int s = 0; s < 2; ++s) {
        const auto& sec = sector(s);
        if (sec.vectors.cols() == 0) continue;
        const auto H = sparse_sector_hamiltonian(params_, sec.basis);
        std::vector<double> lambda(static_cast<std::size_t>(sec.vectors.cols()));
        for (Index n = vector_begin_; n < vector_end_; ++n) {
            if (sector_of(n) == s) lambda[static_cast<std::size_t>(column_of(n))] = eigenvalues_(n);
        }
        for (Index c0 = 0; c0 < sec.vectors.cols(); c0 += panel) {
            const Index w = std::min(panel, sec.vectors.cols() - c0);
            Eigen::MatrixXd R = H * sec.vectors.middleCols(c0, w);
            for (Index c = 0; c < w; ++c) R.col(c) -= lambda[static_cast<std::size_t>(c0 + c)] * sec.vectors.col(c0 + c);
            worst = std::max(worst, R.cwiseAbs().maxCoeff());
        }
    }
    return worst / scale;
}

SpectralData diagonalize(const ModelParams& p, const DiagonalizeOptions& opts) {
    p.validate();
    std::array<SectorSolution, 2> sol{solve_sector(p, 1, opts), solve_sector(p, -1, opts)};
    const bool want_vectors = opts.vector_energy_min <= opts.vector_energy_max;
    // An eigenvalues-only result records the empty window (+inf, -inf).
    const double wmin = want_vectors ? opts.vector_energy_min : std::numeric_limits<double>::infinity();
    const double wmax = want_vectors ? opts.vector_energy_max : -std::numeric_limits<double>::infinity();
    auto s = SpectralData::assemble(p, {std::move(sol[0].values), std::move(sol[1].values)},
                                    {std::move(sol[0].vectors), std::move(sol[1].vectors)},
                                    {sol[0].first, sol[1].first}, wmin, wmax);
    if (opts.verify && s.vector_count() > 0) {
        const double ortho = s.orthonormality_error();
        if (!(ortho <= kOrthoTol)) {
            throw NumericalFailure("eigenvector orthonormality error " + format_double(ortho) + " for " + p.canonical());
        }
        const double res = s.residual_error();
        if (!(res <= kResidualTol)) {
            throw NumericalFailure("eigenpair residual " + format_double(res) + " for " + p.canonical());
        }
    }
    return s;
}

// --------------------------------------------------------------------------

LowestEigenpair lowest_eigenpair(const ModelParams& p, int parity, double tol, int max_iter) {
    p.validate();
    const auto basis = sector_basis(p, parity);
    const auto m = static_cast<Index>(basis.size());
    LowestEigenpair out;
    out.vector = Eigen::VectorXd::Zero(p.dimension());
    if (m == 0) throw InvalidParams("lowest_eigenpair: empty parity sector");
    const auto H = sparse_sector_hamiltonian(p, basis);
    const int kmax = static_cast<int>(std::min<Index>(max_iter, m));

    // Start from a smooth positive vector that overlaps every low state.
    Eigen::VectorXd q(m);
    for (Index k = 0; k < m; ++k) {
        const auto b = BasisIndex::from_flat(p, basis[static_cast<std::size_t>(k)]);
        q(k) = 1.0 / (1.0 + b.n_photons + b.m_index);
    }
    q.normalize();
    Eigen::MatrixXd Q(m, kmax);
    std::vector<double> alpha, beta;
    double prev = std::numeric_limits<double>::infinity();
    Eigen::VectorXd y;
    double theta = 0.0;
    for (int k = 0; k < kmax; ++k) {
        Q.col(k) = q;
        Eigen::VectorXd r = H * q;
        alpha.push_back(q.dot(r));
        r -= alpha.back() * q;
        if (k > 0) r -= beta.back() * Q.col(k - 1);
        // Full reorthogonalization, twice.
        for (int pass = 0; pass < 2; ++pass) r -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * r);
        const double b = r.norm();

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k + 1, k + 1);
        for (int i = 0; i <= k; ++i) {
            T(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i < k) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        theta = es.eigenvalues()(0);
        y = es.eigenvectors().col(0);
        out.iterations = k + 1;
        const double resid = b * std::abs(y(k));
        if (resid <= tol * std::max(1.0, std::abs(theta)) || b <= 1e-14 * std::max(1.0, std::abs(theta)) ||
            (k > 0 && std::abs(theta - prev) <= 1e-15 * std::abs(theta) && resid <= 1e3 * tol * std::max(1.0, std::abs(theta)))) {
            break;
        }
        prev = theta;
        beta.push_back(b);
        q = r / b;
    }
    Eigen::VectorXd v = Q.leftCols(out.iterations) * y;
    v.normalize();
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.energy = v.dot(H * v);
    for (Index k = 0; k < m; ++k) out.vector(basis[static_cast<std::size_t>(k)]) = v(k);
    return out;
}

int top_shell_count(int n_max) noexcept {
    return std::max(1, static_cast<int>(std::ceil(0.05 * (n_max + 1))));
}

double photon_tail_weight(const ModelParams& p, const Eigen::VectorXcd& psi, int top_shells) {
    if (psi.size() != p.dimension()) throw InvalidParams("photon_tail_weight: state dimension mismatch");
    const int first = std::max(0, p.n_max + 1 - top_shells);
    double w = 0.0;
    for (int mi = 0; mi <= p.n_atoms; ++mi) {
        for (int n = first; n <= p.n_max; ++n) w += std::norm(psi(BasisIndex{mi, n}.flat(p)));
    }
    return w;
}

ConvergenceReport certify_cutoff(const ModelParams& p, const Eigen::VectorXcd& probe, double tol) {
    p.validate();
    ConvergenceReport r;
    r.n_max_used = p.n_max;
    r.n_max_extended = static_cast<int>(std::ceil(1.25 * p.n_max));
    if (r.n_max_extended == p.n_max) r.n_max_extended = p.n_max + 1;
    r.top_shells = top_shell_count(p.n_max);
    r.tolerance = tol;
    r.probe_tail_weight = photon_tail_weight(p, probe, r.top_shells);

    auto ground = [](const ModelParams& q) {
        if (q.lambda == 0.0) {
            // Uncoupled: |j,-j> x |0> at exactly -j*omega0 for every cutoff.
            LowestEigenpair e;
            e.energy = -q.j() * q.omega0;
            e.vector = Eigen::VectorXd::Zero(q.dimension());
            e.vector(0) = 1.0;
            return e;
        }
        LowestEigenpair best = lowest_eigenpair(q, 1);
        if (q.dimension() > 1) {
            LowestEigenpair other = lowest_eigenpair(q, -1);
            if (other.energy < best.energy) best = std::move(other);
        }
        return best;
    };
    const auto g0 = ground(p);
    const auto g1 = ground(p.with_cutoff(r.n_max_extended));
    r.ground_energy = g0.energy;
    r.ground_tail_weight = photon_tail_weight(p, g0.vector.cast<cplx>(), r.top_shells);
    r.tail_weight = std::max(r.probe_tail_weight, r.ground_tail_weight);
    r.ground_energy_shift = std::abs(g0.energy - g1.energy);
    r.passed = r.tail_weight < tol && r.ground_energy_shift < tol * p.omega;
    return r;
}

// --------------------------------------------------------------------------

std::uint64_t params_hash(const ModelParams& p) {
    // FNV-1a, 64 bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : p.canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[8] = {'D', 'I', 'C', 'K', 'S', 'P', 'E', 'C'};
static_assert(std::endian::native == std::endian::little, "cache I/O assumes a little-endian host");

class CrcWriter {
public:
    explicit CrcWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    }
    void put(const void* data, std::size_t bytes) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
        crc_ = crc32_z(crc_, static_cast<const Bytef*>(data), bytes);
    }
    template <class T> void put(T v) { put(&v, sizeof(T)); }
    void finish(const std::filesystem::path& path) {
        const auto c = static_cast<std::uint32_t>(crc_);
        out_.write(reinterpret_cast<const char*>(&c), sizeof(c));
        out_.close();
        if (!out_) throw IoError("write failed for " + path.string());
    }

private:
    std::ofstream out_;
    uLong crc_{crc32_z(0L, Z_NULL, 0)};
};

class CrcReader {
public:
    explicit CrcReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw CacheCorruption("cannot open cache file " + path.string());
    }
    void get(void* data, std::size_t bytes) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
        if (static_cast<std::size_t>(in_.gcount()) != bytes) throw CacheCorruption("truncated cache file " + path_.string());
        crc_ = crc32_z(crc_, static_cast<const Bytef*>(data), bytes);
    }
    template <class T> T get() { T v; get(&v, sizeof(T)); return v; }
    void check_trailer() {
        std::uint32_t stored = 0;
        in_.read(reinterpret_cast<char*>(&stored), sizeof(stored));
        if (in_.gcount() != sizeof(stored)) throw CacheCorruption("missing checksum in " + path_.string());
        if (stored != static_cast<std::uint32_t>(crc_)) throw CacheCorruption("checksum mismatch in " + path_.string());
    }

private:
    std::ifstream in_;
    std::filesystem::path path_;
    uLong crc_{crc32_z(0L, Z_NULL, 0)};
};

} // namespace

void write_spectral_file(const SpectralData& s, const std::filesystem::path& path) {
    const auto& p = s.params();
    const auto D = static_cast<std::uint32_t>(s.dimension());
    const bool full = s.complete();
    CrcWriter w(path);
    w.put(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(full ? 1u : 2u);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.n_atoms));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.n_max));
    w.put<double>(p.omega);
    w.put<double>(p.omega0);
    w.put<double>(p.lambda);
    w.put<std::uint32_t>(D);
    if (!full) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s.vector_begin()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s.vector_count()));
        w.put<double>(s.window_min());
        w.put<double>(s.window_max());
    }
    w.put(s.eigenvalues().data(), sizeof(double) * D);
    std::vector<std::int8_t> par(D);
    for (std::uint32_t n = 0; n < D; ++n) par[n] = static_cast<std::int8_t>(s.parities()[n]);
    w.put(par.data(), par.size());

    std::vector<double> column;
    for (Index n = s.vector_begin(); n < s.vector_end(); ++n) {
        const auto& sec = s.sector(s.sector_of(n));
        const Index c = s.column_of(n);
        if (full) {
            column.assign(D, 0.0);
            for (std::size_t k = 0; k < sec.basis.size(); ++k) {
                column[static_cast<std::size_t>(sec.basis[k])] = sec.vectors(static_cast<Index>(k), c);
            }
            w.put(column.data(), sizeof(double) * D);
        } else {
            w.put(sec.vectors.col(c).data(), sizeof(double) * sec.basis.size());
        }
    }
    w.finish(path);
}

SpectralData read_spectral_file(const std::filesystem::path& path) {
    CrcReader r(path);
    char magic[8];
    r.get(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CacheCorruption("bad magic in " + path.string());
    const auto version = r.get<std::uint32_t>();
    if (version != 1 && version != 2) throw CacheCorruption("unsupported cache version in " + path.string());
    ModelParams p;
    p.n_atoms = static_cast<int>(r.get<std::uint32_t>());
    p.n_max = static_cast<int>(r.get<std::uint32_t>());
    p.omega = r.get<double>();
    p.omega0 = r.get<double>();
    p.lambda = r.get<double>();
    try {
        p.validate();
    } catch (const std::exception& e) {
        throw CacheCorruption("invalid parameters in " + path.string() + ": " + e.what());
    }
    const auto D = r.get<std::uint32_t>();
    if (static_cast<Index>(D) != p.dimension()) throw CacheCorruption("dimension mismatch in " + path.string());

    std::uint32_t first = 0, count = D;
    double wmin = -std::numeric_limits<double>::infinity(), wmax = std::numeric_limits<double>::infinity();
    if (version == 2) {
        first = r.get<std::uint32_t>();
        count = r.get<std::uint32_t>();
        wmin = r.get<double>();
        wmax = r.get<double>();
        if (std::uint64_t{first} + count > D) throw CacheCorruption("bad vector window in " + path.string());
    }
    const auto bytes = std::filesystem::file_size(path);
    std::uint64_t expected = 8 + 4 * 4 + 8 * 3 + (version == 2 ? 4 * 2 + 8 * 2 : 0) + std::uint64_t{D} * 9 + 4;
    // Column payload depends on the sector sizes, checked after the parities are known.

    Eigen::VectorXd values(static_cast<Index>(D));
    r.get(values.data(), sizeof(double) * D);
    std::vector<std::int8_t> par(D);
    r.get(par.data(), par.size());

    std::array<std::vector<double>, 2> sector_values;
    std::array<Index, 2> first_vector{-1, -1};
    std::array<Index, 2> count_vector{0, 0};
    for (std::uint32_t n = 0; n < D; ++n) {
        if (par[n] != 1 && par[n] != -1) throw CacheCorruption("bad parity label in " + path.string());
        const std::size_t slot = par[n] > 0 ? 0 : 1;
        if (n >= first && n < first + count) {
            if (first_vector[slot] < 0) first_vector[slot] = static_cast<Index>(sector_values[slot].size());
            ++count_vector[slot];
        }
        sector_values[slot].push_back(values(n));
    }
    std::array<SectorVectors, 2> vecs;
    for (std::size_t s = 0; s < 2; ++s) {
        vecs[s].parity = s == 0 ? 1 : -1;
        vecs[s].basis = sector_basis(p, vecs[s].parity);
        if (vecs[s].basis.size() != sector_values[s].size()) throw CacheCorruption("parity counts mismatch in " + path.string());
        if (first_vector[s] < 0) first_vector[s] = 0;
        const std::uint64_t per_column = version == 1 ? D : vecs[s].basis.size();
        expected += per_column * 8 * static_cast<std::uint64_t>(count_vector[s]);
    }
    if (bytes != expected) throw CacheCorruption("bad length of " + path.string());
    for (std::size_t s = 0; s < 2; ++s) vecs[s].vectors.resize(static_cast<Index>(vecs[s].basis.size()), count_vector[s]);

    std::array<Index, 2> next{0, 0};
    std::vector<double> column(D);
    std::vector<Index> position(D, -1);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t k = 0; k < vecs[s].basis.size(); ++k) position[static_cast<std::size_t>(vecs[s].basis[k])] = static_cast<Index>(k);
    }
    for (std::uint32_t n = first; n < first + count; ++n) {
        const std::size_t slot = par[n] > 0 ? 0 : 1;
        auto& sec = vecs[slot];
        const Index c = next[slot]++;
        if (version == 1) {
            r.get(column.data(), sizeof(double) * D);
            for (std::uint32_t i = 0; i < D; ++i) {
                const auto& b = sec.basis;
                const Index k = position[i];
                const bool inside = k >= 0 && static_cast<std::size_t>(k) < b.size() && b[static_cast<std::size_t>(k)] == i;
                if (inside) sec.vectors(k, c) = column[i];
                else if (column[i] != 0.0) throw CacheCorruption("eigenvector leaks out of its parity sector in " + path.string());
            }
        } else {
            r.get(sec.vectors.col(c).data(), sizeof(double) * sec.basis.size());
        }
    }
    r.check_trailer();

    std::array<Eigen::VectorXd, 2> sv;
    for (std::size_t s = 0; s < 2; ++s) {
        sv[s] = Eigen::Map<Eigen::VectorXd>(sector_values[s].data(), static_cast<Index>(sector_values[s].size()));
    }
    auto out = SpectralData::assemble(p, std::move(sv), std::move(vecs), first_vector, wmin, wmax);
    for (Index n = 0; n < out.dimension(); ++n) {
        if (out.eigenvalues_(n) != values(n) || out.parities_[static_cast<std::size_t>(n)] != par[static_cast<std::size_t>(n)]) {
            throw CacheCorruption("eigenvalue order is inconsistent in " + path.string());
        }
    }
    return out;
}

SpectralCache::SpectralCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path SpectralCache::path_for(const ModelParams& p) const {
    char name[32];
    std::snprintf(name, sizeof(name), "spec-%016llx.bin", static_cast<unsigned long long>(params_hash(p)));
    return dir_ / name;
}

std::optional<SpectralData> SpectralCache::lookup(const ModelParams& p, double need_min, double need_max) const {
    const auto path = path_for(p);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        ++misses_;
        return std::nullopt;
    }
    try {
        auto s = read_spectral_file(path);
        const bool covers = s.complete() || (s.window_min() <= need_min && s.window_max() >= need_max);
        if (s.params() == p && covers) {
            ++hits_;
            return s;
        }
    } catch (const CacheCorruption& e) {
        if (warn_) warn_(std::string("corrupt cache file treated as miss: ") + e.what());
    }
    ++misses_;
    return std::nullopt;
}

void SpectralCache::store(const SpectralData& s) const {
    static std::atomic<unsigned> counter{0};
    const auto path = path_for(s.params());
    std::lock_guard lock(write_mutex_);
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    try {
        write_spectral_file(s, tmp);
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
    ++stores_;
}

SpectralData SpectralCache::get_or_compute(const ModelParams& p, const DiagonalizeOptions& opts) const {
    const bool want_vectors = opts.vector_energy_min <= opts.vector_energy_max;
    auto hit = want_vectors ? lookup(p, opts.vector_energy_min, opts.vector_energy_max)
                            : lookup(p, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
    if (hit) return std::move(*hit);
    auto s = diagonalize(p, opts);
    store(s);
    return s;
}

} // namespace dicke
