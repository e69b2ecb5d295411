#include "dicke/core.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <cmath>
#include <limits>

namespace dicke {

double ModelParams::lambda_c() const {
    return 0.5 * std::sqrt(omega * omega0);
}

void ModelParams::validate() const {
    if (n_atoms < 1) throw InvalidParams("n_atoms must be >= 1, got " + std::to_string(n_atoms));
    if (n_max < 0) throw InvalidParams("n_max must be >= 0, got " + std::to_string(n_max));
    if (!(omega > 0.0) || !std::isfinite(omega)) throw InvalidParams("omega must be finite and > 0");
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw InvalidParams("omega0 must be finite and > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParams("lambda must be finite and >= 0");
    const auto dim = static_cast<long double>(n_atoms + 1) * static_cast<long double>(n_max + 1);
    if (dim > static_cast<long double>(std::numeric_limits<std::int32_t>::max())) {
        throw CapacityError("Hilbert dimension overflows 32-bit indexing");
    }
}

std::string ModelParams::canonical() const {
    // Keys in fixed alphabetical order; shortest round-trip doubles.
    return "lambda=" + format_double(lambda) + ";n_atoms=" + std::to_string(n_atoms) +
           ";n_max=" + std::to_string(n_max) + ";omega=" + format_double(omega) +
           ";omega0=" + format_double(omega0);
}

bool same_layout(const ModelParams& a, const ModelParams& b) noexcept {
    return a.n_atoms == b.n_atoms && a.n_max == b.n_max;
}

bool same_model_except_lambda(const ModelParams& a, const ModelParams& b) noexcept {
    return same_layout(a, b) && a.omega == b.omega && a.omega0 == b.omega0;
}

double ladder_coefficient(double j, double m) noexcept {
    const double v = j * (j + 1.0) - m * (m + 1.0);
    return v > 0.0 ? std::sqrt(v) : 0.0;
}

void check_dense_capacity(Index rows, Index cols, std::size_t max_bytes) {
    const long double bytes = static_cast<long double>(rows) * static_cast<long double>(cols) * sizeof(double);
    if (bytes > static_cast<long double>(max_bytes)) {
        throw CapacityError("dense " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " matrix exceeds capacity of " + std::to_string(max_bytes) + " bytes");
    }
}

namespace {

// Calls f(row, col, value) once per coupled pair (row < col in flat order).
template <class F>
void for_each_coupling(const ModelParams& p, F&& f) {
    const double j = p.j();
    const double g = p.lambda / std::sqrt(static_cast<double>(p.n_atoms));
    const Index P = p.photon_dim();
    for (int mi = 0; mi < p.n_atoms; ++mi) {
        const double c = g * ladder_coefficient(j, mi - j);
        for (int n = 0; n <= p.n_max; ++n) {
            const Index from = mi * P + n;
            if (n + 1 <= p.n_max) f(from, (mi + 1) * P + n + 1, c * std::sqrt(n + 1.0));
            if (n >= 1) f(from, (mi + 1) * P + n - 1, c * std::sqrt(static_cast<double>(n)));
        }
    }
}

double diagonal_energy(const ModelParams& p, Index flat) {
    const auto b = BasisIndex::from_flat(p, flat);
    return p.omega0 * b.m(p) + p.omega * b.n_photons;
}

template <class Vec>
Vec apply_impl(const ModelParams& p, const Vec& psi) {
    p.validate();
    if (psi.size() != p.dimension()) throw InvalidParams("apply_hamiltonian: state dimension mismatch");
    Vec out(psi.size());
    for (Index i = 0; i < psi.size(); ++i) out(i) = diagonal_energy(p, i) * psi(i);
    if (p.lambda != 0.0) {
        for_each_coupling(p, [&](Index a, Index b, double v) {
            out(a) += v * psi(b);
            out(b) += v * psi(a);
        });
    }
    return out;
}

} // namespace

SymmetricMatrix build_hamiltonian(const ModelParams& p, std::size_t max_bytes) {
    p.validate();
    const Index D = p.dimension();
    check_dense_capacity(D, D, max_bytes);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
    for (Index i = 0; i < D; ++i) H(i, i) = diagonal_energy(p, i);
    for_each_coupling(p, [&](Index a, Index b, double v) {
        H(a, b) = v;
        H(b, a) = v;
    });
    return SymmetricMatrix(std::move(H));
}

std::vector<int> build_parity_diagonal(const ModelParams& p) {
    p.validate();
    std::vector<int> out(static_cast<std::size_t>(p.dimension()));
    for (Index i = 0; i < p.dimension(); ++i) out[static_cast<std::size_t>(i)] = BasisIndex::from_flat(p, i).parity();
    return out;
}

Eigen::VectorXd number_operator_diagonal(const ModelParams& p) {
    p.validate();
    Eigen::VectorXd out(p.dimension());
    for (Index i = 0; i < p.dimension(); ++i) out(i) = BasisIndex::from_flat(p, i).n_photons;
    return out;
}

Eigen::VectorXd jz_diagonal(const ModelParams& p) {
    p.validate();
    Eigen::VectorXd out(p.dimension());
    for (Index i = 0; i < p.dimension(); ++i) out(i) = BasisIndex::from_flat(p, i).m(p);
    return out;
}

std::vector<Index> sector_basis(const ModelParams& p, int parity) {
    p.validate();
    if (parity != 1 && parity != -1) throw InvalidParams("parity must be +1 or -1");
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(p.dimension() / 2 + 1));
    for (Index i = 0; i < p.dimension(); ++i) {
        if (BasisIndex::from_flat(p, i).parity() == parity) out.push_back(i);
    }
    return out;
}

Eigen::MatrixXd build_sector_hamiltonian(const ModelParams& p, int parity, std::size_t max_bytes) {
    const auto basis = sector_basis(p, parity);
    const auto n = static_cast<Index>(basis.size());
    check_dense_capacity(n, n, max_bytes);
    std::vector<Index> position(static_cast<std::size_t>(p.dimension()), -1);
    for (Index k = 0; k < n; ++k) position[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])] = k;

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (Index k = 0; k < n; ++k) H(k, k) = diagonal_energy(p, basis[static_cast<std::size_t>(k)]);
    for_each_coupling(p, [&](Index a, Index b, double v) {
        const Index ka = position[static_cast<std::size_t>(a)];
        const Index kb = position[static_cast<std::size_t>(b)];
        if (ka < 0 || kb < 0) return;  // coupling never crosses sectors
        H(ka, kb) = v;
        H(kb, ka) = v;
    });
    return H;
}

Eigen::VectorXcd apply_hamiltonian(const ModelParams& p, const Eigen::VectorXcd& psi) {
    return apply_impl(p, psi);
}

Eigen::VectorXd apply_hamiltonian(const ModelParams& p, const Eigen::VectorXd& psi) {
    return apply_impl(p, psi);
}

double energy_expectation(const ModelParams& p, const Eigen::VectorXcd& psi) {
    return psi.dot(apply_hamiltonian(p, psi)).real();
}

} // namespace dicke
