// core.hpp - truncated |j,m> x |n> basis, Dicke Hamiltonian and parity
//
// Basis layout is atom-major: flat = m_index * (n_max + 1) + n, with
// m = m_index - j. The amplitude vector of any state therefore reshapes to an
// (N+1) x (n_max+1) row-major matrix, which is what the partial trace uses.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dicke {

using Index = std::ptrdiff_t;
using cplx = std::complex<double>;

struct ModelParams {
    int n_atoms{1};       // N; the angular momentum sector is fixed to j = N/2
    double omega{1.0};    // photon frequency
    double omega0{1.0};   // atomic splitting
    double lambda{0.0};   // coupling
    int n_max{0};         // photon Fock cutoff (inclusive)

    double j() const noexcept { return 0.5 * n_atoms; }
    Index atom_dim() const noexcept { return n_atoms + 1; }
    Index photon_dim() const noexcept { return n_max + 1; }
    Index dimension() const noexcept { return atom_dim() * photon_dim(); }
    double lambda_c() const;

    // Throws InvalidParams.
    void validate() const;

    ModelParams with_lambda(double l) const { ModelParams p = *this; p.lambda = l; return p; }
    ModelParams with_cutoff(int n) const { ModelParams p = *this; p.n_max = n; return p; }

    // Canonical one-line text form, used for hashing and metadata.
    std::string canonical() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Same photon/atom layout, i.e. states of the two models live in the same space.
bool same_layout(const ModelParams& a, const ModelParams& b) noexcept;

// Same everything except the coupling.
bool same_model_except_lambda(const ModelParams& a, const ModelParams& b) noexcept;

struct BasisIndex {
    int m_index{0};    // 0..N, m = m_index - j
    int n_photons{0};  // 0..n_max

    Index flat(const ModelParams& p) const noexcept {
        return static_cast<Index>(m_index) * p.photon_dim() + n_photons;
    }
    static BasisIndex from_flat(const ModelParams& p, Index flat) noexcept {
        return {static_cast<int>(flat / p.photon_dim()), static_cast<int>(flat % p.photon_dim())};
    }
    double m(const ModelParams& p) const noexcept { return m_index - p.j(); }
    // (-1)^(j + m + n); j + m = m_index is always an integer.
    int parity() const noexcept { return ((m_index + n_photons) % 2 == 0) ? 1 : -1; }
};

// Dense real symmetric matrix; entries(i,k) and entries(k,i) are written from
// the same double so the symmetry is exact.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}

    Index dimension() const noexcept { return m_.rows(); }
    double operator()(Index i, Index k) const { return m_(i, k); }
    const Eigen::MatrixXd& matrix() const noexcept { return m_; }

private:
    Eigen::MatrixXd m_;
};

// Upper bound for any single dense allocation made by this library.
inline constexpr std::size_t kDefaultMaxDenseBytes = std::size_t{3} << 30;

// Throws CapacityError if an rows x cols double matrix exceeds max_bytes.
void check_dense_capacity(Index rows, Index cols, std::size_t max_bytes = kDefaultMaxDenseBytes);

SymmetricMatrix build_hamiltonian(const ModelParams& p,
                                  std::size_t max_bytes = kDefaultMaxDenseBytes);

std::vector<int> build_parity_diagonal(const ModelParams& p);
Eigen::VectorXd number_operator_diagonal(const ModelParams& p);
Eigen::VectorXd jz_diagonal(const ModelParams& p);

// Flat indices (ascending) of the basis states with the given parity.
std::vector<Index> sector_basis(const ModelParams& p, int parity);

// Hamiltonian restricted to one parity sector, in the order of sector_basis().
Eigen::MatrixXd build_sector_hamiltonian(const ModelParams& p, int parity,
                                         std::size_t max_bytes = kDefaultMaxDenseBytes);

// Matrix-free H|psi>; works for any cutoff, no dense storage.
Eigen::VectorXcd apply_hamiltonian(const ModelParams& p, const Eigen::VectorXcd& psi);
Eigen::VectorXd apply_hamiltonian(const ModelParams& p, const Eigen::VectorXd& psi);

// <psi|H|psi> (real part) for a normalized psi.
double energy_expectation(const ModelParams& p, const Eigen::VectorXcd& psi);

// Matrix element sqrt(j(j+1) - m(m+1)) of J+ between m and m+1.
double ladder_coefficient(double j, double m) noexcept;

} // namespace dicke
