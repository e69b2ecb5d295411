// spectral.hpp - parity-resolved dense diagonalization of the Dicke Hamiltonian
//
// Each parity sector is solved on its own, so every eigenvector has definite
// parity and quasi-degenerate +/- doublets never mix. Eigenvalues are always
// complete; eigenvectors can be limited to an energy window, which is how the
// large cutoffs needed in the superradiant phase stay inside memory.

#pragma once

#include "dicke/core.hpp"

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dicke {

struct DiagonalizeOptions {
    // Eigenvectors are computed for eigenvalues inside [vector_energy_min, vector_energy_max].
    double vector_energy_min{-std::numeric_limits<double>::infinity()};
    double vector_energy_max{std::numeric_limits<double>::infinity()};
    // Orthonormality and residual checks after the solve.
    bool verify{true};
    std::size_t max_bytes{kDefaultMaxDenseBytes};

    static DiagonalizeOptions eigenvalues_only() {
        DiagonalizeOptions o;
        o.vector_energy_min = std::numeric_limits<double>::infinity();
        o.vector_energy_max = -std::numeric_limits<double>::infinity();
        return o;
    }
    static DiagonalizeOptions window(double lo, double hi) {
        DiagonalizeOptions o;
        o.vector_energy_min = lo;
        o.vector_energy_max = hi;
        return o;
    }
};

// Eigenvectors of one parity sector, expressed in that sector's basis.
struct SectorVectors {
    int parity{1};
    std::vector<Index> basis;   // flat indices, ascending
    Eigen::MatrixXd vectors;    // basis.size() x (vectors stored for this sector)
};

class SpectralData {
public:
    SpectralData() = default;

    // Assembles merged data from per-sector results. `sector_values[s]` holds
    // all eigenvalues of sector s (ascending); `vectors[s]` holds the columns
    // for the sector-local index range starting at `first_vector[s]`.
    static SpectralData assemble(const ModelParams& p,
                                 std::array<Eigen::VectorXd, 2> sector_values,
                                 std::array<SectorVectors, 2> vectors,
                                 std::array<Index, 2> first_vector,
                                 double window_min, double window_max);

    const ModelParams& params() const noexcept { return params_; }
    Index dimension() const noexcept { return eigenvalues_.size(); }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    const std::vector<int>& parities() const noexcept { return parities_; }
    double ground_energy() const { return eigenvalues_(0); }

    // Eigenvectors are available for sorted indices [vector_begin, vector_end).
    Index vector_begin() const noexcept { return vector_begin_; }
    Index vector_end() const noexcept { return vector_end_; }
    Index vector_count() const noexcept { return vector_end_ - vector_begin_; }
    bool has_vector(Index n) const noexcept { return n >= vector_begin_ && n < vector_end_; }
    bool complete() const noexcept { return vector_begin_ == 0 && vector_end_ == dimension(); }
    double window_min() const noexcept { return window_min_; }
    double window_max() const noexcept { return window_max_; }

    // Sector (0 for parity +1, 1 for -1) and column of sorted eigenstate n.
    int sector_of(Index n) const { return sector_[static_cast<std::size_t>(n)]; }
    Index column_of(Index n) const { return column_[static_cast<std::size_t>(n)]; }
    const SectorVectors& sector(int s) const { return sectors_[static_cast<std::size_t>(s)]; }

    // Dense length-D eigenvector; throws std::out_of_range without a vector.
    Eigen::VectorXd eigenvector(Index n) const;

    // C_n = <E_n|psi> for n in [vector_begin, vector_end).
    Eigen::VectorXcd project(const Eigen::VectorXcd& psi) const;

    // sum_n c_n |E_n>, c indexed like project().
    Eigen::VectorXcd synthesize(const Eigen::VectorXcd& c) const;

    // <E_n|O|E_n> for an operator diagonal in the product basis.
    Eigen::VectorXd diagonal_expectations(const Eigen::VectorXd& diag) const;

    // Max |V^T V - I| over stored vectors, and max |H v - E v| / max|E|.
    double orthonormality_error() const;
    double residual_error() const;

private:
    ModelParams params_{};
    Eigen::VectorXd eigenvalues_;
    std::vector<int> parities_;
    std::vector<int> sector_;
    std::vector<Index> column_;  // -1 when no vector is stored
    std::array<SectorVectors, 2> sectors_{};
    Index vector_begin_{0};
    Index vector_end_{0};
    double window_min_{0.0};
    double window_max_{0.0};

    friend SpectralData read_spectral_file(const std::filesystem::path&);
};

// Sorts (energy, parity with +1 first, index inside the sector).
SpectralData diagonalize(const ModelParams& p, const DiagonalizeOptions& opts = {});

// Lowest eigenpair of one parity sector by Lanczos with full
// reorthogonalization. Used where only the ground state matters (cutoff
// certification) and a dense solve of a large sector would be wasteful.
struct LowestEigenpair {
    double energy{0.0};
    Eigen::VectorXd vector;  // dense, length D
    int iterations{0};
};
LowestEigenpair lowest_eigenpair(const ModelParams& p, int parity, double tol = 1e-12, int max_iter = 600);

struct ConvergenceReport {
    int n_max_used{0};
    int n_max_extended{0};
    int top_shells{0};               // photon shells counted as "top"
    double probe_tail_weight{0.0};
    double ground_tail_weight{0.0};
    double tail_weight{0.0};         // max of the two above
    double ground_energy{0.0};
    double ground_energy_shift{0.0}; // |E0(n_max) - E0(ceil(1.25 n_max))|
    double tolerance{0.0};
    bool passed{false};
};

// Weight of the state in photon shells n >= n_max + 1 - top_shells.
double photon_tail_weight(const ModelParams& p, const Eigen::VectorXcd& psi, int top_shells);

// Number of shells forming the top 5% of [0, n_max] (at least one).
int top_shell_count(int n_max) noexcept;

ConvergenceReport certify_cutoff(const ModelParams& p, const Eigen::VectorXcd& probe, double tol);

// --------------------------------------------------------------------------
// On-disk cache. Little-endian layout:
//   "DICKSPEC" | u32 version | u32 N | u32 n_max | f64 omega | f64 omega0 |
//   f64 lambda | u32 D | [v2: u32 first | u32 count | f64 wmin | f64 wmax] |
//   D x f64 eigenvalues | D x i8 parities | D x K f64 eigenvectors (column-major,
//   K = D for v1) | u32 CRC32 of every preceding byte.
// Version 1 is written for complete spectra, version 2 when only an energy
// window of eigenvectors exists.

std::uint64_t params_hash(const ModelParams& p);

void write_spectral_file(const SpectralData& s, const std::filesystem::path& path);
SpectralData read_spectral_file(const std::filesystem::path& path);  // throws CacheCorruption

class SpectralCache {
public:
    explicit SpectralCache(std::filesystem::path dir);

    const std::filesystem::path& directory() const noexcept { return dir_; }
    std::filesystem::path path_for(const ModelParams& p) const;

    // Hit only if the stored vector window covers [need_min, need_max].
    std::optional<SpectralData> lookup(const ModelParams& p,
                                       double need_min = -std::numeric_limits<double>::infinity(),
                                       double need_max = std::numeric_limits<double>::infinity()) const;
    void store(const SpectralData& s) const;

    // Lookup, else diagonalize and store.
    SpectralData get_or_compute(const ModelParams& p, const DiagonalizeOptions& opts = {}) const;

    std::size_t hits() const noexcept { return hits_.load(); }
    std::size_t misses() const noexcept { return misses_.load(); }
    std::size_t stores() const noexcept { return stores_.load(); }

    // Receives warnings such as "corrupt cache file treated as miss".
    void set_warning_sink(std::function<void(const std::string&)> sink) { warn_ = std::move(sink); }

private:
    std::filesystem::path dir_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
    mutable std::atomic<std::size_t> stores_{0};
    mutable std::mutex write_mutex_;
    std::function<void(const std::string&)> warn_;
};

} // namespace dicke
