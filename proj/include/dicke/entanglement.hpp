// entanglement.hpp - atomic reduced density matrix and entanglement entropy

#pragma once

#include "dicke/core.hpp"
#include "dicke/quench.hpp"
#include "dicke/spectral.hpp"
#include "dicke/states.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dicke {

struct ReducedDensityMatrix {
    Eigen::MatrixXcd rho;         // (N+1) x (N+1)
    Eigen::VectorXd populations;  // ascending, clamped at 0
};

// Populations below this raise NumericalConsistencyError; above it they are clamped to 0.
inline constexpr double kPopulationClamp = -1e-12;

// Traces out the photons: rho_S = Psi Psi^dagger with Psi the (N+1) x (n_max+1) reshape.
ReducedDensityMatrix reduce(const ModelParams& layout, const Eigen::VectorXcd& psi);
inline ReducedDensityMatrix reduce(const StateVector& s) { return reduce(s.layout, s.amplitudes); }

// Adds weight * Psi Psi^dagger for one amplitude vector to rho.
void accumulate_reduced(const ModelParams& layout, const Eigen::VectorXcd& psi, double weight, Eigen::MatrixXcd& rho);

// Populations of a self-adjoint rho, clamped; throws below kPopulationClamp.
Eigen::VectorXd populations_of(const Eigen::MatrixXcd& rho);

// von Neumann entropy in nats.
double entanglement_entropy(const ReducedDensityMatrix& rho);
double entropy_of_populations(const Eigen::VectorXd& populations);

struct EntropyTrace {
    std::vector<double> times;
    std::vector<double> s_ent;
    double equilibrium_value{0.0};  // mean over the final half of the grid
    double fluctuation{0.0};        // standard deviation over the same window
    double t_start{0.0};
    double t_end{0.0};
    double max_trace_error{0.0};    // max |tr rho_S(t) - 1|

    double relative_fluctuation() const { return equilibrium_value != 0.0 ? fluctuation / equilibrium_value : 0.0; }
};

// n points evenly covering [0, t_max].
std::vector<double> default_time_grid(int points = 2048, double t_max = 200.0);

EntropyTrace entropy_timeseries(const StateVector& s0, const SpectralData& spec_f, const std::vector<double>& t_grid);
EntropyTrace entropy_timeseries(const QuenchSpec& q, const SpectralData& spec_f, const std::vector<double>& t_grid);

// Levels closer than this are treated as one degenerate cluster whose
// coherences survive dephasing (the superradiant parity doublets).
inline constexpr double kDefaultClusterGap = 1e-6;

// S_ent of the dephased state sum over clusters |phi_c><phi_c|, phi_c = sum_{n in c} C_n |E_n>.
// cluster_gap is in units of omega.
double diagonal_ensemble_entropy(const StateVector& s0, const SpectralData& spec_f,
                                 double cluster_gap = kDefaultClusterGap);
double equilibrium_entropy_from_diagonal_ensemble(const QuenchSpec& q, const SpectralData& spec_f,
                                                  double cluster_gap = kDefaultClusterGap);

} // namespace dicke
