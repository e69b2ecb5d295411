// quench.hpp - sudden quench lambda_i -> lambda_f: occupations, diagonal entropy,
// heat/work ledger, E_95% and time evolution by spectral decomposition

#pragma once

#include "dicke/core.hpp"
#include "dicke/spectral.hpp"
#include "dicke/states.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace dicke {

struct QuenchSpec {
    ModelParams model;  // N, omega, omega0 and n_max; model.lambda is ignored
    double lambda_i{0.0};
    double lambda_f{0.0};
    cplx alpha{1.0};
    cplx beta{0.0};

    double delta_lambda() const noexcept { return lambda_i - lambda_f; }
    ModelParams initial_params() const { return model.with_lambda(lambda_i); }
    ModelParams final_params() const { return model.with_lambda(lambda_f); }
    void validate() const;
};

struct QuenchResult {
    QuenchSpec spec;
    double j{0.0};
    Eigen::VectorXd energies;     // eigenvalues of H(lambda_f)
    Eigen::VectorXd occupations;  // P(E_n); zero where no eigenvector is stored
    double missing_weight{0.0};   // 1 - sum P, weight outside the eigenvector window
    double initial_tail_weight{0.0};
    double s_diag{0.0};
    double initial_energy{0.0};   // <psi0|H(lambda_i)|psi0>
    double final_energy{0.0};     // <psi0|H(lambda_f)|psi0>
    double ground_energy{0.0};    // numerical E_0(lambda_f)
    double delta_E{0.0};
    double heat{0.0};             // final_energy - ground_energy
    double heat_meanfield_ground{0.0};  // final_energy - J * mean-field E_0; NaN below lambda_c
    double work_reversible{0.0};  // delta_E - heat
    double e95_over_J{0.0};
    double mean_final_energy_over_J{0.0};
};

// Largest weight the eigenvector window may miss before a quench is refused.
inline constexpr double kMaxMissingWeight = 1e-8;

// Throws CutoffTooSmall when the eigenvector window misses more than
// max_missing_weight; analyses of a partial spectrum pass a larger bound.
QuenchResult run_quench(const QuenchSpec& q, const SpectralData& spec_f, double max_missing_weight = kMaxMissingWeight);
QuenchResult run_quench(const QuenchSpec& q, const SpectralData& spec_f, const StateVector& psi0,
                        double max_missing_weight = kMaxMissingWeight);

// -sum P log P over P >= 1e-300, in nats.
double diagonal_entropy(const Eigen::VectorXd& occupations);

// Smallest E_n / J whose cumulative occupation reaches 0.95.
double e95_over_J(const Eigen::VectorXd& energies, const Eigen::VectorXd& occupations, double j);
double e95(const QuenchResult& r);

// (E_n / J, P(E_n)) in ascending energy.
std::vector<std::pair<double, double>> energy_distribution_series(const QuenchResult& r);

// Propagates one initial state under a fixed spectrum with phases exp(-i E_n t).
class Evolver {
public:
    Evolver(const SpectralData& spec, const StateVector& s0);

    Eigen::VectorXcd at(double t) const;
    // Column k holds the state at times[k].
    Eigen::MatrixXcd at(const std::vector<double>& times) const;

    const Eigen::VectorXcd& coefficients() const noexcept { return coeff_; }
    double missing_weight() const noexcept { return missing_; }

private:
    const SpectralData* spec_;
    ModelParams layout_;
    Eigen::VectorXcd coeff_;  // C_n over the stored window
    double missing_{0.0};
};

StateVector evolve(const StateVector& s0, const SpectralData& spec, double t);

// Mean and spread of H in a state, computed without dense storage.
struct EnergyMoments {
    double mean{0.0};
    double sigma{0.0};
};
EnergyMoments energy_moments(const ModelParams& p, const Eigen::VectorXcd& psi);

// Energy interval outside which psi carries at most `tail` weight on each
// side in H(p). Uses the Gauss quadrature of `steps` Lanczos iterations from
// psi: the weight above the k-th Ritz value never exceeds the Ritz weights
// from k up, and symmetrically below.
struct EnergyWindow {
    double lo{0.0};
    double hi{0.0};
};
EnergyWindow energy_window_bound(const ModelParams& p, const Eigen::VectorXcd& psi, double tail, int steps = 300);

// Largest photon number reachable classically at energy E:
// omega n - j sqrt(omega0^2 + 16 lambda^2 n / N) <= E.
double photon_turning_point(const ModelParams& p, double energy);

// Smallest cutoff whose coherent-state photon tail is below tail_tol.
int coherent_cutoff(double nu, double tail_tol = kDefaultTailTolerance);

// Cutoff and eigenvector window for a set of quenches sharing lambda_f.
struct QuenchPlan {
    int n_max{0};
    double window_min{0.0};  // eigenvector window, energy units
    double window_max{0.0};
    double max_mean{0.0};
    double max_sigma{0.0};
};
struct PlanOptions {
    double tail_weight{1e-10};  // weight allowed on each side of the window, per quench
    int lanczos_steps{300};
    double sigma_margin{0.0};   // extra standard deviations added on both sides of the window
    double airy_shells{8.0};    // shells kept beyond the turning point n_t, in units of cbrt(n_t)
    int extra_shells{24};
    int minimum_cutoff{64};
    double cutoff_scale{1.0};  // final n_max = ceil(cutoff_scale * planned), for convergence checks
    int fixed_cutoff{0};       // when positive, replaces the planned n_max before scaling
};
// Cutoff that holds every eigenstate below `energy`: the turning point plus
// airy_shells * cbrt(n_t) + extra_shells, at least minimum_cutoff.
int cutoff_for_energy(const ModelParams& p, double energy, const PlanOptions& opts = {});

QuenchPlan plan_quenches(const ModelParams& model, const std::vector<double>& lambda_i, double lambda_f,
                         cplx alpha = 1.0, cplx beta = 0.0, const PlanOptions& opts = {});

// Plans, diagonalizes (through `cache` when given) and widens the window by
// `sigma_step` standard deviations until no quench misses more than
// kMaxMissingWeight. Throws CutoffTooSmall after `max_attempts`.
struct PreparedSpectrum {
    QuenchPlan plan;
    PlanOptions options;  // the options of the successful attempt
    SpectralData spectrum;
    double max_missing_weight{0.0};
    int attempts{0};
};
PreparedSpectrum prepare_spectrum(const ModelParams& model, const std::vector<double>& lambda_i, double lambda_f,
                                  cplx alpha = 1.0, cplx beta = 0.0, PlanOptions opts = {},
                                  const SpectralCache* cache = nullptr, int max_attempts = 4, double sigma_step = 3.0);

// CSV row layout for one quench.
std::string quench_csv_header();
std::string quench_csv_row(const QuenchResult& r, double s_ent_equilibrium);

} // namespace dicke
