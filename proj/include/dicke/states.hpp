// states.hpp - atomic x bosonic coherent states and their parity superpositions

#pragma once

#include "dicke/core.hpp"

#include <Eigen/Dense>

namespace dicke {

// Pure state in the product basis of `layout` (only n_atoms and n_max matter).
struct StateVector {
    ModelParams layout;
    Eigen::VectorXcd amplitudes;

    Index dimension() const noexcept { return amplitudes.size(); }
    double norm() const { return amplitudes.norm(); }
};

struct CoherentParams {
    double mu{0.0};
    double nu{0.0};
    int branch{1};  // +1: mu >= 0, nu <= 0; -1: the parity image
};

// Mean-field minimizer at the coupling stored in `p`; zero below lambda_c.
CoherentParams variational_params(const ModelParams& p, int branch = 1);

inline constexpr double kDefaultTailTolerance = 1e-12;

// Photon weight that a coherent state with displacement nu puts above n_max.
double coherent_tail_weight(double nu, int n_max);

// |mu> (x) |nu>, renormalized after truncation. Throws CutoffTooSmall if the
// truncated photon weight exceeds tail_tol.
StateVector coherent_product(const ModelParams& p, const CoherentParams& cp,
                             double tail_tol = kDefaultTailTolerance);

// (alpha s1 + beta s2) normalized to unit norm.
StateVector superpose(const StateVector& s1, const StateVector& s2, cplx alpha, cplx beta);

// Pi |psi>.
StateVector apply_parity(const StateVector& s);

// Initial state of a quench from coupling lambda_i: alpha |mu+,nu-> + beta |mu-,nu+>.
StateVector initial_state(const ModelParams& p_initial, cplx alpha = 1.0, cplx beta = 0.0,
                          double tail_tol = kDefaultTailTolerance);

// <psi|O|psi> for O diagonal in the product basis.
double diagonal_expectation(const Eigen::VectorXcd& psi, const Eigen::VectorXd& diag);

// Entanglement of alpha|A> + beta|B> for orthogonal branch states with
// orthogonal reduced states, in nats.
double branch_superposition_entropy(cplx alpha, cplx beta);

} // namespace dicke
