#include "dicke/states.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <cmath>
#include <limits>

namespace dicke {

CoherentParams variational_params(const ModelParams& p, int branch) {
    if (!(p.lambda >= 0.0)) throw InvalidParams("variational_params: lambda must be >= 0");
    if (branch != 1 && branch != -1) throw InvalidParams("variational_params: branch must be +1 or -1");
    CoherentParams cp;
    cp.branch = branch;
    const double lc = p.lambda_c();
    if (p.lambda <= lc) return cp;
    const double l2 = p.lambda * p.lambda, c2 = lc * lc;
    const double mu = std::sqrt((l2 - c2) / (l2 + c2));
    const double nu = std::sqrt(2.0 * p.j()) / p.omega * std::sqrt(l2 * l2 - c2 * c2) / p.lambda;
    cp.mu = branch * mu;
    cp.nu = -branch * nu;
    return cp;
}

namespace {

// log |b_n| for the normalized bosonic coherent state.
double log_boson(double nu, int n) {
    return -0.5 * nu * nu + n * std::log(std::abs(nu)) - 0.5 * std::lgamma(n + 1.0);
}

} // namespace

double coherent_tail_weight(double nu, int n_max) {
    if (nu == 0.0) return 0.0;
    // Terms decrease monotonically once n exceeds nu^2.
    double tail = 0.0;
    for (int n = n_max + 1;; ++n) {
        const double term = std::exp(2.0 * log_boson(nu, n));
        tail += term;
        if (n > nu * nu && (term == 0.0 || term < 1e-20 * tail)) break;
    }
    return tail;
}

StateVector coherent_product(const ModelParams& p, const CoherentParams& cp, double tail_tol) {
    p.validate();
    if (!(std::abs(cp.mu) < 1.0) && cp.mu != 0.0) throw InvalidParams("coherent_product: |mu| must be < 1");
    const double tail = coherent_tail_weight(cp.nu, p.n_max);
    if (tail > tail_tol) {
        throw CutoffTooSmall("photon cutoff " + std::to_string(p.n_max) + " truncates weight " + format_double(tail) +
                             " of a coherent state with nu=" + format_double(cp.nu));
    }
    const int twoj = p.n_atoms;
    const double j = p.j();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(twoj + 1);
    if (cp.mu == 0.0) {
        a(0) = 1.0;
    } else {
        const double lm = std::log(std::abs(cp.mu));
        for (int k = 0; k <= twoj; ++k) {
            const double log_binom = std::lgamma(twoj + 1.0) - std::lgamma(k + 1.0) - std::lgamma(twoj - k + 1.0);
            const double v = std::exp(-j * std::log1p(cp.mu * cp.mu) + 0.5 * log_binom + k * lm);
            a(k) = (cp.mu < 0.0 && k % 2 == 1) ? -v : v;
        }
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p.n_max + 1);
    if (cp.nu == 0.0) {
        b(0) = 1.0;
    } else {
        for (int n = 0; n <= p.n_max; ++n) {
            const double v = std::exp(log_boson(cp.nu, n));
            b(n) = (cp.nu < 0.0 && n % 2 == 1) ? -v : v;
        }
    }
    a.normalize();
    b.normalize();
    StateVector s{p, Eigen::VectorXcd(p.dimension())};
    for (int k = 0; k <= twoj; ++k)
        for (int n = 0; n <= p.n_max; ++n) s.amplitudes(BasisIndex{k, n}.flat(p)) = a(k) * b(n);
    return s;
}

StateVector superpose(const StateVector& s1, const StateVector& s2, cplx alpha, cplx beta) {
    if (s1.dimension() != s2.dimension() || !same_layout(s1.layout, s2.layout)) {
        throw InvalidParams("superpose: states live in different spaces");
    }
    if (alpha == 0.0 && beta == 0.0) throw InvalidParams("superpose: alpha and beta are both zero");
    StateVector out{s1.layout, alpha * s1.amplitudes + beta * s2.amplitudes};
    const double nrm = out.norm();
    if (!(nrm > 0.0)) throw InvalidParams("superpose: combination vanishes");
    out.amplitudes /= nrm;
    return out;
}

StateVector apply_parity(const StateVector& s) {
    const auto par = build_parity_diagonal(s.layout);
    StateVector out = s;
    for (Index i = 0; i < out.dimension(); ++i) out.amplitudes(i) *= static_cast<double>(par[static_cast<std::size_t>(i)]);
    return out;
}

StateVector initial_state(const ModelParams& p_initial, cplx alpha, cplx beta, double tail_tol) {
    if (beta == 0.0) {
        if (alpha == 0.0) throw InvalidParams("initial_state: alpha and beta are both zero");
        auto s = coherent_product(p_initial, variational_params(p_initial, 1), tail_tol);
        s.amplitudes *= alpha / std::abs(alpha);
        return s;
    }
    return superpose(coherent_product(p_initial, variational_params(p_initial, 1), tail_tol),
                     coherent_product(p_initial, variational_params(p_initial, -1), tail_tol), alpha, beta);
}

double diagonal_expectation(const Eigen::VectorXcd& psi, const Eigen::VectorXd& diag) {
    if (psi.size() != diag.size()) throw InvalidParams("diagonal_expectation: dimension mismatch");
    return (psi.cwiseAbs2().array() * diag.array()).sum();
}

double branch_superposition_entropy(cplx alpha, cplx beta) {
    const double a2 = std::norm(alpha), b2 = std::norm(beta);
    if (a2 + b2 == 0.0) throw InvalidParams("branch_superposition_entropy: alpha and beta are both zero");
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return std::log(a2 + b2) - (xlogx(a2) + xlogx(b2)) / (a2 + b2);
}

} // namespace dicke
