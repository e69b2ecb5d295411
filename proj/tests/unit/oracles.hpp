// oracles.hpp - independent reference computations and random generators for tests

#pragma once

#include "dicke/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <random>

namespace oracle {

// Kronecker product of two dense matrices.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k) out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return out;
}

// Hamiltonian assembled from explicit operator matrices:
// omega0 Jz (x) 1 + omega 1 (x) a^dag a + (2 lambda / sqrt N) Jx (x) (a + a^dag).
inline Eigen::MatrixXd operator_hamiltonian(const dicke::ModelParams& p) {
    const int A = p.n_atoms + 1, P = p.n_max + 1;
    const double j = p.j();
    Eigen::MatrixXd Jz = Eigen::MatrixXd::Zero(A, A), Jp = Eigen::MatrixXd::Zero(A, A);
    for (int k = 0; k < A; ++k) {
        const double m = k - j;
        Jz(k, k) = m;
        if (k + 1 < A) Jp(k + 1, k) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
    const Eigen::MatrixXd Jx = 0.5 * (Jp + Jp.transpose());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(P, P);
    for (int n = 1; n < P; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXd num = a.transpose() * a;
    const Eigen::MatrixXd IA = Eigen::MatrixXd::Identity(A, A), IP = Eigen::MatrixXd::Identity(P, P);
    return p.omega0 * kron(Jz, IP) + p.omega * kron(IA, num) +
           (2.0 * p.lambda / std::sqrt(static_cast<double>(p.n_atoms))) * kron(Jx, a + a.transpose());
}

// Lowest eigenvalue by power iteration on (shift - H), shift above the spectrum.
inline double lowest_by_power_iteration(const Eigen::MatrixXd& H, int iterations = 20000) {
    const double shift = H.cwiseAbs().rowwise().sum().maxCoeff();
    const Eigen::MatrixXd M = shift * Eigen::MatrixXd::Identity(H.rows(), H.cols()) - H;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(H.rows()).normalized();
    for (int it = 0; it < iterations; ++it) v = (M * v).normalized();
    return v.dot(H * v);
}

// exp(-i H t) by scaling and squaring with a Taylor kernel.
inline Eigen::MatrixXcd expm_minus_i(const Eigen::MatrixXd& H, double t) {
    const Eigen::MatrixXcd X = std::complex<double>(0.0, -t) * H.cast<std::complex<double>>();
    const double norm = X.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::ldexp(1.0, s) > 0.25) ++s;
    const Eigen::MatrixXcd Y = X / std::ldexp(1.0, s);
    const auto I = Eigen::MatrixXcd::Identity(H.rows(), H.cols());
    Eigen::MatrixXcd E = I, term = I;
    for (int k = 1; k <= 30; ++k) {
        term = term * Y / static_cast<double>(k);
        E += term;
    }
    for (int k = 0; k < s; ++k) E = E * E;
    return E;
}

// Deterministic generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>()(rng_); }

    dicke::ModelParams small_model(int max_atoms = 6, int max_cutoff = 12) {
        dicke::ModelParams p;
        p.n_atoms = integer(1, max_atoms);
        p.n_max = integer(0, max_cutoff);
        p.omega = uniform(0.5, 2.0);
        p.omega0 = uniform(0.5, 2.0);
        p.lambda = uniform(0.0, 2.0);
        return p;
    }

    Eigen::VectorXcd random_state(Eigen::Index dim) {
        Eigen::VectorXcd v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v(i) = {normal(), normal()};
        return v.normalized();
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

} // namespace oracle
