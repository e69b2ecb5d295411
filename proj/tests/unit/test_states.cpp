#include "dicke/errors.hpp"
#include "dicke/entanglement.hpp"
#include "dicke/states.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dicke;

TEST_CASE("variational parameters") {
    ModelParams p{.n_atoms = 30, .omega = 1.0, .omega0 = 1.0, .lambda = 1.0, .n_max = 0};
    const auto cp = variational_params(p);
    CHECK(cp.mu == doctest::Approx(std::sqrt(0.6)).epsilon(1e-12));
    CHECK(cp.nu == doctest::Approx(-std::sqrt(30.0) * std::sqrt(1.0 - 0.0625)).epsilon(1e-12));

    const auto at_c = variational_params(p.with_lambda(0.5));
    CHECK(at_c.mu == 0.0);
    CHECK(at_c.nu == 0.0);
    const auto normal = variational_params(p.with_lambda(0.3));
    CHECK(normal.mu == 0.0);
    CHECK(normal.nu == 0.0);

    const auto mirror = variational_params(p, -1);
    CHECK(mirror.mu == doctest::Approx(-cp.mu));
    CHECK(mirror.nu == doctest::Approx(-cp.nu));

    const auto big = variational_params(p.with_lambda(200.0));
    CHECK(big.mu < 1.0);
    CHECK(big.mu > 0.9999);
}

TEST_CASE("vacuum product state is the lowest basis state") {
    ModelParams p{.n_atoms = 4, .omega = 1.0, .omega0 = 1.0, .lambda = 0.0, .n_max = 5};
    const auto s = coherent_product(p, {0.0, 0.0, 1});
    CHECK(std::abs(s.amplitudes(0) - cplx(1.0)) < 1e-15);
    CHECK(s.amplitudes.tail(s.dimension() - 1).norm() < 1e-15);
}

TEST_CASE("coherent product moments and separability (property)") {
    oracle::Gen g(11);
    for (int trial = 0; trial < 25; ++trial) {
        ModelParams p;
        p.n_atoms = g.integer(1, 12);
        const double mu = g.uniform(-0.95, 0.95), nu = g.uniform(-4.0, 4.0);
        p.n_max = coherent_cutoff(nu, 1e-14) + 2;
        const auto s = coherent_product(p, {mu, nu, mu >= 0 ? 1 : -1});
        CHECK(std::abs(s.norm() - 1.0) < 1e-10);
        CHECK(diagonal_expectation(s.amplitudes, number_operator_diagonal(p)) == doctest::Approx(nu * nu).epsilon(1e-8).scale(1.0));
        const double jz = p.j() * (mu * mu - 1.0) / (mu * mu + 1.0);
        CHECK(std::abs(diagonal_expectation(s.amplitudes, jz_diagonal(p)) - jz) < 1e-8);

        Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
            s.amplitudes.data(), p.atom_dim(), p.photon_dim());
        const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
        if (svd.singularValues().size() > 1) CHECK(svd.singularValues()(1) < 1e-12);
    }
}

TEST_CASE("truncation tail is enforced") {
    ModelParams p{.n_atoms = 10, .omega = 1.0, .omega0 = 1.0, .lambda = 2.0, .n_max = 5};
    CHECK_THROWS_AS(initial_state(p), CutoffTooSmall);
    CHECK(coherent_tail_weight(0.0, 0) == 0.0);
    CHECK(coherent_tail_weight(3.0, 5) > coherent_tail_weight(3.0, 20));
    const int n = coherent_cutoff(3.0, 1e-12);
    CHECK(coherent_tail_weight(3.0, n) <= 1e-12);
    CHECK(coherent_tail_weight(3.0, n - 1) > 1e-12);
}

TEST_CASE("parity maps one branch onto the other") {
    ModelParams p{.n_atoms = 20, .omega = 1.0, .omega0 = 1.0, .lambda = 1.5, .n_max = 0};
    p.n_max = coherent_cutoff(variational_params(p).nu) + 4;
    const auto plus = coherent_product(p, variational_params(p, 1));
    const auto minus = coherent_product(p, variational_params(p, -1));
    const auto flipped = apply_parity(plus);
    CHECK(std::abs(flipped.amplitudes.dot(minus.amplitudes)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("identity superposition and branch entropy") {
    ModelParams p{.n_atoms = 20, .omega = 1.0, .omega0 = 1.0, .lambda = 2.5, .n_max = 0};
    p.n_max = coherent_cutoff(variational_params(p).nu) + 4;
    const auto s1 = initial_state(p);
    const auto same = initial_state(p, 1.0, 0.0);
    CHECK((same.amplitudes - s1.amplitudes).norm() < 1e-15);

    CHECK(branch_superposition_entropy(1.0, 0.0) == 0.0);
    CHECK(branch_superposition_entropy(1.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    oracle::Gen g(5);
    for (int trial = 0; trial < 5; ++trial) {
        const cplx a{g.uniform(0.1, 1.0), g.uniform(-1.0, 1.0)}, b{g.uniform(0.1, 1.0), g.uniform(-1.0, 1.0)};
        const auto s = initial_state(p, a, b);
        CHECK(std::abs(s.norm() - 1.0) < 1e-10);
        CHECK(entanglement_entropy(reduce(s)) == doctest::Approx(branch_superposition_entropy(a, b)).epsilon(1e-6));
    }
}

TEST_CASE("variational energy approaches the ground state with N") {
    double previous_gap = 1e300;
    for (int N : {10, 20, 30}) {
        ModelParams p{.n_atoms = N, .omega = 1.0, .omega0 = 1.0, .lambda = 1.0, .n_max = 0};
        p.n_max = coherent_cutoff(variational_params(p).nu) + 30;
        const auto s = initial_state(p);
        const double e_var = energy_expectation(p, s.amplitudes);
        const double e0 = std::min(lowest_eigenpair(p, 1).energy, lowest_eigenpair(p, -1).energy);
        const double gap = (e_var - e0) / p.j();
        CHECK(gap >= -1e-10);
        CHECK(gap < previous_gap);
        previous_gap = gap;
    }
}
