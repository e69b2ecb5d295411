#include "dicke/errors.hpp"
#include "dicke/quench.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace dicke;

namespace {

QuenchSpec small_quench(int N, double li, double lf, int n_max) {
    QuenchSpec q;
    q.model = ModelParams{.n_atoms = N, .omega = 1.0, .omega0 = 1.0, .lambda = 0.0, .n_max = n_max};
    q.lambda_i = li;
    q.lambda_f = lf;
    return q;
}

double max_abs(const Eigen::VectorXcd& v) { return v.cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("propagator matches a matrix exponential") {
    ModelParams p{.n_atoms = 2, .omega = 1.0, .omega0 = 1.0, .lambda = 0.7, .n_max = 8};
    const auto spec = diagonalize(p);
    oracle::Gen g(3);
    StateVector s0{p, g.random_state(p.dimension())};
    const Eigen::VectorXcd want = oracle::expm_minus_i(oracle::operator_hamiltonian(p), 3.7) * s0.amplitudes;
    CHECK(max_abs(evolve(s0, spec, 3.7).amplitudes - want) < 1e-8);

    for (int trial = 0; trial < 5; ++trial) {
        const auto pr = p.with_lambda(g.uniform(0.0, 2.0));
        const double t = g.uniform(0.0, 20.0);
        const auto sr = diagonalize(pr);
        const Eigen::VectorXcd ref = oracle::expm_minus_i(oracle::operator_hamiltonian(pr), t) * s0.amplitudes;
        CHECK(max_abs(evolve(s0, sr, t).amplitudes - ref) < 1e-8);
    }
}

TEST_CASE("evolution at t=0 and of an eigenstate") {
    ModelParams p{.n_atoms = 3, .omega = 1.0, .omega0 = 1.3, .lambda = 0.9, .n_max = 10};
    const auto spec = diagonalize(p);
    oracle::Gen g(4);
    StateVector s0{p, g.random_state(p.dimension())};
    CHECK((evolve(s0, spec, 0.0).amplitudes - s0.amplitudes).norm() == 0.0);

    const Index k = 7;
    StateVector ek{p, spec.eigenvector(k).cast<cplx>()};
    const auto st = evolve(ek, spec, 12.5);
    const cplx overlap = ek.amplitudes.dot(st.amplitudes);
    CHECK(std::abs(overlap) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::arg(overlap) == doctest::Approx(std::arg(std::exp(cplx(0.0, -spec.eigenvalues()(k) * 12.5)))).epsilon(1e-9));
}

TEST_CASE("quench invariants (property)") {
    oracle::Gen g(8);
    for (int trial = 0; trial < 8; ++trial) {
        const int N = g.integer(2, 6);
        const double li = g.uniform(0.0, 1.5), lf = g.uniform(0.0, 1.5);
        auto q = small_quench(N, li, lf, 0);
        q.model.n_max = coherent_cutoff(variational_params(q.initial_params()).nu) + 20;
        const auto spec = diagonalize(q.final_params());
        const auto r = run_quench(q, spec);
        CHECK(std::abs(r.occupations.sum() - 1.0) < 1e-8);
        CHECK(r.s_diag >= 0.0);
        CHECK(r.s_diag <= std::log(static_cast<double>(spec.dimension())) + 1e-12);
        CHECK(r.heat >= -1e-10);
        CHECK(r.work_reversible == doctest::Approx(r.delta_E - r.heat));

        // The alpha=1, beta=0 state has no definite parity in general; its parity
        // projections do, and stay in their own sector.
        const auto psi0 = initial_state(q.initial_params());
        const auto flipped = apply_parity(psi0);
        StateVector even{psi0.layout, (psi0.amplitudes + flipped.amplitudes).normalized()};
        const auto re = run_quench(q, spec, even);
        double odd_weight = 0.0;
        for (Index n = 0; n < spec.dimension(); ++n)
            if (spec.parities()[static_cast<std::size_t>(n)] == -1) odd_weight += re.occupations(n);
        CHECK(odd_weight < 1e-12);

        Evolver ev(spec, psi0);
        for (double t : {0.0, 0.37, 50.0, 123.4, 200.0}) {
            const Eigen::VectorXcd psi = ev.at(t);
            CHECK(std::abs(psi.norm() - 1.0) < 1e-10);
            const Eigen::VectorXcd c = spec.project(psi);
            CHECK(std::abs(diagonal_entropy(c.cwiseAbs2()) - r.s_diag) < 1e-10);
        }
    }
}

TEST_CASE("batched evolution equals single-time evolution") {
    ModelParams p{.n_atoms = 4, .omega = 1.0, .omega0 = 1.0, .lambda = 1.1, .n_max = 12};
    const auto spec = diagonalize(p);
    oracle::Gen g(9);
    Evolver ev(spec, StateVector{p, g.random_state(p.dimension())});
    const std::vector<double> times{0.0, 1.0, 2.5, 99.0};
    const auto m = ev.at(times);
    for (std::size_t k = 0; k < times.size(); ++k) CHECK((m.col(static_cast<Index>(k)) - ev.at(times[k])).norm() < 1e-13);
}

TEST_CASE("zero quench stays on the lowest doublet") {
    auto q = small_quench(20, 2.0, 2.0, 0);
    q.model.n_max = coherent_cutoff(variational_params(q.initial_params()).nu) + 40;
    const auto spec = diagonalize(q.final_params(), DiagonalizeOptions::window(-1e300, 0.0));
    const auto r = run_quench(q, spec);
    CHECK(r.s_diag <= std::log(2.0) + 0.05);
    CHECK(r.heat / r.j < 0.1);
    CHECK(r.delta_E == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("windowed and complete spectra give the same quench") {
    auto q = small_quench(6, 1.5, 1.0, 0);
    const auto prep = prepare_spectrum(q.model, {q.lambda_i}, q.lambda_f);
    const auto& win = prep.spectrum;
    q.model.n_max = prep.plan.n_max;
    const auto full = diagonalize(q.final_params());
    CHECK(win.vector_count() < full.vector_count());
    const auto a = run_quench(q, full), b = run_quench(q, win);
    // Weight below 1e-8 outside the window can shift S_d by about 1e-8 * log(1e8).
    CHECK(std::abs(a.s_diag - b.s_diag) < 1e-6);
    CHECK(a.heat == doctest::Approx(b.heat).epsilon(1e-12));
    CHECK(a.e95_over_J == b.e95_over_J);
    CHECK(b.missing_weight < kMaxMissingWeight);

    const auto narrow = diagonalize(q.final_params(), DiagonalizeOptions::window(-1e300, full.eigenvalues()(3)));
    CHECK_THROWS_AS(run_quench(q, narrow), CutoffTooSmall);
}

TEST_CASE("pairing is checked") {
    auto q = small_quench(2, 1.0, 0.5, 30);
    const auto spec = diagonalize(q.model.with_lambda(0.6));
    CHECK_THROWS_AS(run_quench(q, spec), InvalidPairing);
    q.alpha = 0.0;
    CHECK_THROWS_AS(q.validate(), InvalidParams);
}

TEST_CASE("diagonal entropy and E95 on synthetic distributions") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(5);
    p(2) = 1.0;
    const Eigen::VectorXd e = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
    CHECK(diagonal_entropy(p) == 0.0);
    CHECK(e95_over_J(e, p, 2.0) == doctest::Approx(0.0));

    const Index D = 40;
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(D, 1.0 / D);
    const Eigen::VectorXd eu = Eigen::VectorXd::LinSpaced(D, 0.0, 39.0);
    CHECK(diagonal_entropy(u) == doctest::Approx(std::log(40.0)).epsilon(1e-14));
    CHECK(e95_over_J(eu, u, 1.0) == eu(static_cast<Index>(std::ceil(0.95 * D)) - 1));

    Eigen::VectorXd tiny(2);
    tiny << 1.0, 1e-320;
    CHECK(diagonal_entropy(tiny) == 0.0);
}

TEST_CASE("E95 grows with the quench size") {
    double previous = -1e300;
    for (double li : {1.3, 1.6, 2.0, 2.4}) {
        auto q = small_quench(8, li, 1.2, 0);
        q.model.n_max = plan_quenches(q.model, {2.4}, 1.2).n_max;
        const auto r = run_quench(q, diagonalize(q.final_params()));
        CHECK(r.e95_over_J >= previous);
        previous = r.e95_over_J;
    }
}

TEST_CASE("turning point and planner") {
    ModelParams p{.n_atoms = 10, .omega = 2.0, .omega0 = 1.0, .lambda = 0.0, .n_max = 10};
    CHECK(photon_turning_point(p, 7.0) == doctest::Approx((7.0 + 5.0) / 2.0).epsilon(1e-12));
    CHECK(photon_turning_point(p, -100.0) == 0.0);

    const auto pf = p.with_lambda(1.7);
    const double n = photon_turning_point(pf, 3.0);
    CHECK(pf.omega * n - pf.j() * std::sqrt(1.0 + 16.0 * 1.7 * 1.7 * n / 10.0) == doctest::Approx(3.0).epsilon(1e-9));

    ModelParams m{.n_atoms = 20, .omega = 1.0, .omega0 = 1.0, .lambda = 0.0, .n_max = 0};
    const auto plan = plan_quenches(m, {3.0, 3.5}, 2.5);
    CHECK(plan.n_max >= coherent_cutoff(variational_params(m.with_lambda(3.5)).nu));
    CHECK(plan.window_max > plan.max_mean);
    CHECK(plan.max_sigma > 0.0);
    PlanOptions wide;
    wide.cutoff_scale = 1.25;
    CHECK(plan_quenches(m, {3.0, 3.5}, 2.5, 1.0, 0.0, wide).n_max == static_cast<int>(std::ceil(1.25 * plan.n_max)));
}

TEST_CASE("csv row layout") {
    auto q = small_quench(4, 1.5, 1.0, 40);
    const auto r = run_quench(q, diagonalize(q.final_params()));
    const auto row = quench_csv_row(r, 0.25);
    const auto header = quench_csv_header();
    CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
    CHECK(row.rfind("1.5,1,0.5,", 0) == 0);
}
