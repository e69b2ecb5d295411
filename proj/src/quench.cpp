#include "dicke/quench.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"
#include "dicke/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dicke {

void QuenchSpec::validate() const {
    if (!(lambda_i >= 0.0) || !std::isfinite(lambda_i)) throw InvalidParams("lambda_i must be finite and >= 0");
    if (!(lambda_f >= 0.0) || !std::isfinite(lambda_f)) throw InvalidParams("lambda_f must be finite and >= 0");
    if (alpha == 0.0 && beta == 0.0) throw InvalidParams("alpha and beta are both zero");
    final_params().validate();
}

double diagonal_entropy(const Eigen::VectorXd& occupations) {
    double s = 0.0;
    for (Index n = 0; n < occupations.size(); ++n) {
        const double p = occupations(n);
        if (p >= 1e-300) s -= p * std::log(p);
    }
    return s;
}

double e95_over_J(const Eigen::VectorXd& energies, const Eigen::VectorXd& occupations, double j) {
    if (energies.size() != occupations.size() || energies.size() == 0) throw InvalidParams("e95: size mismatch");
    const double target = 0.95 * (1.0 - 1e-12);
    double cum = 0.0;
    for (Index n = 0; n < occupations.size(); ++n) {
        cum += occupations(n);
        if (cum >= target) return energies(n) / j;
    }
    return energies(energies.size() - 1) / j;
}

double e95(const QuenchResult& r) { return e95_over_J(r.energies, r.occupations, r.j); }

std::vector<std::pair<double, double>> energy_distribution_series(const QuenchResult& r) {
    std::vector<std::pair<double, double>> out;
    out.reserve(static_cast<std::size_t>(r.energies.size()));
    for (Index n = 0; n < r.energies.size(); ++n) out.emplace_back(r.energies(n) / r.j, r.occupations(n));
    return out;
}

QuenchResult run_quench(const QuenchSpec& q, const SpectralData& spec_f, double max_missing_weight) {
    q.validate();
    const auto pi = q.initial_params();
    const auto psi0 = initial_state(pi, q.alpha, q.beta);
    return run_quench(q, spec_f, psi0, max_missing_weight);
}

QuenchResult run_quench(const QuenchSpec& q, const SpectralData& spec_f, const StateVector& psi0,
                        double max_missing_weight) {
    q.validate();
    const auto pf = q.final_params();
    if (!(spec_f.params() == pf)) {
        throw InvalidPairing("spectrum " + spec_f.params().canonical() + " does not belong to quench final model " +
                             pf.canonical());
    }
    if (!same_layout(psi0.layout, pf) || psi0.dimension() != pf.dimension()) {
        throw InvalidPairing("initial state layout does not match the final model");
    }

    QuenchResult r;
    r.spec = q;
    r.j = pf.j();
    r.energies = spec_f.eigenvalues();
    r.occupations = Eigen::VectorXd::Zero(spec_f.dimension());
    const Eigen::VectorXcd c = spec_f.project(psi0.amplitudes);
    for (Index n = spec_f.vector_begin(); n < spec_f.vector_end(); ++n) {
        r.occupations(n) = std::norm(c(n - spec_f.vector_begin()));
    }
    r.missing_weight = std::max(0.0, 1.0 - r.occupations.sum());
    if (r.missing_weight > max_missing_weight) {
        throw CutoffTooSmall("eigenvector window [" + format_double(spec_f.window_min()) + ", " +
                             format_double(spec_f.window_max()) + "] misses weight " + format_double(r.missing_weight) +
                             " of the initial state");
    }
    r.initial_tail_weight = photon_tail_weight(pf, psi0.amplitudes, top_shell_count(pf.n_max));
    r.s_diag = diagonal_entropy(r.occupations);
    r.initial_energy = energy_expectation(q.initial_params(), psi0.amplitudes);
    r.final_energy = energy_expectation(pf, psi0.amplitudes);
    r.ground_energy = spec_f.ground_energy();
    r.delta_E = r.final_energy - r.initial_energy;
    r.heat = r.final_energy - r.ground_energy;
    r.heat_meanfield_ground = q.lambda_f > pf.lambda_c()
                                  ? r.final_energy - r.j * mf_ground_energy(q.lambda_f, pf.omega, pf.omega0)
                                  : std::numeric_limits<double>::quiet_NaN();
    r.work_reversible = r.delta_E - r.heat;
    r.e95_over_J = e95_over_J(r.energies, r.occupations, r.j);
    r.mean_final_energy_over_J = r.final_energy / r.j;
    return r;
}

// --------------------------------------------------------------------------

Evolver::Evolver(const SpectralData& spec, const StateVector& s0) : spec_(&spec), layout_(spec.params()) {
    if (!same_layout(s0.layout, spec.params()) || s0.dimension() != spec.dimension()) {
        throw InvalidPairing("evolve: state layout does not match the spectrum");
    }
    coeff_ = spec.project(s0.amplitudes);
    missing_ = std::max(0.0, s0.amplitudes.squaredNorm() - coeff_.squaredNorm());
    if (missing_ > kMaxMissingWeight) {
        throw CutoffTooSmall("evolve: eigenvector window misses weight " + format_double(missing_));
    }
}

Eigen::VectorXcd Evolver::at(double t) const {
    return at(std::vector<double>{t}).col(0);
}

Eigen::MatrixXcd Evolver::at(const std::vector<double>& times) const {
    const auto& spec = *spec_;
    const auto T = static_cast<Index>(times.size());
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(spec.dimension(), T);
    for (int s = 0; s < 2; ++s) {
        const auto& sec = spec.sector(s);
        const Index K = sec.vectors.cols();
        if (K == 0) continue;
        Eigen::VectorXcd c = Eigen::VectorXcd::Zero(K);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
        for (Index n = spec.vector_begin(); n < spec.vector_end(); ++n) {
            if (spec.sector_of(n) != s) continue;
            c(spec.column_of(n)) = coeff_(n - spec.vector_begin());
            e(spec.column_of(n)) = spec.eigenvalues()(n);
        }
        Eigen::MatrixXd re(K, T), im(K, T);
        for (Index k = 0; k < T; ++k) {
            const double t = times[static_cast<std::size_t>(k)];
            for (Index i = 0; i < K; ++i) {
                const cplx v = c(i) * std::polar(1.0, -e(i) * t);
                re(i, k) = v.real();
                im(i, k) = v.imag();
            }
        }
        const Eigen::MatrixXd yr = sec.vectors * re;
        const Eigen::MatrixXd yi = sec.vectors * im;
        for (std::size_t b = 0; b < sec.basis.size(); ++b) {
            const auto row = static_cast<Index>(b);
            for (Index k = 0; k < T; ++k) out(sec.basis[b], k) = cplx(yr(row, k), yi(row, k));
        }
    }
    return out;
}

StateVector evolve(const StateVector& s0, const SpectralData& spec, double t) {
    if (t == 0.0) return s0;
    Evolver ev(spec, s0);
    return StateVector{s0.layout, ev.at(t)};
}

EnergyMoments energy_moments(const ModelParams& p, const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd h = apply_hamiltonian(p, psi);
    EnergyMoments m;
    m.mean = psi.dot(h).real();
    m.sigma = std::sqrt(std::max(0.0, h.squaredNorm() - m.mean * m.mean));
    return m;
}

EnergyWindow energy_window_bound(const ModelParams& p, const Eigen::VectorXcd& psi, double tail, int steps) {
    if (!(tail > 0.0)) throw InvalidParams("energy_window_bound: tail must be > 0");
    const Index D = psi.size();
    const int m_max = static_cast<int>(std::min<Index>(steps, D));
    Eigen::MatrixXcd Q(D, m_max);
    std::vector<double> a, b;
    Q.col(0) = psi.normalized();
    for (int k = 0; k < m_max; ++k) {
        Eigen::VectorXcd r = apply_hamiltonian(p, Eigen::VectorXcd(Q.col(k)));
        a.push_back(Q.col(k).dot(r).real());
        for (int pass = 0; pass < 2; ++pass) r -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).adjoint() * r);
        const double beta = r.norm();
        if (k + 1 == m_max || beta <= 1e-12 * std::max(1.0, std::abs(a.back()))) break;
        b.push_back(beta);
        Q.col(k + 1) = r / beta;
    }
    const Index m = static_cast<Index>(a.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (Index k = 0; k < m; ++k) {
        T(k, k) = a[static_cast<std::size_t>(k)];
        if (k + 1 < m) T(k, k + 1) = T(k + 1, k) = b[static_cast<std::size_t>(k)];
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const auto weight = [&](Index k) { return es.eigenvectors()(0, k) * es.eigenvectors()(0, k); };
    // An exhausted Krylov space reproduces the measure exactly.
    const bool exact = m < m_max || m == D;
    if (!exact && weight(m - 1) > tail) {
        throw NumericalConsistencyError("energy_window_bound: " + std::to_string(m) +
                                        " Lanczos steps cannot resolve a tail of " + format_double(tail));
    }
    EnergyWindow w;
    double above = 0.0;
    Index hi = m - 1;
    while (hi > 0 && above + weight(hi) + weight(hi - 1) <= tail) above += weight(hi--);
    double below = 0.0;
    Index lo = 0;
    while (lo < hi && below + weight(lo) + weight(lo + 1) <= tail) below += weight(lo++);
    // A heavy lowest node cannot bound the weight below it; fall back to the bottom of the spectrum.
    // Levels sitting exactly on a node belong inside; pad against roundoff.
    const auto pad = [](double e) { return 1e-7 * (1.0 + std::abs(e)); };
    w.lo = !exact && weight(0) > tail ? -std::numeric_limits<double>::infinity()
                                      : es.eigenvalues()(lo) - pad(es.eigenvalues()(lo));
    w.hi = es.eigenvalues()(hi) + pad(es.eigenvalues()(hi));
    return w;
}

double photon_turning_point(const ModelParams& p, double energy) {
    const double j = p.j();
    const double g = 16.0 * p.lambda * p.lambda / p.n_atoms;
    auto emin = [&](double n) { return p.omega * n - j * std::sqrt(p.omega0 * p.omega0 + g * n); };
    // emin is convex; start from its vertex and bisect on the increasing branch.
    double lo = 0.0;
    if (g > 0.0) {
        const double r = j * g / (2.0 * p.omega);
        lo = std::max(0.0, (r * r - p.omega0 * p.omega0) / g);
    }
    if (emin(lo) >= energy) return lo;
    double hi = std::max(1.0, 2.0 * lo);
    while (emin(hi) <= energy) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (emin(mid) <= energy ? lo : hi) = mid;
    }
    return lo;
}

int coherent_cutoff(double nu, double tail_tol) {
    int n = std::max(0, static_cast<int>(nu * nu));
    while (coherent_tail_weight(nu, n) > tail_tol) n += std::max(1, static_cast<int>(0.25 * std::abs(nu)));
    return n;
}

int cutoff_for_energy(const ModelParams& p, double energy, const PlanOptions& opts) {
    const double n_turn = photon_turning_point(p, energy);
    const int beyond = static_cast<int>(std::ceil(opts.airy_shells * std::cbrt(n_turn)));
    return std::max(opts.minimum_cutoff, static_cast<int>(std::ceil(n_turn)) + beyond + opts.extra_shells);
}

QuenchPlan plan_quenches(const ModelParams& model, const std::vector<double>& lambda_i, double lambda_f, cplx alpha,
                         cplx beta, const PlanOptions& opts) {
    if (lambda_i.empty()) throw InvalidParams("plan_quenches: no initial couplings");
    QuenchPlan plan;
    plan.n_max = opts.minimum_cutoff;
    plan.window_max = -std::numeric_limits<double>::infinity();
    plan.window_min = std::numeric_limits<double>::infinity();
    plan.max_mean = -std::numeric_limits<double>::infinity();
    const auto pf = model.with_lambda(lambda_f);
    for (const double li : lambda_i) {
        const auto pi = model.with_lambda(li);
        const double nu = std::abs(variational_params(pi).nu);
        // Generous layout for the moments: the state itself must not be truncated.
        const int n_state = coherent_cutoff(nu, 1e-16) + 8;
        const auto layout = model.with_cutoff(n_state);
        const auto psi = initial_state(layout.with_lambda(li), alpha, beta);
        const auto mom = energy_moments(layout.with_lambda(lambda_f), psi.amplitudes);
        // The Krylov space spreads one photon per step; give it room.
        const auto wide = model.with_cutoff(n_state + opts.lanczos_steps).with_lambda(lambda_f);
        Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(wide.dimension());
        for (Index i = 0; i < psi.dimension(); ++i) {
            const auto bi = BasisIndex::from_flat(layout, i);
            padded(bi.flat(wide)) = psi.amplitudes(i);
        }
        const auto win = energy_window_bound(wide, padded, opts.tail_weight, opts.lanczos_steps);
        const double top = win.hi + opts.sigma_margin * mom.sigma;
        const double bottom = win.lo - opts.sigma_margin * mom.sigma;
        plan.n_max = std::max({plan.n_max, n_state + opts.extra_shells, cutoff_for_energy(pf, top, opts)});
        plan.window_max = std::max(plan.window_max, top);
        plan.window_min = std::min(plan.window_min, bottom);
        plan.max_mean = std::max(plan.max_mean, mom.mean);
        plan.max_sigma = std::max(plan.max_sigma, mom.sigma);
    }
    if (opts.fixed_cutoff > 0) plan.n_max = opts.fixed_cutoff;
    if (opts.cutoff_scale != 1.0) {
        if (!(opts.cutoff_scale >= 1.0)) throw InvalidParams("plan_quenches: cutoff_scale must be >= 1");
        plan.n_max = static_cast<int>(std::ceil(opts.cutoff_scale * plan.n_max));
    }
    return plan;
}

PreparedSpectrum prepare_spectrum(const ModelParams& model, const std::vector<double>& lambda_i, double lambda_f,
                                  cplx alpha, cplx beta, PlanOptions opts, const SpectralCache* cache,
                                  int max_attempts, double sigma_step) {
    double worst = 0.0;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        PreparedSpectrum out;
        out.plan = plan_quenches(model, lambda_i, lambda_f, alpha, beta, opts);
        const auto pf = model.with_cutoff(out.plan.n_max).with_lambda(lambda_f);
        const auto dopts = DiagonalizeOptions::window(out.plan.window_min, out.plan.window_max);
        out.spectrum = cache ? cache->get_or_compute(pf, dopts) : diagonalize(pf, dopts);
        worst = 0.0;
        for (const double li : lambda_i) {
            const auto psi = initial_state(pf.with_lambda(li), alpha, beta);
            const Eigen::VectorXcd c = out.spectrum.project(psi.amplitudes);
            worst = std::max(worst, std::max(0.0, 1.0 - c.squaredNorm()));
        }
        if (worst <= kMaxMissingWeight) {
            out.options = opts;
            out.max_missing_weight = worst;
            out.attempts = attempt;
            return out;
        }
        opts.sigma_margin += sigma_step;
    }
    throw CutoffTooSmall("energy window still misses weight " + format_double(worst) + " after " +
                         std::to_string(max_attempts) + " attempts");
}

std::string quench_csv_header() {
    return "lambda_i,lambda_f,delta_lambda,deltaE_over_J,Q_over_J,S_d,E95_over_J,S_ent_equilibrium,Q_mf_over_J";
}

std::string quench_csv_row(const QuenchResult& r, double s_ent_equilibrium) {
    const auto& q = r.spec;
    const auto pf = q.final_params();
    std::string qmf = "nan";
    if (q.lambda_f > pf.lambda_c() && q.delta_lambda() >= 0.0) {
        qmf = format_double17(mf_heat_general(q.delta_lambda(), q.lambda_f, pf.omega, pf.omega0));
    }
    return format_double17(q.lambda_i) + "," + format_double17(q.lambda_f) + "," + format_double17(q.delta_lambda()) +
           "," + format_double17(r.delta_E / r.j) + "," + format_double17(r.heat / r.j) + "," +
           format_double17(r.s_diag) + "," + format_double17(r.e95_over_J) + "," + format_double17(s_ent_equilibrium) +
           "," + qmf;
}

} // namespace dicke
