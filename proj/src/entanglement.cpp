#include "dicke/entanglement.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <algorithm>
#include <cmath>

namespace dicke {

namespace {

using RowMajorC = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

void accumulate_reduced(const ModelParams& layout, const Eigen::VectorXcd& psi, double weight, Eigen::MatrixXcd& rho) {
    if (psi.size() != layout.dimension()) throw InvalidParams("reduce: state dimension mismatch");
    const Eigen::Map<const RowMajorC> Psi(psi.data(), layout.atom_dim(), layout.photon_dim());
    rho.noalias() += weight * (Psi * Psi.adjoint());
}

Eigen::VectorXd populations_of(const Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalFailure("reduced density matrix eigensolve failed");
    Eigen::VectorXd p = es.eigenvalues();
    for (Index k = 0; k < p.size(); ++k) {
        if (p(k) < kPopulationClamp) {
            throw NumericalConsistencyError("reduced density matrix population " + format_double(p(k)) +
                                            " is below the clamp threshold");
        }
        p(k) = std::max(p(k), 0.0);
    }
    return p;
}

ReducedDensityMatrix reduce(const ModelParams& layout, const Eigen::VectorXcd& psi) {
    ReducedDensityMatrix r;
    r.rho = Eigen::MatrixXcd::Zero(layout.atom_dim(), layout.atom_dim());
    accumulate_reduced(layout, psi, 1.0, r.rho);
    r.populations = populations_of(r.rho);
    return r;
}

double entropy_of_populations(const Eigen::VectorXd& populations) {
    double s = 0.0;
    for (Index k = 0; k < populations.size(); ++k) {
        const double p = populations(k);
        if (p > 0.0) s -= p * std::log(p);
    }
    return std::max(s, 0.0);
}

double entanglement_entropy(const ReducedDensityMatrix& rho) { return entropy_of_populations(rho.populations); }

std::vector<double> default_time_grid(int points, double t_max) {
    if (points < 2) throw InvalidParams("time grid needs at least two points");
    std::vector<double> t(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) t[static_cast<std::size_t>(k)] = t_max * k / (points - 1);
    return t;
}

EntropyTrace entropy_timeseries(const StateVector& s0, const SpectralData& spec_f, const std::vector<double>& t_grid) {
    if (t_grid.empty() || t_grid.front() != 0.0) throw InvalidParams("time grid must start at t = 0");
    if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw InvalidParams("time grid must be sorted");
    const Evolver ev(spec_f, s0);
    const auto& layout = spec_f.params();

    EntropyTrace tr;
    tr.times = t_grid;
    tr.s_ent.resize(t_grid.size());
    constexpr std::size_t chunk = 64;
    for (std::size_t k0 = 0; k0 < t_grid.size(); k0 += chunk) {
        const std::size_t k1 = std::min(t_grid.size(), k0 + chunk);
        const std::vector<double> ts(t_grid.begin() + static_cast<std::ptrdiff_t>(k0), t_grid.begin() + static_cast<std::ptrdiff_t>(k1));
        const Eigen::MatrixXcd states = ev.at(ts);
        for (std::size_t k = k0; k < k1; ++k) {
            const Eigen::VectorXcd psi = states.col(static_cast<Index>(k - k0));
            const auto r = reduce(layout, psi);
            tr.max_trace_error = std::max(tr.max_trace_error, std::abs(r.rho.trace().real() - 1.0));
            tr.s_ent[k] = entanglement_entropy(r);
        }
    }
    const std::size_t half = t_grid.size() / 2;
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = half; k < t_grid.size(); ++k) sum += tr.s_ent[k];
    const double cnt = static_cast<double>(t_grid.size() - half);
    tr.equilibrium_value = sum / cnt;
    for (std::size_t k = half; k < t_grid.size(); ++k) sq += (tr.s_ent[k] - tr.equilibrium_value) * (tr.s_ent[k] - tr.equilibrium_value);
    tr.fluctuation = std::sqrt(sq / cnt);
    tr.t_start = t_grid[half];
    tr.t_end = t_grid.back();
    return tr;
}

EntropyTrace entropy_timeseries(const QuenchSpec& q, const SpectralData& spec_f, const std::vector<double>& t_grid) {
    q.validate();
    if (!(spec_f.params() == q.final_params())) throw InvalidPairing("spectrum does not belong to the quench final model");
    return entropy_timeseries(initial_state(q.initial_params(), q.alpha, q.beta), spec_f, t_grid);
}

double diagonal_ensemble_entropy(const StateVector& s0, const SpectralData& spec_f, double cluster_gap) {
    const Evolver ev(spec_f, s0);
    const auto& c = ev.coefficients();
    const auto& layout = spec_f.params();
    const double gap = cluster_gap * layout.omega;
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(layout.atom_dim(), layout.atom_dim());

    const Index b = spec_f.vector_begin(), e = spec_f.vector_end();
    Index n = b;
    while (n < e) {
        Index m = n + 1;
        while (m < e && spec_f.eigenvalues()(m) - spec_f.eigenvalues()(m - 1) < gap) ++m;
        double weight = 0.0;
        for (Index k = n; k < m; ++k) weight += std::norm(c(k - b));
        // Clusters below double-precision dust cannot move the entropy.
        if (weight > 1e-18) {
            Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(layout.dimension());
            for (Index k = n; k < m; ++k) phi += c(k - b) * spec_f.eigenvector(k).cast<cplx>();
            accumulate_reduced(layout, phi, 1.0, rho);
        }
        n = m;
    }
    rho /= rho.trace().real();
    return entropy_of_populations(populations_of(rho));
}

double equilibrium_entropy_from_diagonal_ensemble(const QuenchSpec& q, const SpectralData& spec_f, double cluster_gap) {
    q.validate();
    if (!(spec_f.params() == q.final_params())) throw InvalidPairing("spectrum does not belong to the quench final model");
    return diagonal_ensemble_entropy(initial_state(q.initial_params(), q.alpha, q.beta), spec_f, cluster_gap);
}

} // namespace dicke
