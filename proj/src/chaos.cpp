#include "dicke/chaos.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

namespace dicke {

PeresLattice peres_lattice(const SpectralData& spec, int parity) {
    if (parity != 0 && parity != 1 && parity != -1) throw InvalidParams("peres_lattice: parity must be 0, +1 or -1");
    PeresLattice lat;
    lat.params = spec.params();
    const double j = spec.params().j();
    const Eigen::VectorXd n = spec.diagonal_expectations(number_operator_diagonal(spec.params()));
    for (Index k = spec.vector_begin(); k < spec.vector_end(); ++k) {
        const int par = spec.parities()[static_cast<std::size_t>(k)];
        if (parity != 0 && par != parity) continue;
        lat.index.push_back(k);
        lat.energy_over_J.push_back(spec.eigenvalues()(k) / j);
        lat.n_expect.push_back(std::max(0.0, n(k - spec.vector_begin())));
        lat.parity.push_back(par);
    }
    return lat;
}

namespace {

struct LineSums {
    double sx{0}, sy{0}, sxx{0}, sxy{0};
    std::size_t n{0};

    void add(double x, double y) { sx += x; sy += y; sxx += x * x; sxy += x * y; ++n; }
    // Least-squares line; a single point keeps the supplied slope.
    std::pair<double, double> line(double fallback_slope) const {
        if (n == 0) return {fallback_slope, 0.0};
        const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
        if (n == 1) return {fallback_slope, my - fallback_slope * mx};
        const double vxx = sxx - sx * mx;
        if (!(vxx > 1e-14 * std::max(1.0, sxx))) return {fallback_slope, my - fallback_slope * mx};
        const double slope = (sxy - sx * my) / vxx;
        return {slope, my - slope * mx};
    }
};

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

struct WorkBand {
    LineSums sums;
    double slope{0}, intercept{0};
    double seed_energy{0};
    std::vector<std::size_t> members;
};

void refit(WorkBand& b, const std::vector<double>& x, const std::vector<double>& y, double fallback) {
    b.sums = {};
    for (const auto m : b.members) b.sums.add(x[m], y[m]);
    std::tie(b.slope, b.intercept) = b.sums.line(fallback);
}

// Line through the latest `count` members of a band.
std::pair<double, double> local_trend(const WorkBand& b, const std::vector<double>& x, const std::vector<double>& y,
                                      std::size_t count, double fallback) {
    LineSums s;
    const std::size_t from = b.members.size() > count ? b.members.size() - count : 0;
    for (std::size_t k = from; k < b.members.size(); ++k) s.add(x[b.members[k]], y[b.members[k]]);
    return s.line(fallback);
}

} // namespace

BandModel fit_bands(const PeresLattice& lat, double region_max, const BandFitOptions& opts) {
    BandModel model;
    model.fit_region_max_energy = region_max;
    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        if (lat.energy_over_J[i] <= region_max) region.push_back(i);
    }
    if (region.size() < 2) throw InvalidParams("fit_bands: region holds fewer than two points");
    const auto& x = lat.energy_over_J;
    const auto& y = lat.n_expect;

    // Tracing pass in ascending energy.
    std::vector<WorkBand> bands;
    std::vector<std::pair<double, double>> trend;  // local line per band
    std::vector<double> residuals;
    double reference_slope = 0.0;
    auto threshold = [&]() { return std::max(opts.outlier_factor * median_of(residuals), opts.residual_floor); };
    auto nearest = [&](std::size_t i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t b = 0; b < bands.size(); ++b) {
            const double d = std::abs(y[i] - (trend[b].first * x[i] + trend[b].second));
            if (d < best) { best = d; arg = b; }
        }
        return std::make_pair(best, arg);
    };
    auto update_trend = [&](std::size_t b) {
        trend[b] = local_trend(bands[b], x, y, opts.trend_points, reference_slope);
        if (bands[b].members.size() >= 2) reference_slope = trend[b].first;
    };
    for (std::size_t g0 = 0; g0 < region.size();) {
        // Points at one energy cannot share a band; take the best explained first.
        std::size_t g1 = g0 + 1;
        while (g1 < region.size() && x[region[g1]] == x[region[g0]]) ++g1;
        std::vector<std::size_t> group(region.begin() + static_cast<std::ptrdiff_t>(g0),
                                       region.begin() + static_cast<std::ptrdiff_t>(g1));
        if (group.size() > 1) {
            std::stable_sort(group.begin(), group.end(),
                             [&](std::size_t a, std::size_t b) { return nearest(a).first < nearest(b).first; });
        }
        for (const auto i : group) {
            auto [best, arg] = nearest(i);
            const bool fits = !bands.empty() && best <= threshold();
            // A lone seed takes the next point that no line explains.
            const bool pending = !bands.empty() && bands.back().members.size() == 1 &&
                                 x[bands.back().members.back()] != x[i];
            if (!fits && !pending) {
                WorkBand nb;
                nb.seed_energy = x[i];
                nb.members.push_back(i);
                bands.push_back(std::move(nb));
                trend.emplace_back();
                update_trend(bands.size() - 1);
                continue;
            }
            if (!fits) arg = bands.size() - 1;
            const bool first_pair = bands[arg].members.size() == 1;
            bands[arg].members.push_back(i);
            update_trend(arg);
            if (!first_pair) residuals.push_back(best);
        }
        g0 = g1;
    }
    for (auto& b : bands) refit(b, x, y, reference_slope);

    auto drop_small = [&](std::vector<WorkBand>& bs) {
        std::vector<WorkBand> kept;
        for (auto& b : bs) {
            if (b.members.size() >= opts.min_members) {
                kept.push_back(std::move(b));
            } else {
                model.warnings.push_back("band starting at E/J=" + format_double(b.seed_energy) + " has only " +
                                         std::to_string(b.members.size()) + " point(s); dropped");
            }
        }
        bs = std::move(kept);
    };
    drop_small(bands);
    if (bands.empty()) throw InvalidParams("fit_bands: no band with enough points in the region");

    // Refinement: every traced point moves to its nearest eligible line, then
    // the lines are refit, until assignments are stable.
    std::vector<int> owner(lat.size(), -1);
    for (std::size_t b = 0; b < bands.size(); ++b)
        for (const auto m : bands[b].members) owner[m] = static_cast<int>(b);
    for (int it = 0; it < opts.max_iterations; ++it) {
        model.iterations = it + 1;
        bool changed = false;
        std::vector<int> next(lat.size(), -1);
        for (const auto i : region) {
            if (owner[i] < 0) continue;
            double best = std::numeric_limits<double>::infinity();
            int arg = owner[i];
            for (std::size_t b = 0; b < bands.size(); ++b) {
                if (bands[b].seed_energy > x[i]) continue;
                const double d = std::abs(y[i] - (bands[b].slope * x[i] + bands[b].intercept));
                if (d < best) { best = d; arg = static_cast<int>(b); }
            }
            next[i] = arg;
            changed = changed || next[i] != owner[i];
        }
        owner = std::move(next);
        for (auto& b : bands) b.members.clear();
        for (const auto i : region) {
            if (owner[i] >= 0) bands[static_cast<std::size_t>(owner[i])].members.push_back(i);
        }
        for (auto& b : bands) refit(b, x, y, reference_slope);
        if (!changed) break;
    }
    drop_small(bands);

    std::vector<char> assigned(lat.size(), 0);
    for (auto& b : bands) {
        Band out;
        out.slope = b.slope;
        out.intercept = b.intercept;
        out.members = b.members;
        out.start_energy_over_J = x[b.members.front()];
        for (const auto m : b.members) assigned[m] = 1;
        model.bands.push_back(std::move(out));
    }
    std::sort(model.bands.begin(), model.bands.end(),
              [](const Band& a, const Band& b) { return a.start_energy_over_J < b.start_energy_over_J; });
    for (const auto i : region) {
        if (!assigned[i]) model.unassigned.push_back(i);
    }
    return model;
}

BandModel extrapolate_bands(const BandModel& fitted, double max_energy_over_J, int degree) {
    if (degree < 1) throw InvalidParams("extrapolate_bands: degree must be >= 1");
    BandModel out = fitted;
    const auto k_fit = static_cast<Index>(fitted.bands.size());
    if (k_fit < degree + 2) {
        out.warnings.push_back("extrapolate_bands: " + std::to_string(k_fit) + " fitted band(s) cannot fix a degree " +
                               std::to_string(degree) + " trend; no bands added");
        return out;
    }
    Eigen::MatrixXd a(k_fit, degree + 1);
    Eigen::VectorXd starts(k_fit), intercepts(k_fit);
    double slope = 0.0;
    for (Index k = 0; k < k_fit; ++k) {
        const auto& b = fitted.bands[static_cast<std::size_t>(k)];
        for (int j = 0; j <= degree; ++j) a(k, j) = std::pow(static_cast<double>(k), j);
        starts(k) = b.start_energy_over_J;
        intercepts(k) = b.intercept;
        slope += b.slope / static_cast<double>(k_fit);
    }
    const auto qr = a.colPivHouseholderQr();
    const Eigen::VectorXd cs = qr.solve(starts), ci = qr.solve(intercepts);
    auto poly = [&](const Eigen::VectorXd& c, double k) {
        double v = 0.0;
        for (Index j = c.size() - 1; j >= 0; --j) v = v * k + c(j);
        return v;
    };
    double previous = fitted.bands.back().start_energy_over_J;
    for (Index k = k_fit;; ++k) {
        const double start = poly(cs, static_cast<double>(k));
        // The family ends where the start energies stop rising.
        if (start > max_energy_over_J || start <= previous) break;
        Band b;
        b.slope = slope;
        b.intercept = poly(ci, static_cast<double>(k));
        b.start_energy_over_J = start;
        b.extrapolated = true;
        out.bands.push_back(std::move(b));
        previous = start;
    }
    return out;
}

double distance_to_bands(const BandModel& bands, double e, double n) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : bands.bands) {
        if (b.start_energy_over_J > e) continue;
        best = std::min(best, std::abs(n - b.predict(e)));
    }
    if (!std::isfinite(best)) {
        for (const auto& b : bands.bands) best = std::min(best, std::abs(n - b.predict(e)));
    }
    return best;
}

ChaosProfile chaos_profile(const PeresLattice& lat, const BandModel& bands, std::size_t window) {
    if (window < 2) throw InvalidParams("chaos_profile: window must be >= 2");
    if (bands.bands.empty()) throw InvalidParams("chaos_profile: no fitted bands");
    ChaosProfile prof;
    prof.window_size = window;
    const std::size_t blocks = lat.size() / window;
    for (std::size_t b = 0; b < blocks; ++b) {
        double se = 0.0, sd = 0.0;
        for (std::size_t k = b * window; k < (b + 1) * window; ++k) {
            se += lat.energy_over_J[k];
            sd += distance_to_bands(bands, lat.energy_over_J[k], lat.n_expect[k]);
        }
        prof.centers.push_back(se / static_cast<double>(window));
        prof.d_values.push_back(sd / static_cast<double>(window));
    }
    return prof;
}

std::vector<double> log_occupation_series(const QuenchResult& r) {
    std::vector<double> x(static_cast<std::size_t>(r.occupations.size()));
    for (Index n = 0; n < r.occupations.size(); ++n) x[static_cast<std::size_t>(n)] = std::log10(std::max(r.occupations(n), 1e-30));
    return x;
}

OccupationSeries log_occupation_series(const QuenchResult& r, const SpectralData& spec, int parity) {
    if (parity != 0 && parity != 1 && parity != -1) throw InvalidParams("log_occupation_series: parity must be 0, +1 or -1");
    if (spec.dimension() != r.occupations.size()) throw InvalidPairing("log_occupation_series: spectrum does not match the quench");
    OccupationSeries out;
    for (Index n = spec.vector_begin(); n < spec.vector_end(); ++n) {
        if (parity != 0 && spec.parities()[static_cast<std::size_t>(n)] != parity) continue;
        out.energy_over_J.push_back(spec.eigenvalues()(n) / spec.params().j());
        out.x.push_back(std::log10(std::max(r.occupations(n), 1e-30)));
    }
    return out;
}

std::vector<double> power_spectrum(const std::vector<double>& x) {
    const int L = static_cast<int>(x.size());
    if (L == 0) return {};
    std::vector<double> in(x);
    const int half = L / 2 + 1;
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(half));
    {
        // The FFTW planner is not thread-safe.
        static std::mutex planner;
        std::lock_guard lock(planner);
        fftw_plan plan = fftw_plan_dft_r2c_1d(L, in.data(), out, FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    std::vector<double> p(static_cast<std::size_t>(L));
    for (int k = 0; k < half; ++k) {
        const double v = out[k][0] * out[k][0] + out[k][1] * out[k][1];
        p[static_cast<std::size_t>(k)] = v;
        if (k > 0) p[static_cast<std::size_t>(L - k)] = v;
    }
    fftw_free(out);
    return p;
}

std::vector<std::size_t> dominant_peaks(const std::vector<double>& power, double factor) {
    std::vector<std::size_t> peaks;
    const std::size_t L = power.size();
    if (L == 0) return peaks;
    const double thr = factor * median_of(power);
    if (L == 1) {
        if (power[0] > thr) peaks.push_back(0);
        return peaks;
    }
    for (std::size_t k = 0; k < L; ++k) {
        const double left = power[(k + L - 1) % L], right = power[(k + 1) % L];
        // A plateau of equal bins counts once, at its right end.
        if (power[k] > thr && power[k] >= left && power[k] > right) peaks.push_back(k);
    }
    return peaks;
}

FourierReport band_fourier(const std::vector<double>& series, const std::vector<EnergyRegion>& regions,
                           const std::vector<double>& energies) {
    if (series.size() != energies.size()) throw InvalidParams("band_fourier: series and energies differ in length");
    FourierReport rep;
    for (const auto& reg : regions) {
        FourierRegionReport r;
        r.region = reg;
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (energies[i] >= reg.lo_over_J && energies[i] <= reg.hi_over_J) r.subsequence.push_back(series[i]);
        }
        if (r.subsequence.empty()) {
            rep.warnings.push_back("region " + reg.label + " holds no eigenstates; skipped");
            continue;
        }
        if (r.subsequence.size() < 8) {
            throw InvalidParams("region " + reg.label + " holds only " + std::to_string(r.subsequence.size()) +
                                " eigenstates; at least 8 are required");
        }
        r.power = power_spectrum(r.subsequence);
        r.median_power = median_of(r.power);
        r.peaks = dominant_peaks(r.power);
        r.dominant_peak_count = r.peaks.size();
        rep.regions.push_back(std::move(r));
    }
    return rep;
}

} // namespace dicke
