#include "dicke/chaos.hpp"
#include "dicke/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dicke;

namespace {

// Points (e, slope*e + intercept + noise) on a few lines, sorted by energy.
PeresLattice synthetic_lattice(const std::vector<std::pair<double, double>>& lines, const std::vector<double>& starts,
                               int per_line, double sigma, oracle::Gen& g) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t b = 0; b < lines.size(); ++b) {
        for (int k = 0; k < per_line; ++k) {
            const double e = starts[b] + 0.1 * k + g.uniform(0.0, 0.05);
            pts.emplace_back(e, lines[b].first * e + lines[b].second + sigma * g.normal());
        }
    }
    std::sort(pts.begin(), pts.end());
    PeresLattice lat;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        lat.index.push_back(static_cast<Index>(i));
        lat.energy_over_J.push_back(pts[i].first);
        lat.n_expect.push_back(pts[i].second);
        lat.parity.push_back(1);
    }
    return lat;
}

} // namespace

TEST_CASE("uncoupled lattice is exact") {
    ModelParams p{.n_atoms = 4, .omega = 1.0, .omega0 = 1.0, .lambda = 0.0, .n_max = 6};
    const auto spec = diagonalize(p);
    const auto lat = peres_lattice(spec);
    REQUIRE(lat.size() == static_cast<std::size_t>(p.dimension()));
    double total = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        CHECK(lat.n_expect[i] == std::round(lat.n_expect[i]));
        total += lat.n_expect[i];
        const double m = lat.energy_over_J[i] * p.j() - lat.n_expect[i];
        CHECK(std::abs(m - std::round(m + p.j()) + p.j()) < 1e-12);
    }
    CHECK(total == doctest::Approx((p.n_atoms + 1) * p.n_max * (p.n_max + 1) / 2.0).epsilon(1e-12));

    const auto bands = fit_bands(lat, 1e9);
    for (const auto& b : bands.bands)
        for (const auto m : b.members) CHECK(std::abs(lat.n_expect[m] - b.predict(lat.energy_over_J[m])) < 1e-9);
    const auto prof = chaos_profile(lat, bands, 5);
    CHECK(prof.d_values.size() == lat.size() / 5);
    for (double d : prof.d_values) CHECK(d < 1e-9);
}

TEST_CASE("photon-number trace identity") {
    ModelParams p{.n_atoms = 5, .omega = 1.0, .omega0 = 1.0, .lambda = 1.3, .n_max = 14};
    const auto lat = peres_lattice(diagonalize(p));
    const double total = std::accumulate(lat.n_expect.begin(), lat.n_expect.end(), 0.0);
    CHECK(total == doctest::Approx((p.n_atoms + 1) * p.n_max * (p.n_max + 1) / 2.0).epsilon(1e-6));
    for (double n : lat.n_expect) {
        CHECK(n >= 0.0);
        CHECK(n <= p.n_max + 1e-9);
    }
    CHECK(std::is_sorted(lat.energy_over_J.begin(), lat.energy_over_J.end()));
    const auto even = peres_lattice(diagonalize(p), 1);
    for (int par : even.parity) CHECK(par == 1);
}

TEST_CASE("two noisy lines are recovered") {
    oracle::Gen g(17);
    const double sigma = 0.01;
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<std::pair<double, double>> lines{{g.uniform(0.5, 1.5), 1.0}, {g.uniform(0.5, 1.5), 4.0}};
        const auto lat = synthetic_lattice(lines, {0.0, 1.0}, 40, sigma, g);
        const auto model = fit_bands(lat, 1e9);
        REQUIRE(model.bands.size() == 2);
        for (std::size_t b = 0; b < 2; ++b) {
            // Slope standard error for ~40 points spread over ~4 units.
            const auto& band = model.bands[b];
            double mx = 0.0, sxx = 0.0;
            for (auto m : band.members) mx += lat.energy_over_J[m];
            mx /= static_cast<double>(band.members.size());
            for (auto m : band.members) sxx += (lat.energy_over_J[m] - mx) * (lat.energy_over_J[m] - mx);
            CHECK(std::abs(band.slope - lines[b].first) < 3.0 * sigma / std::sqrt(sxx));
        }
        CHECK(model.bands[1].start_energy_over_J >= 1.0);
        CHECK(model.bands[1].start_energy_over_J < 1.05);
    }
}

TEST_CASE("band membership is a partition") {
    oracle::Gen g(19);
    auto lat = synthetic_lattice({{1.0, 0.0}, {1.0, 3.0}, {0.8, 7.0}}, {0.0, 0.5, 1.5}, 25, 0.02, g);
    // A few scattered outliers that belong to no line.
    for (double e : {0.73, 1.91, 2.22}) {
        const auto pos = std::lower_bound(lat.energy_over_J.begin(), lat.energy_over_J.end(), e) - lat.energy_over_J.begin();
        lat.energy_over_J.insert(lat.energy_over_J.begin() + pos, e);
        lat.n_expect.insert(lat.n_expect.begin() + pos, e + 1.5);
        lat.index.push_back(static_cast<Index>(lat.index.size()));
        lat.parity.push_back(1);
    }
    const auto model = fit_bands(lat, 1e9);
    std::vector<int> seen(lat.size(), 0);
    for (const auto& b : model.bands) {
        CHECK(std::is_sorted(b.members.begin(), b.members.end()));
        CHECK(std::isfinite(b.slope));
        for (auto m : b.members) ++seen[m];
    }
    for (auto u : model.unassigned) ++seen[u];
    for (int s : seen) CHECK(s == 1);
    CHECK(model.bands.size() == 3);
}

TEST_CASE("energy shift leaves distances unchanged") {
    oracle::Gen g(23);
    const auto lat = synthetic_lattice({{1.0, 0.5}, {0.7, 3.0}}, {-3.0, -2.0}, 30, 0.01, g);
    auto shifted = lat;
    for (auto& e : shifted.energy_over_J) e += 2.75;
    const auto a = fit_bands(lat, 1e9), b = fit_bands(shifted, 1e9);
    REQUIRE(a.bands.size() == b.bands.size());
    for (std::size_t i = 0; i < lat.size(); ++i) {
        CHECK(distance_to_bands(a, lat.energy_over_J[i], lat.n_expect[i]) ==
              doctest::Approx(distance_to_bands(b, shifted.energy_over_J[i], shifted.n_expect[i])).epsilon(1e-9).scale(1e-9));
    }
}

TEST_CASE("band fitting preconditions") {
    PeresLattice lat;
    lat.energy_over_J = {0.0, 1.0};
    lat.n_expect = {0.0, 0.0};
    lat.index = {0, 1};
    lat.parity = {1, 1};
    CHECK_THROWS_AS(fit_bands(lat, -1.0), InvalidParams);

    oracle::Gen g(29);
    auto two = synthetic_lattice({{0.0, 0.0}, {0.0, 5.0}}, {0.0, 2.0}, 20, 0.0, g);
    // A stray pair far from both lines cannot form a band.
    for (double e : {3.01, 3.02}) {
        const auto pos = std::lower_bound(two.energy_over_J.begin(), two.energy_over_J.end(), e) - two.energy_over_J.begin();
        two.energy_over_J.insert(two.energy_over_J.begin() + pos, e);
        two.n_expect.insert(two.n_expect.begin() + pos, 20.0);
        two.index.push_back(static_cast<Index>(two.index.size()));
        two.parity.push_back(1);
    }
    const auto model = fit_bands(two, 1e9);
    CHECK(model.bands.size() == 2);
    CHECK_FALSE(model.warnings.empty());
    CHECK(model.unassigned.size() == 2);
}

TEST_CASE("band family extrapolation follows quadratic starts") {
    // Parallel lines whose start energies and intercepts are quadratic in the band index.
    auto start = [](double k) { return -6.0 + 1.2 * k - 0.05 * k * k; };
    auto intercept = [](double k) { return 80.0 - 12.0 * k + 0.3 * k * k; };
    BandModel fitted;
    for (int k = 0; k < 5; ++k) {
        Band b;
        b.slope = 10.0 + 0.01 * (k % 2 ? 1 : -1);
        b.intercept = intercept(k);
        b.start_energy_over_J = start(k);
        b.members = {static_cast<std::size_t>(k)};
        fitted.bands.push_back(b);
    }
    const auto family = extrapolate_bands(fitted, 100.0);
    // Starts rise until the vertex at k = 12.
    REQUIRE(family.bands.size() == 13);
    for (std::size_t k = 5; k < family.bands.size(); ++k) {
        const auto& b = family.bands[k];
        CHECK(b.extrapolated);
        CHECK(b.members.empty());
        CHECK(b.slope == doctest::Approx(10.0 - 0.01 / 5.0));
        CHECK(b.start_energy_over_J == doctest::Approx(start(static_cast<double>(k))));
        CHECK(b.intercept == doctest::Approx(intercept(static_cast<double>(k))));
    }
    for (std::size_t k = 0; k < 5; ++k) CHECK_FALSE(family.bands[k].extrapolated);

    const auto capped = extrapolate_bands(fitted, start(7.5));
    CHECK(capped.bands.size() == 8);

    fitted.bands.resize(3);
    const auto too_few = extrapolate_bands(fitted, 100.0);
    CHECK(too_few.bands.size() == 3);
    CHECK_FALSE(too_few.warnings.empty());
    CHECK_THROWS_AS(extrapolate_bands(fitted, 100.0, 0), InvalidParams);
}

TEST_CASE("log-occupation series") {
    QuenchResult r;
    r.occupations = Eigen::VectorXd::Zero(4);
    r.occupations(0) = 1.0;
    const auto x = log_occupation_series(r);
    CHECK(x[0] == 0.0);
    for (std::size_t k = 1; k < 4; ++k) CHECK(x[k] == -30.0);
    r.occupations = Eigen::VectorXd::Constant(8, 1.0 / 8.0);
    for (double v : log_occupation_series(r)) CHECK(v == doctest::Approx(-std::log10(8.0)));
}

TEST_CASE("power spectra and peak counting") {
    const std::vector<double> constant(32, -3.0);
    const auto pc = power_spectrum(constant);
    REQUIRE(pc.size() == 32);
    CHECK(pc[0] == doctest::Approx(32.0 * 32.0 * 9.0));
    CHECK(dominant_peaks(pc) == std::vector<std::size_t>{0});

    std::vector<double> alt(32);
    for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = (k % 2 == 0) ? -2.0 : -6.0;
    CHECK(dominant_peaks(power_spectrum(alt)) == std::vector<std::size_t>{0, 16});

    // Power matches a direct DFT.
    oracle::Gen g(37);
    std::vector<double> x(21);
    for (auto& v : x) v = g.normal();
    const auto p = power_spectrum(x);
    for (std::size_t k = 0; k < x.size(); ++k) {
        std::complex<double> s{0.0, 0.0};
        for (std::size_t n = 0; n < x.size(); ++n) s += x[n] * std::polar(1.0, -2.0 * M_PI * double(k * n) / double(x.size()));
        CHECK(p[k] == doctest::Approx(std::norm(s)).epsilon(1e-10));
    }
}

TEST_CASE("peak count is scale invariant (property)") {
    oracle::Gen g(43);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> x(static_cast<std::size_t>(g.integer(8, 80)));
        const int period = g.integer(1, 4);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = (k % static_cast<std::size_t>(period) == 0 ? -1.0 : -4.0) + 0.3 * g.normal();
        const double c = g.uniform(0.01, 100.0);
        auto y = x;
        for (auto& v : y) v *= c;
        CHECK(dominant_peaks(power_spectrum(x)) == dominant_peaks(power_spectrum(y)));
    }
}

TEST_CASE("regional Fourier report") {
    std::vector<double> series, energies;
    for (int k = 0; k < 40; ++k) {
        energies.push_back(-10.0 + 0.1 * k);
        series.push_back(k < 20 ? (k % 2 == 0 ? -1.0 : -5.0) : -2.0);
    }
    const auto rep = band_fourier(series, {{"two", -10.0, -8.05}, {"flat", -8.0, -6.0}, {"none", 5.0, 6.0}}, energies);
    REQUIRE(rep.regions.size() == 2);
    CHECK(rep.regions[0].subsequence.size() == 20);
    CHECK(rep.regions[0].dominant_peak_count == 2);
    CHECK(rep.regions[1].dominant_peak_count == 1);
    CHECK(rep.warnings.size() == 1);
    CHECK_THROWS_AS(band_fourier(series, {{"tiny", -10.0, -9.75}}, energies), InvalidParams);
}
