// chaos.hpp - Peres lattices, linear band fits, the distance-to-trend profile d(E)
// and Fourier analysis of log-occupation subsequences

#pragma once

#include "dicke/quench.hpp"
#include "dicke/spectral.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dicke {

// Points (E_n / J, <E_n|a^dag a|E_n>) for every stored eigenvector, ascending in energy.
struct PeresLattice {
    ModelParams params;
    std::vector<Index> index;  // eigenstate index n in the spectrum
    std::vector<double> energy_over_J;
    std::vector<double> n_expect;
    std::vector<int> parity;

    std::size_t size() const noexcept { return energy_over_J.size(); }
};

// parity = 0 keeps both sectors, +1 or -1 keeps one. Within a superradiant
// doublet both members give the same point, so band analyses use one sector.
PeresLattice peres_lattice(const SpectralData& spec, int parity = 0);

struct Band {
    double slope{0.0};      // d<n>/d(E/J)
    double intercept{0.0};
    std::vector<std::size_t> members;  // lattice positions, ascending energy
    double start_energy_over_J{0.0};
    bool extrapolated{false};  // continued from the fitted family, no members

    double predict(double e_over_J) const noexcept { return slope * e_over_J + intercept; }
};

struct BandModel {
    std::vector<Band> bands;  // ordered by start energy
    double fit_region_max_energy{0.0};
    std::vector<std::size_t> unassigned;  // region points that belong to no band
    std::vector<std::string> warnings;
    int iterations{0};
};

// Bands are first traced in ascending energy: each band predicts its next
// point from a line through its latest members, and a point that no band
// predicts starts a new one. Least-squares lines over whole bands are then
// refined by nearest-line reassignment.
struct BandFitOptions {
    double outlier_factor{5.0};   // new band when every prediction misses by more than this x running median residual
    double residual_floor{0.05};  // lower bound for the outlier threshold, in photons
    std::size_t trend_points{4};  // latest members used for a band's prediction
    int max_iterations{20};
    std::size_t min_members{3};
};

BandModel fit_bands(const PeresLattice& lat, double region_max_E_over_J, const BandFitOptions& opts = {});

// Continues the band family past the fit region. Start energies and intercepts
// of the fitted bands are least-squares polynomials of the given degree in
// the band index, and every added line takes the mean fitted slope. Bands are
// added until the predicted start passes max_energy_over_J or stops rising.
// Needs at least degree + 2 fitted bands, otherwise the model is returned
// unchanged with a warning.
BandModel extrapolate_bands(const BandModel& fitted, double max_energy_over_J, int degree = 2);

// Distance from a point to the nearest line among bands that have started at its energy.
double distance_to_bands(const BandModel& bands, double e_over_J, double n_expect);

struct ChaosProfile {
    std::size_t window_size{100};
    std::vector<double> centers;   // mean E/J per block
    std::vector<double> d_values;  // mean distance per block
};

// Non-overlapping blocks of `window` consecutive lattice points.
ChaosProfile chaos_profile(const PeresLattice& lat, const BandModel& bands, std::size_t window = 100);

// log10 of the occupations with a floor of 1e-30, in spectrum order.
std::vector<double> log_occupation_series(const QuenchResult& r);

// The same series restricted to stored eigenvectors of one parity sector
// (0 keeps both), paired with E_n / J.
struct OccupationSeries {
    std::vector<double> energy_over_J;
    std::vector<double> x;
};
OccupationSeries log_occupation_series(const QuenchResult& r, const SpectralData& spec, int parity);

struct EnergyRegion {
    std::string label;
    double lo_over_J{0.0};
    double hi_over_J{0.0};
};

struct FourierRegionReport {
    EnergyRegion region;
    std::vector<double> subsequence;
    std::vector<double> power;        // |DFT|^2, same length as the subsequence
    std::vector<std::size_t> peaks;   // frequency bins of dominant peaks
    std::size_t dominant_peak_count{0};
    double median_power{0.0};
};

struct FourierReport {
    std::vector<FourierRegionReport> regions;
    std::vector<std::string> warnings;
};

inline constexpr double kPeakFactor = 5.0;

// Local maxima (circular neighbours) exceeding factor x median of the spectrum.
std::vector<std::size_t> dominant_peaks(const std::vector<double>& power, double factor = kPeakFactor);

// |DFT|^2 of a real sequence, without mean subtraction.
std::vector<double> power_spectrum(const std::vector<double>& x);

// Splits `series` (paired with energies_over_J) into the requested regions and
// analyses each one. Regions with no points are skipped with a warning.
FourierReport band_fourier(const std::vector<double>& series, const std::vector<EnergyRegion>& regions,
                           const std::vector<double>& energies_over_J);

} // namespace dicke
