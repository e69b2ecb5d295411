// cli.hpp - run configuration, command dispatch and artifact writing
//
// A configuration is a flat set of `section.key=value` entries read from an
// optional file and overridden by command-line flags. Every run writes its
// outputs, a `run.conf` that reproduces it, a JSON sidecar with the resolved
// parameters and a manifest with the CRC32 of each file.

#pragma once

#include "dicke/chaos.hpp"
#include "dicke/core.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dicke {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2, kExitIo = 3 };

struct RunConfig {
    std::string command;  // spectrum, quench, sweep, peres, fourier, entropy-time, reproduce-figure
    std::string figure;   // reproduce-figure only

    ModelParams model;             // model.lambda is used by spectrum and peres
    std::optional<int> n_max;      // planned automatically when absent
    std::vector<double> lambda_i;  // explicit list, range or lambda_f + delta range
    std::vector<double> delta_lambda;
    std::vector<double> lambda_f;
    cplx alpha{1.0};
    cplx beta{0.0};

    std::size_t window{100};
    double fit_max_over_J{-4.5};
    int extrapolate_degree{2};  // 0 keeps only fitted bands
    double lattice_max_over_J{1.0};
    int parity{1};
    std::vector<EnergyRegion> regions;
    double cluster_gap{1e-6};

    int time_points{2048};
    double t_max{200.0};

    double cutoff_scale{1.0};
    double tail_weight{1e-10};

    std::filesystem::path output_dir{"dicke-out"};
    std::filesystem::path cache_dir{".dicke-cache"};
    bool overwrite{false};
    int workers{1};

    // Every key with its resolved text, defaults included.
    std::map<std::string, std::string> values;
    std::string help;  // non-empty when --help was requested

    // Initial couplings of the grid for a given final coupling.
    std::vector<double> initial_couplings(double lambda_f) const;
};

// Keys accepted in configuration files, with their default text.
const std::map<std::string, std::string>& config_defaults();

// Throws UsageError naming the offending key or flag.
RunConfig parse_config(const std::vector<std::string>& args);

// Counters of one run. They stay out of the written files so that reruns
// produce identical outputs.
struct RunSummary {
    std::size_t jobs{0};               // quenches or analyses that needed a spectrum
    std::size_t diagonalizations{0};   // spectra computed rather than read from the cache
    std::size_t cache_hits{0};         // jobs served without a fresh diagonalization
    std::vector<std::filesystem::path> files;  // written outputs, relative to the output directory
    bool complete{false};
};

// Runs a parsed configuration; returns an ExitCode. Progress goes to `log`,
// failures to `err` as one JSON object.
int run(const RunConfig& cfg, std::ostream& log, std::ostream& err, RunSummary* summary = nullptr);

// Convenience for main(): parse, then run, mapping every failure to its code.
int main_entry(int argc, char** argv, std::ostream& log, std::ostream& err);

} // namespace dicke
