#include "dicke/cli.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

namespace dicke {

namespace {

struct KeySpec {
    const char* key;
    const char* flag;
    const char* fallback;
    const char* help;
};

// Order here is the order of run.conf.
const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs{
        {"model.n_atoms", "--n-atoms", "", "number of atoms N"},
        {"model.omega", "--omega", "1", "photon frequency"},
        {"model.omega0", "--omega0", "1", "atomic splitting"},
        {"model.lambda", "--lambda", "", "coupling for spectrum and peres"},
        {"model.n_max", "--n-max", "", "photon cutoff; planned when empty"},
        {"quench.lambda_i", "--lambda-i", "", "initial couplings, comma separated"},
        {"quench.lambda_i_range", "--lambda-i-range", "", "initial couplings as lo:hi:step"},
        {"quench.delta_lambda_range", "--delta-lambda-range", "", "lambda_i - lambda_f as lo:hi:step"},
        {"quench.lambda_f", "--lambda-f", "", "final couplings, comma separated"},
        {"quench.alpha", "--alpha", "1", "weight of the first branch, re or re,im"},
        {"quench.beta", "--beta", "0", "weight of the parity-mirrored branch, re or re,im"},
        {"analysis.window", "--window", "100", "eigenstates per block of the chaos profile"},
        {"analysis.fit_max", "--fit-max", "-4.5", "upper E/J of the band-fit region"},
        {"analysis.extrapolate", "--extrapolate", "2", "polynomial degree continuing the band family past the fit region (0 = off)"},
        {"analysis.lattice_max", "--lattice-max", "1", "upper E/J of the eigenvectors used for lattices and series"},
        {"analysis.parity", "--parity", "1", "parity sector for lattice analyses (1, -1 or 0 for both)"},
        {"analysis.regions", "--regions", "", "Fourier regions as label:lo:hi;label:lo:hi (E/J)"},
        {"analysis.cluster_gap", "--cluster-gap", "1e-06", "levels closer than this (units of omega) stay coherent"},
        {"time.points", "--time-points", "2048", "points of the time grid"},
        {"time.t_max", "--t-max", "200", "end of the time grid"},
        {"planner.cutoff_scale", "--cutoff-scale", "1", "multiply every planned cutoff"},
        {"planner.tail_weight", "--tail-weight", "1e-10", "weight allowed outside the eigenvector window"},
        {"io.output_dir", "--output-dir", "dicke-out", "directory for results"},
        {"io.cache_dir", "--cache-dir", ".dicke-cache", "directory of the spectrum cache"},
        {"io.overwrite", "--overwrite", "false", "replace an existing run in the output directory"},
        {"io.workers", "--workers", "0", "worker threads; 0 means one per CPU"},
    };
    return specs;
}

const std::vector<std::string> kCommands{"spectrum", "quench", "sweep", "peres", "fourier", "entropy-time",
                                         "reproduce-figure"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double to_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
        throw UsageError(key + ": '" + text + "' is not a number");
    }
    return v;
}

long to_integer(const std::string& key, const std::string& text) {
    long v = 0;
    const auto t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw UsageError(key + ": '" + text + "' is not an integer");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw UsageError(key + ": '" + text + "' is not a boolean");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (const auto& part : split(text, ',')) out.push_back(to_double(key, part));
    return out;
}

std::vector<double> to_range(const std::string& key, const std::string& text) {
    if (trim(text).empty()) return {};
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw UsageError(key + ": expected lo:hi:step, got '" + text + "'");
    const double lo = to_double(key, parts[0]), hi = to_double(key, parts[1]), step = to_double(key, parts[2]);
    if (!(step > 0.0) || hi < lo) throw UsageError(key + ": need step > 0 and hi >= lo");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 100000) throw UsageError(key + ": range holds more than 100000 points");
    std::vector<double> out;
    // Rounded so that 0.1:1.5:0.1 yields 0.3 rather than 0.30000000000000004.
    for (long k = 0; k < count; ++k) out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    return out;
}

cplx to_complex(const std::string& key, const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() == 1) return {to_double(key, parts[0]), 0.0};
    if (parts.size() == 2) return {to_double(key, parts[0]), to_double(key, parts[1])};
    throw UsageError(key + ": expected re or re,im");
}

std::vector<EnergyRegion> to_regions(const std::string& key, const std::string& text) {
    std::vector<EnergyRegion> out;
    if (trim(text).empty()) return out;
    for (const auto& item : split(text, ';')) {
        if (item.empty()) continue;
        const auto parts = split(item, ':');
        if (parts.size() != 3 || parts[0].empty()) throw UsageError(key + ": expected label:lo:hi, got '" + item + "'");
        EnergyRegion r{parts[0], to_double(key, parts[1]), to_double(key, parts[2])};
        if (!(r.hi_over_J > r.lo_over_J)) throw UsageError(key + ": region " + r.label + " has hi <= lo");
        out.push_back(r);
    }
    return out;
}

void read_config_file(const std::filesystem::path& path, std::map<std::string, std::string>& values) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const auto key = trim(line.substr(0, eq));
        if (!values.count(key)) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        values[key] = trim(line.substr(eq + 1));
    }
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

// Figure presets; the keys they set can still be overridden by flags.
struct Preset {
    std::string command;
    std::map<std::string, std::string> values;
};

const std::map<std::string, Preset>& figure_presets() {
    static const std::map<std::string, Preset> presets{
        {"fig1", {"sweep", {{"model.n_atoms", "30"}, {"quench.lambda_f", "0.9,1.2,1.5,2,2.5,3"},
                            {"quench.delta_lambda_range", "0.1:1.5:0.1"}}}},
        {"fig2", {"sweep", {{"model.n_atoms", "30"}, {"quench.lambda_f", "0.9,1.2,1.5,2,2.5,3"},
                            {"quench.delta_lambda_range", "0.1:1.5:0.1"}}}},
        {"fig3", {"peres", {{"model.n_atoms", "30"}, {"model.lambda", "2.5"}}}},
        {"fig4", {"peres", {{"model.n_atoms", "30"}, {"model.lambda", "2.5"}, {"analysis.window", "100"}}}},
        {"fig5", {"quench", {{"model.n_atoms", "30"}, {"quench.lambda_f", "2.5"}, {"quench.lambda_i", "3.4,3.6,4.5,4.8"}}}},
        {"fig6", {"fourier", {{"model.n_atoms", "30"}, {"quench.lambda_f", "2.5"}, {"quench.lambda_i", "4"},
                              {"analysis.regions", "x2:-10.9:-9.4;x4:-8:-6.7;x6:-5.6:-4.5;x8:-3.6:-2.7;"
                                                   "x10:-2:-1;x11:-1:1"}}}},
        {"fig7", {"sweep", {{"model.n_atoms", "30"}, {"quench.lambda_f", "0.9,1.2,1.5,2,2.5,3"},
                            {"quench.delta_lambda_range", "0.1:1.5:0.1"}}}},
        {"fig8", {"sweep", {{"model.n_atoms", "20"}, {"quench.lambda_f", "1.2,1.5,2,2.5,3"},
                            {"quench.delta_lambda_range", "0.1:3:0.1"}}}},
        {"fig9", {"entropy-time", {{"model.n_atoms", "20"}, {"quench.lambda_f", "2.5"},
                                   {"quench.lambda_i", "3,4,4.7,4.9,5.5,7"}}}},
    };
    return presets;
}

} // namespace

std::vector<double> RunConfig::initial_couplings(double lf) const {
    std::vector<double> out = lambda_i;
    for (const double d : delta_lambda) out.push_back(lf + d);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

const std::map<std::string, std::string>& config_defaults() {
    static const std::map<std::string, std::string> defaults = [] {
        std::map<std::string, std::string> m;
        for (const auto& k : key_specs()) m[k.key] = k.fallback;
        return m;
    }();
    return defaults;
}

RunConfig parse_config(const std::vector<std::string>& args) {
    CLI::App app{"Sudden quenches in the Dicke model: spectra, quench statistics, entanglement and chaos diagnostics"};
    app.set_help_flag("-h,--help", "show this help");
    std::string command, figure, config_file;
    std::vector<std::string> sets;
    app.add_option("command", command, "one of: spectrum, quench, sweep, peres, fourier, entropy-time, reproduce-figure");
    app.add_option("figure", figure, "figure name for reproduce-figure (fig1 ... fig9)");
    app.add_option("-c,--config", config_file, "key=value configuration file");
    app.add_option("--set", sets, "override any key: --set section.key=value");
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::Option*> flag_options;
    for (const auto& k : key_specs()) {
        if (std::string(k.key) == "io.overwrite") {
            flag_options[k.key] = app.add_flag(k.flag, k.help);
        } else {
            flag_options[k.key] = app.add_option(k.flag, flag_values[k.key], std::string(k.help) + " [" + k.key + "]");
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        RunConfig cfg;
        cfg.help = app.help();
        return cfg;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (command.empty()) throw UsageError("missing command; run with --help");
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
        throw UsageError("unknown command '" + command + "'");
    }

    RunConfig cfg;
    cfg.values = config_defaults();
    cfg.command = command;
    if (command == "reproduce-figure") {
        const auto it = figure_presets().find(figure);
        if (it == figure_presets().end()) throw UsageError("reproduce-figure: unknown figure '" + figure + "'");
        cfg.figure = figure;
        cfg.command = it->second.command;
        for (const auto& [k, v] : it->second.values) cfg.values[k] = v;
    } else if (!figure.empty()) {
        throw UsageError("unexpected argument '" + figure + "'");
    }
    // File first, then flags.
    if (!config_file.empty()) read_config_file(config_file, cfg.values);
    for (const auto& [key, opt] : flag_options) {
        if (opt->count() == 0) continue;
        cfg.values[key] = key == "io.overwrite" ? "true" : flag_values[key];
    }
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        const auto key = trim(s.substr(0, eq));
        if (eq == std::string::npos || !cfg.values.count(key)) throw UsageError("--set: unknown key in '" + s + "'");
        cfg.values[key] = trim(s.substr(eq + 1));
    }

    const auto& v = cfg.values;
    const auto need = [&](const std::string& key) -> const std::string& {
        const auto& text = v.at(key);
        if (trim(text).empty()) throw UsageError(key + " is required for " + cfg.command);
        return text;
    };

    cfg.model.n_atoms = static_cast<int>(to_integer("model.n_atoms", need("model.n_atoms")));
    cfg.model.omega = to_double("model.omega", v.at("model.omega"));
    cfg.model.omega0 = to_double("model.omega0", v.at("model.omega0"));
    if (!trim(v.at("model.n_max")).empty()) cfg.n_max = static_cast<int>(to_integer("model.n_max", v.at("model.n_max")));
    cfg.model.n_max = cfg.n_max.value_or(0);
    if (cfg.command == "spectrum" || cfg.command == "peres") {
        cfg.model.lambda = to_double("model.lambda", need("model.lambda"));
    }
    try {
        cfg.model.validate();
    } catch (const InvalidParams& e) {
        throw UsageError(std::string("model: ") + e.what());
    }

    cfg.lambda_i = to_list("quench.lambda_i", v.at("quench.lambda_i"));
    for (double x : to_range("quench.lambda_i_range", v.at("quench.lambda_i_range"))) cfg.lambda_i.push_back(x);
    cfg.delta_lambda = to_range("quench.delta_lambda_range", v.at("quench.delta_lambda_range"));
    cfg.lambda_f = to_list("quench.lambda_f", v.at("quench.lambda_f"));
    cfg.alpha = to_complex("quench.alpha", v.at("quench.alpha"));
    cfg.beta = to_complex("quench.beta", v.at("quench.beta"));
    for (double x : cfg.lambda_i) if (x < 0.0) throw UsageError("quench.lambda_i: couplings must be >= 0");
    for (double x : cfg.lambda_f) if (x < 0.0) throw UsageError("quench.lambda_f: couplings must be >= 0");

    const long window = to_integer("analysis.window", v.at("analysis.window"));
    if (window < 2) throw UsageError("analysis.window must be >= 2");
    cfg.window = static_cast<std::size_t>(window);
    cfg.fit_max_over_J = to_double("analysis.fit_max", v.at("analysis.fit_max"));
    const long degree = to_integer("analysis.extrapolate", v.at("analysis.extrapolate"));
    if (degree < 0) throw UsageError("analysis.extrapolate must be >= 0");
    cfg.extrapolate_degree = static_cast<int>(degree);
    cfg.lattice_max_over_J = to_double("analysis.lattice_max", v.at("analysis.lattice_max"));
    cfg.parity = static_cast<int>(to_integer("analysis.parity", v.at("analysis.parity")));
    if (cfg.parity != 1 && cfg.parity != -1 && cfg.parity != 0) throw UsageError("analysis.parity must be 1, -1 or 0");
    cfg.regions = to_regions("analysis.regions", v.at("analysis.regions"));
    cfg.cluster_gap = to_double("analysis.cluster_gap", v.at("analysis.cluster_gap"));
    if (cfg.cluster_gap < 0.0) throw UsageError("analysis.cluster_gap must be >= 0");

    cfg.time_points = static_cast<int>(to_integer("time.points", v.at("time.points")));
    cfg.t_max = to_double("time.t_max", v.at("time.t_max"));
    if (cfg.time_points < 2 || !(cfg.t_max > 0.0)) throw UsageError("time grid needs time.points >= 2 and time.t_max > 0");

    cfg.cutoff_scale = to_double("planner.cutoff_scale", v.at("planner.cutoff_scale"));
    if (!(cfg.cutoff_scale >= 1.0)) throw UsageError("planner.cutoff_scale must be >= 1");
    cfg.tail_weight = to_double("planner.tail_weight", v.at("planner.tail_weight"));
    if (!(cfg.tail_weight > 0.0 && cfg.tail_weight < 1e-8)) throw UsageError("planner.tail_weight must lie in (0, 1e-8)");

    cfg.output_dir = need("io.output_dir");
    cfg.cache_dir = need("io.cache_dir");
    cfg.overwrite = to_bool("io.overwrite", v.at("io.overwrite"));
    cfg.workers = static_cast<int>(to_integer("io.workers", v.at("io.workers")));
    if (cfg.workers < 0) throw UsageError("io.workers must be >= 0");
    if (cfg.workers == 0) cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    // Command-specific requirements.
    const bool quench_like = cfg.command == "quench" || cfg.command == "sweep" || cfg.command == "fourier" ||
                             cfg.command == "entropy-time";
    if (quench_like) {
        if (cfg.lambda_f.empty()) throw UsageError("quench.lambda_f is required for " + cfg.command);
        if (cfg.initial_couplings(cfg.lambda_f.front()).empty()) {
            throw UsageError("empty quench grid: set quench.lambda_i, quench.lambda_i_range or quench.delta_lambda_range");
        }
        if (cfg.command != "sweep" && cfg.lambda_f.size() != 1) {
            throw UsageError("quench.lambda_f: " + cfg.command + " takes a single final coupling");
        }
        if (cfg.alpha == 0.0 && cfg.beta == 0.0) throw UsageError("quench.alpha and quench.beta are both zero");
    }
    if (cfg.command == "fourier") {
        if (cfg.regions.empty()) throw UsageError("analysis.regions is required for fourier");
        if (cfg.initial_couplings(cfg.lambda_f.front()).size() != 1) {
            throw UsageError("quench.lambda_i: fourier takes a single initial coupling");
        }
    }
    if (cfg.command == "spectrum" && !cfg.n_max) throw UsageError("model.n_max is required for spectrum");
    // Canonical text for the list-valued keys, so run.conf reproduces the run.
    cfg.values["quench.lambda_f"] = join(cfg.lambda_f);
    return cfg;
}

} // namespace dicke
