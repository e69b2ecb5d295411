#include "dicke/chaos.hpp"
#include "dicke/cli.hpp"
#include "dicke/entanglement.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"
#include "dicke/quench.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace dicke {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) { return format_double17(v); }

// Collects every output file; the manifest lists them with their CRC32.
class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        const auto path = dir_ / name;
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + tmp.string());
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
            if (!out) throw IoError("write failed for " + tmp.string());
        }
        std::error_code ec;
        fs::rename(tmp, path, ec);
        if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
        const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(content.data()), static_cast<uInt>(content.size()));
        files_.push_back({name, static_cast<std::uint32_t>(crc), content.size()});
    }

    void write_manifest(bool complete, const std::string& error) {
        ordered_json m;
        m["status"] = complete ? "complete" : "incomplete";
        if (!error.empty()) m["error"] = error;
        m["files"] = ordered_json::array();
        for (const auto& f : files_) {
            char crc[16];
            std::snprintf(crc, sizeof(crc), "%08x", f.crc);
            m["files"].push_back({{"name", f.name}, {"crc32", crc}, {"bytes", f.bytes}});
        }
        const std::string text = m.dump(2) + "\n";
        std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write manifest in " + dir_.string());
        out << text;
    }

    std::vector<fs::path> names() const {
        std::vector<fs::path> out;
        for (const auto& f : files_) out.emplace_back(f.name);
        return out;
    }

private:
    struct Entry {
        std::string name;
        std::uint32_t crc;
        std::size_t bytes;
    };
    fs::path dir_;
    std::vector<Entry> files_;
};

// Runs f(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& f) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next++;
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

ordered_json certification_json(const ConvergenceReport& r) {
    return {{"n_max", r.n_max_used},
            {"n_max_extended", r.n_max_extended},
            {"top_shells", r.top_shells},
            {"probe_tail_weight", r.probe_tail_weight},
            {"ground_tail_weight", r.ground_tail_weight},
            {"ground_energy", r.ground_energy},
            {"ground_energy_shift", r.ground_energy_shift},
            {"tolerance", r.tolerance},
            {"passed", r.passed}};
}

class Runner {
public:
    Runner(const RunConfig& cfg, std::ostream& log, Artifacts& art)
        : cfg_(cfg), log_(log), art_(art), cache_(cfg.cache_dir) {
        cache_.set_warning_sink([this](const std::string& w) { warn(w); });
        sidecar_["command"] = cfg.command;
        if (!cfg.figure.empty()) sidecar_["figure"] = cfg.figure;
        sidecar_["config"] = ordered_json::object();
        for (const auto& [k, v] : cfg.values) sidecar_["config"][k] = v;
        sidecar_["spectra"] = ordered_json::array();
    }

    void execute() {
        const auto& c = cfg_.command;
        if (c == "spectrum") spectrum();
        else if (c == "quench") quench();
        else if (c == "sweep") sweep();
        else if (c == "peres") peres();
        else if (c == "fourier") fourier();
        else if (c == "entropy-time") entropy_time();
        else throw UsageError("unknown command '" + c + "'");
        sidecar_["warnings"] = warnings_;
        art_.write("run.json", sidecar_.dump(2) + "\n");
    }

    RunSummary summary() const {
        RunSummary s;
        s.jobs = jobs_;
        s.diagonalizations = cache_.misses();
        s.cache_hits = jobs_ - fresh_jobs_;
        return s;
    }

private:
    void warn(const std::string& w) {
        std::lock_guard lock(warn_mutex_);
        warnings_.push_back(w);
        log_ << "warning: " << w << "\n";
    }

    PlanOptions plan_options() const {
        PlanOptions o;
        o.tail_weight = cfg_.tail_weight;
        o.cutoff_scale = cfg_.cutoff_scale;
        o.fixed_cutoff = cfg_.n_max.value_or(0);
        return o;
    }

    // n_max holding every eigenstate below top_energy, unless the user fixed it.
    int analysis_cutoff(const ModelParams& p, double top_energy, int at_least = 0) const {
        int n = cfg_.n_max.value_or(0);
        if (n <= 0) {
            n = std::max(cutoff_for_energy(p, top_energy), at_least);
            n = static_cast<int>(std::ceil(cfg_.cutoff_scale * n));
        }
        return n;
    }

    // One spectrum request; counts a job per consumer and whether it was computed.
    void account(std::size_t consumers, std::size_t misses_before) {
        jobs_ += consumers;
        if (cache_.misses() > misses_before) fresh_jobs_ += 1;
    }

    void record_spectrum(const SpectralData& s, const Eigen::VectorXcd* probe, ordered_json extra) {
        ordered_json j = {{"lambda", s.params().lambda},
                          {"n_max", s.params().n_max},
                          {"dimension", s.dimension()},
                          {"vector_count", s.vector_count()},
                          {"window_min_over_J", s.complete() ? -kInf : s.window_min() / s.params().j()},
                          {"window_max_over_J", s.complete() ? kInf : s.window_max() / s.params().j()}};
        // JSON has no infinities.
        for (const char* key : {"window_min_over_J", "window_max_over_J"}) {
            if (!std::isfinite(j[key].get<double>())) j[key] = nullptr;
        }
        for (auto& [k, v] : extra.items()) j[k] = v;
        if (probe) {
            const auto rep = certify_cutoff(s.params(), *probe, 1e-8);
            if (!rep.passed) {
                warn("cutoff certification at lambda=" + format_double(s.params().lambda) + ", n_max=" +
                     std::to_string(s.params().n_max) + " did not pass (tail " + format_double(rep.tail_weight) +
                     ", ground shift " + format_double(rep.ground_energy_shift) + ")");
            }
            j["certification"] = certification_json(rep);
        }
        sidecar_["spectra"].push_back(j);
    }

    PreparedSpectrum prepared(double lambda_f, const std::vector<double>& lambda_i, std::size_t consumers) {
        log_ << "planning lambda_f=" << format_double(lambda_f) << " for " << lambda_i.size() << " initial couplings\n";
        const auto before = cache_.misses();
        auto prep = prepare_spectrum(cfg_.model, lambda_i, lambda_f, cfg_.alpha, cfg_.beta, plan_options(), &cache_);
        account(consumers, before);
        log_ << "  n_max=" << prep.plan.n_max << " eigenvectors=" << prep.spectrum.vector_count() << "/"
             << prep.spectrum.dimension() << (cache_.misses() > before ? " (computed)" : " (cached)") << "\n";
        const double lmax = *std::max_element(lambda_i.begin(), lambda_i.end());
        const auto probe = initial_state(prep.spectrum.params().with_lambda(lmax), cfg_.alpha, cfg_.beta);
        record_spectrum(prep.spectrum, &probe.amplitudes,
                        {{"attempts", prep.attempts},
                         {"sigma_margin", prep.options.sigma_margin},
                         {"max_missing_weight", prep.max_missing_weight}});
        return prep;
    }

    QuenchSpec quench_spec(const ModelParams& layout, double li, double lf) const {
        QuenchSpec q;
        q.model = layout;
        q.lambda_i = li;
        q.lambda_f = lf;
        q.alpha = cfg_.alpha;
        q.beta = cfg_.beta;
        return q;
    }

    void spectrum() {
        const auto p = cfg_.model;
        const auto before = cache_.misses();
        const auto s = cache_.get_or_compute(p, DiagonalizeOptions::eigenvalues_only());
        account(1, before);
        record_spectrum(s, nullptr, {});
        std::string csv = "index,E,E_over_J,parity\n";
        for (Index n = 0; n < s.dimension(); ++n) {
            csv += std::to_string(n) + "," + fmt(s.eigenvalues()(n)) + "," + fmt(s.eigenvalues()(n) / p.j()) + "," +
                   std::to_string(s.parities()[static_cast<std::size_t>(n)]) + "\n";
        }
        art_.write("spectrum.csv", csv);
    }

    struct SweepRow {
        QuenchResult result;
        double s_ent{0.0};
    };

    std::vector<SweepRow> quench_group(double lf, const std::vector<double>& lis, const SpectralData& spec) {
        std::vector<SweepRow> rows(lis.size());
        parallel_for(lis.size(), cfg_.workers, [&](std::size_t k) {
            const auto q = quench_spec(spec.params(), lis[k], lf);
            rows[k].result = run_quench(q, spec);
            rows[k].s_ent = equilibrium_entropy_from_diagonal_ensemble(q, spec, cfg_.cluster_gap);
        });
        return rows;
    }

    void quench() {
        const double lf = cfg_.lambda_f.front();
        const auto lis = cfg_.initial_couplings(lf);
        const auto prep = prepared(lf, lis, lis.size());
        const auto rows = quench_group(lf, lis, prep.spectrum);
        std::string csv = quench_csv_header() + "\n";
        std::string dist = "lambda_i,E_over_J,P,parity\n";
        for (const auto& r : rows) {
            csv += quench_csv_row(r.result, r.s_ent) + "\n";
            const auto& s = prep.spectrum;
            for (Index n = s.vector_begin(); n < s.vector_end(); ++n) {
                dist += fmt(r.result.spec.lambda_i) + "," + fmt(s.eigenvalues()(n) / s.params().j()) + "," +
                        fmt(r.result.occupations(n)) + "," + std::to_string(s.parities()[static_cast<std::size_t>(n)]) +
                        "\n";
            }
        }
        art_.write("quench.csv", csv);
        art_.write("distribution.csv", dist);
    }

    void sweep() {
        std::vector<double> finals = cfg_.lambda_f;
        std::sort(finals.begin(), finals.end());
        finals.erase(std::unique(finals.begin(), finals.end()), finals.end());
        std::string csv = quench_csv_header() + "\n";
        for (const double lf : finals) {
            const auto lis = cfg_.initial_couplings(lf);
            const auto prep = prepared(lf, lis, lis.size());
            for (const auto& r : quench_group(lf, lis, prep.spectrum)) csv += quench_csv_row(r.result, r.s_ent) + "\n";
        }
        art_.write("sweep.csv", csv);
    }

    // Spectrum with every eigenvector below top_over_J, for lattice analyses.
    SpectralData analysis_spectrum(const ModelParams& base, double top_over_J, int at_least, std::size_t consumers,
                                   const Eigen::VectorXcd* probe_for) {
        const double top = top_over_J * base.j();
        auto p = base.with_cutoff(analysis_cutoff(base, top, at_least));
        log_ << "analysis spectrum lambda=" << format_double(p.lambda) << " n_max=" << p.n_max << " up to E/J="
             << format_double(top_over_J) << "\n";
        const auto before = cache_.misses();
        auto s = cache_.get_or_compute(p, DiagonalizeOptions::window(-kInf, top));
        account(consumers, before);
        record_spectrum(s, probe_for, {});
        return s;
    }

    void write_lattice_outputs(const PeresLattice& lat) {
        std::string csv = "E_over_J,n_expect\n";
        for (std::size_t i = 0; i < lat.size(); ++i) csv += fmt(lat.energy_over_J[i]) + "," + fmt(lat.n_expect[i]) + "\n";
        art_.write("lattice.csv", csv);

        auto model = fit_bands(lat, cfg_.fit_max_over_J);
        if (cfg_.extrapolate_degree > 0 && lat.size() > 0)
            model = extrapolate_bands(model, lat.energy_over_J.back(), cfg_.extrapolate_degree);
        for (const auto& w : model.warnings) warn(w);
        std::ostringstream bands;
        bands << "# band slope intercept start_energy_over_J members extrapolated\n";
        bands << "# fit_region_max_over_J " << fmt(model.fit_region_max_energy) << "\n";
        bands << "# unassigned " << model.unassigned.size() << "\n";
        for (std::size_t b = 0; b < model.bands.size(); ++b) {
            const auto& band = model.bands[b];
            bands << b << " " << fmt(band.slope) << " " << fmt(band.intercept) << " " << fmt(band.start_energy_over_J)
                  << " " << band.members.size() << " " << (band.extrapolated ? 1 : 0) << "\n";
        }
        art_.write("bands.txt", bands.str());

        const auto prof = chaos_profile(lat, model, cfg_.window);
        std::string pcsv = "E_center_over_J,d\n";
        for (std::size_t i = 0; i < prof.centers.size(); ++i) pcsv += fmt(prof.centers[i]) + "," + fmt(prof.d_values[i]) + "\n";
        art_.write("profile.csv", pcsv);
    }

    void peres() {
        const auto s = analysis_spectrum(cfg_.model, cfg_.lattice_max_over_J, 0, 1, nullptr);
        write_lattice_outputs(peres_lattice(s, cfg_.parity));
    }

    void fourier() {
        const double lf = cfg_.lambda_f.front();
        const double li = cfg_.initial_couplings(lf).front();
        double top = cfg_.lattice_max_over_J;
        for (const auto& r : cfg_.regions) top = std::max(top, r.hi_over_J);
        const auto pi = cfg_.model.with_lambda(li);
        const int n_state = coherent_cutoff(std::abs(variational_params(pi).nu)) + 8;
        const auto s = analysis_spectrum(cfg_.model.with_lambda(lf), top, n_state + 24, 1, nullptr);
        const auto q = quench_spec(s.params(), li, lf);
        // The spectrum stops at `top`; the weight above it is reported, not refused.
        const auto r = run_quench(q, s, 1.0);
        sidecar_["fourier_missing_weight"] = r.missing_weight;
        const auto series = log_occupation_series(r, s, cfg_.parity);
        const auto rep = band_fourier(series.x, cfg_.regions, series.energy_over_J);
        for (const auto& w : rep.warnings) warn(w);

        std::string scsv = "E_over_J,x\n";
        for (std::size_t i = 0; i < series.x.size(); ++i) scsv += fmt(series.energy_over_J[i]) + "," + fmt(series.x[i]) + "\n";
        art_.write("series.csv", scsv);
        std::string fcsv = "region_label,k,power\n";
        std::string sum = "region_label,lo_over_J,hi_over_J,length,dominant_peak_count,median_power,peaks\n";
        for (const auto& reg : rep.regions) {
            for (std::size_t k = 0; k < reg.power.size(); ++k) fcsv += reg.region.label + "," + std::to_string(k) + "," + fmt(reg.power[k]) + "\n";
            std::string peaks;
            for (std::size_t i = 0; i < reg.peaks.size(); ++i) peaks += (i ? ";" : "") + std::to_string(reg.peaks[i]);
            sum += reg.region.label + "," + fmt(reg.region.lo_over_J) + "," + fmt(reg.region.hi_over_J) + "," +
                   std::to_string(reg.subsequence.size()) + "," + std::to_string(reg.dominant_peak_count) + "," +
                   fmt(reg.median_power) + "," + peaks + "\n";
        }
        art_.write("fourier.csv", fcsv);
        art_.write("fourier_summary.csv", sum);
    }

    void entropy_time() {
        const double lf = cfg_.lambda_f.front();
        const auto lis = cfg_.initial_couplings(lf);
        const auto prep = prepared(lf, lis, lis.size());
        const auto grid = default_time_grid(cfg_.time_points, cfg_.t_max);
        std::vector<EntropyTrace> traces(lis.size());
        std::vector<double> de(lis.size());
        parallel_for(lis.size(), cfg_.workers, [&](std::size_t k) {
            const auto q = quench_spec(prep.spectrum.params(), lis[k], lf);
            traces[k] = entropy_timeseries(q, prep.spectrum, grid);
            de[k] = equilibrium_entropy_from_diagonal_ensemble(q, prep.spectrum, cfg_.cluster_gap);
        });
        std::string sum = "lambda_i,S_ent_equilibrium,fluctuation,relative_fluctuation,S_ent_diagonal_ensemble,"
                          "t_start,t_end,max_trace_error,file\n";
        for (std::size_t k = 0; k < lis.size(); ++k) {
            const auto& tr = traces[k];
            const std::string name = "entropy_time_lambda_i_" + format_double(lis[k]) + ".csv";
            std::string csv = "t,S_ent\n";
            for (std::size_t i = 0; i < tr.times.size(); ++i) csv += fmt(tr.times[i]) + "," + fmt(tr.s_ent[i]) + "\n";
            art_.write(name, csv);
            sum += fmt(lis[k]) + "," + fmt(tr.equilibrium_value) + "," + fmt(tr.fluctuation) + "," +
                   fmt(tr.relative_fluctuation()) + "," + fmt(de[k]) + "," + fmt(tr.t_start) + "," + fmt(tr.t_end) +
                   "," + fmt(tr.max_trace_error) + "," + name + "\n";
        }
        art_.write("entropy_time_summary.csv", sum);
    }

    const RunConfig& cfg_;
    std::ostream& log_;
    Artifacts& art_;
    SpectralCache cache_;
    ordered_json sidecar_;
    std::vector<std::string> warnings_;
    std::mutex warn_mutex_;
    std::size_t jobs_{0};
    std::size_t fresh_jobs_{0};
};

std::string run_conf_text(const RunConfig& cfg) {
    std::string out = "# dicke " + (cfg.figure.empty() ? cfg.command : "reproduce-figure " + cfg.figure) + "\n";
    out += "# rerun with: dicke " + cfg.command + " --config run.conf\n";
    for (const auto& [k, v] : cfg.values) out += k + "=" + v + "\n";
    return out;
}

void emit_error(std::ostream& err, const char* kind, int code, const std::string& message) {
    ordered_json j = {{"error", kind}, {"exit_code", code}, {"message", message}};
    err << j.dump() << "\n";
}

} // namespace

int run(const RunConfig& cfg, std::ostream& log, std::ostream& err, RunSummary* summary) {
    if (!cfg.help.empty()) {
        log << cfg.help;
        return kExitOk;
    }
    std::error_code ec;
    if (fs::exists(cfg.output_dir / "manifest.json", ec) && !cfg.overwrite) {
        emit_error(err, "usage", kExitUsage,
                   "output directory " + cfg.output_dir.string() + " already holds a run; pass --overwrite");
        return kExitUsage;
    }
    fs::create_directories(cfg.output_dir, ec);
    if (ec) {
        emit_error(err, "io", kExitIo, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
        return kExitIo;
    }

    Artifacts art(cfg.output_dir);
    int code = kExitOk;
    std::string message;
    const char* kind = "";
    std::optional<Runner> runner;
    try {
        art.write("run.conf", run_conf_text(cfg));
        runner.emplace(cfg, log, art);
        runner->execute();
    } catch (const UsageError& e) {
        code = kExitUsage, kind = "usage", message = e.what();
    } catch (const InvalidParams& e) {
        code = kExitUsage, kind = "invalid_parameters", message = e.what();
    } catch (const IoError& e) {
        code = kExitIo, kind = "io", message = e.what();
    } catch (const CacheCorruption& e) {
        code = kExitIo, kind = "cache", message = e.what();
    } catch (const fs::filesystem_error& e) {
        code = kExitIo, kind = "io", message = e.what();
    } catch (const CutoffTooSmall& e) {
        code = kExitNumerical, kind = "cutoff", message = e.what();
    } catch (const CapacityError& e) {
        code = kExitNumerical, kind = "capacity", message = e.what();
    } catch (const std::bad_alloc&) {
        code = kExitNumerical, kind = "capacity", message = "out of memory";
    } catch (const std::exception& e) {
        code = kExitNumerical, kind = "numerical", message = e.what();
    }

    try {
        art.write_manifest(code == kExitOk, message);
    } catch (const std::exception& e) {
        if (code == kExitOk) code = kExitIo, kind = "io", message = e.what();
    }
    if (summary) {
        *summary = runner ? runner->summary() : RunSummary{};
        summary->files = art.names();
        summary->complete = code == kExitOk;
    }
    if (runner) {
        const auto s = runner->summary();
        log << "jobs=" << s.jobs << " diagonalizations=" << s.diagonalizations << " cache_hits=" << s.cache_hits << "\n";
    }
    if (code != kExitOk) emit_error(err, kind, code, message);
    return code;
}

int main_entry(int argc, char** argv, std::ostream& log, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    RunConfig cfg;
    try {
        cfg = parse_config(args);
    } catch (const UsageError& e) {
        emit_error(err, "usage", kExitUsage, e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        emit_error(err, "usage", kExitUsage, e.what());
        return kExitUsage;
    }
    return run(cfg, log, err);
}

} // namespace dicke
