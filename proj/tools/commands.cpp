#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "cli.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/format.hpp"
#include "photodyn/photon_sim.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace photodyn::cli {

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

fs::path output_dir(const std::string& flag) {
    fs::path dir = flag;
    if (dir.empty()) {
        const char* env = std::getenv("PHOTODYN_OUT");
        dir = env && *env ? fs::path(env) : fs::current_path();
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 unavailable");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

InputProvenance provenance(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("input file not found: " + path.string());
    return {path.string(), sha256_file(path), to_string(detect_kind(path))};
}

void write_manifest(const fs::path& dir, const Manifest& m) {
    ordered_json j;
    j["kind"] = "run_manifest";
    j["schema_version"] = kSchemaVersion;
    j["subcommand"] = m.subcommand;
    j["flags"] = ordered_json::object();
    for (const auto& [k, v] : m.flags) j["flags"][k] = v;
    j["inputs"] = ordered_json::array();
    for (const auto& in : m.inputs) j["inputs"].push_back({{"path", in.path}, {"sha256", in.sha256}, {"kind", in.kind}});
    j["outputs"] = ordered_json::array();
    for (const auto& out : m.outputs) {
        j["outputs"].push_back({{"path", out.filename().string()}, {"sha256", sha256_file(out)}});
    }
    if (m.seed) j["seed"] = *m.seed;
    j["tool_version"] = kToolVersion;
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = stamp;
    write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

EmitterModel load_model(const std::string& spec) {
    if (spec == "gev1") return gev1_model();
    if (spec == "gev2") return gev2_model();
    if (!fs::exists(spec)) throw DataError("model file not found: " + spec);
    return read_emitter_model(spec);
}

// --- simulate ----------------------------------------------------------------

int run_simulate(const SimulateArgs& a, const std::map<std::string, std::string>& flags) {
    SimConfig c;
    c.model = load_model(a.model);
    c.power_mw = a.power_mw;
    c.duration_ns = a.duration_s * 1e9;
    c.detection_efficiency = a.efficiency;
    c.background_rate_ghz = a.background_hz * 1e-9;
    c.splitter_ratio = a.splitter_ratio;
    c.seed = a.seed;
    if (a.mode == "pulsed") {
        c.mode = PulsedExcitation{a.period_ns, a.excitation_probability};
    } else if (a.mode != "cw") {
        throw UsageError("--mode must be cw or pulsed");
    }
    c.validate();

    const fs::path dir = output_dir(a.out);
    const fs::path path = dir / "timetags.csv";
    const fs::path partial = dir / "timetags.csv.partial";
    PhotonSimulator sim(c);
    std::uint64_t rows = 0;
    {
        TimeTagWriter w(partial, c.duration_ps(), c.metadata());
        std::vector<TimeTag> chunk;
        std::int64_t until = 0;
        bool more = true;
        while (more) {
            chunk.clear();
            until += 10'000'000'000; // 10 ms of stream per chunk
            more = sim.generate_until(until, chunk);
            w.write(chunk);
        }
        w.close();
        rows = w.rows();
    }
    fs::rename(partial, path);
    if (rows == 0) warn("no events recorded; the tag file is empty");

    Manifest m{"simulate", flags, {}, {path}, c.seed};
    if (fs::exists(a.model)) m.inputs.push_back(provenance(a.model));
    write_manifest(dir, m);
    std::cout << "wrote " << rows << " events to " << path.string() << '\n';
    return kOk;
}

// --- correlate ---------------------------------------------------------------

namespace {

double metadata_number(const std::map<std::string, std::string>& meta, const std::string& key) {
    const auto it = meta.find(key);
    double v = 0.0;
    if (it == meta.end() || !parse_double(it->second, v)) return NAN;
    return v;
}

// 20 expected tau2 from the model recorded by the simulator, when present.
std::optional<double> default_max_delay(const std::map<std::string, std::string>& meta) {
    EmitterModel m{"recorded", metadata_number(meta, "K_GHz_per_mW"), metadata_number(meta, "k21_GHz"),
                   metadata_number(meta, "k23_GHz"),      metadata_number(meta, "A1_GHz"),
                   metadata_number(meta, "B1_mW"),        metadata_number(meta, "C1_GHz")};
    const double p = metadata_number(meta, "power_mW");
    if (!std::isfinite(p) || !std::isfinite(m.pump_efficiency) || !std::isfinite(m.k21) || !std::isfinite(m.k23) ||
        !std::isfinite(m.deshelve_high) || !std::isfinite(m.deshelve_sat) || !std::isfinite(m.deshelve_low)) {
        return std::nullopt;
    }
    try {
        return 20.0 * time_constants(rates_at_power(m, p)).tau2;
    } catch (const Error&) {
        return std::nullopt;
    }
}

double period_from(const CorrelateArgs& a, const std::map<std::string, std::string>& meta) {
    if (a.period_ns) return *a.period_ns;
    const double p = metadata_number(meta, "period_ns");
    if (!std::isfinite(p)) throw UsageError("the stream records no laser period; pass --period-ns");
    return p;
}

void write_pulsed(const fs::path& path, const PulsedG2& g, double period) {
    ordered_json j;
    j["kind"] = "pulsed_g2";
    j["schema_version"] = kSchemaVersion;
    j["period_ns"] = period;
    j["g2_zero"] = g.value;
    j["sigma"] = g.sigma;
    j["center_counts"] = g.center_counts;
    j["side_mean"] = g.side_mean;
    j["side_counts"] = g.side_counts;
    write_file_atomic(path, j.dump(2) + "\n");
}

} // namespace

int run_correlate(const CorrelateArgs& a, const std::map<std::string, std::string>& flags) {
    if (!(a.bin_ns > 0.0)) throw UsageError("--bin-ns must be > 0");
    const InputProvenance in = provenance(a.in);
    if (in.kind != to_string(DatasetKind::TimeTags)) throw DataError(a.in + " is not a time-tag file");
    const fs::path dir = output_dir(a.out);
    fs::path out;

    if (a.mode == "g2") {
        Normalization norm;
        if (a.normalize == "tail") norm = Normalization::TailPlateau;
        else if (a.normalize == "rate") norm = Normalization::RateProduct;
        else throw UsageError("--normalize must be tail or rate");
        TimeTagReader reader(a.in);
        double max_delay = 0.0;
        if (a.max_delay_ns) {
            max_delay = *a.max_delay_ns;
        } else if (auto d = default_max_delay(reader.metadata())) {
            max_delay = std::ceil(*d / a.bin_ns) * a.bin_ns;
        } else {
            throw UsageError("the stream records no emitter model; pass --max-delay-ns");
        }
        if (!(max_delay >= 10.0 * a.bin_ns)) throw UsageError("--max-delay-ns must be at least 10 bins");
        StreamingCorrelator corr(a.bin_ns, max_delay);
        std::vector<TimeTag> chunk;
        while (reader.next(chunk)) corr.add(chunk);
        auto hist = normalize(corr.result(reader.duration_ps(), reader.metadata()), norm);
        out = dir / "g2hist.csv";
        write_g2hist(out, hist);
        for (const auto& w : hist.warnings) warn(w);
        std::cout << "g2 histogram: " << hist.size() << " bins, " << hist.total() << " coincidences, g2(0) = "
                  << format_double(hist.normalized[static_cast<std::size_t>(hist.half_bins)]) << '\n';
    } else if (a.mode == "decay") {
        const auto stream = read_timetags(a.in);
        const double period = period_from(a, stream.metadata);
        auto hist = decay_histogram(stream, period, a.bin_ns);
        out = dir / "decay.csv";
        write_series(out, to_series(hist));
        std::cout << "decay histogram: " << hist.counts.size() << " bins\n";
    } else if (a.mode == "pulsed-g2") {
        const auto stream = read_timetags(a.in);
        const double period = period_from(a, stream.metadata);
        const auto g = pulsed_g2_zero(stream, period, a.side_peaks);
        out = dir / "pulsed_g2.json";
        write_pulsed(out, g, period);
        std::cout << "pulsed g2(0) = " << format_double(g.value) << " +- " << format_double(g.sigma) << '\n';
    } else {
        throw UsageError("--mode must be g2, decay or pulsed-g2");
    }
    write_manifest(dir, {"correlate", flags, {in}, {out}, std::nullopt});
    return kOk;
}

// --- fit ---------------------------------------------------------------------

namespace {

std::string stem_of(const std::string& path) {
    std::string s = fs::path(path).filename().string();
    if (auto dot = s.rfind('.'); dot != std::string::npos && dot > 0) s.erase(dot);
    return s;
}

Series read_kind(const std::string& path, DatasetKind kind) {
    Series s = read_series(path);
    if (s.kind != kind) throw DataError(path + " holds " + to_string(s.kind) + " data, expected " + to_string(kind));
    return s;
}

void print_fit(const std::string& label, const FitResult& f) {
    std::cout << label << " (" << to_string(f.family) << "), reduced chi2 " << format_double(f.reduced_chi2) << '\n';
    for (const auto& p : f.parameters) {
        std::cout << "  " << p.name << " = " << format_double(p.value) << " +- " << format_double(p.standard_error);
        if (!p.unit.empty()) std::cout << ' ' << p.unit;
        if (!p.identifiable) std::cout << "  (unidentifiable)";
        std::cout << '\n';
    }
    for (const auto& flag : f.flags) std::cout << "  flag: " << flag << '\n';
}

} // namespace

int run_fit(const FitArgs& a, const std::map<std::string, std::string>& flags) {
    const FitFamily family = parse_fit_family(a.family);
    if (a.in.empty()) throw UsageError("--in needs at least one file");
    if (a.psb_peaks < 0) throw UsageError("--psb-peaks must be >= 0");
    std::vector<InputProvenance> inputs;
    for (const auto& p : a.in) inputs.push_back(provenance(p));
    const fs::path dir = output_dir(a.out);
    std::vector<fs::path> outputs;
    bool converged = true;

    auto emit = [&](const std::string& stem, FitResult fit, std::vector<InputProvenance> used) {
        converged = converged && fit.convergence.converged;
        const fs::path path = dir / (stem + ".fit.json");
        write_fit_report(path, {std::move(fit), std::move(used), kToolVersion});
        outputs.push_back(path);
    };

    if (family == FitFamily::G2Global) {
        if (!a.powers_mw.empty() && a.powers_mw.size() != a.in.size()) {
            throw UsageError("--power-mW needs one value per input");
        }
        PowerSeries series;
        for (std::size_t i = 0; i < a.in.size(); ++i) {
            auto h = read_g2hist(a.in[i]);
            double p = a.powers_mw.empty() ? metadata_number(h.metadata, "power_mW") : a.powers_mw[i];
            if (!std::isfinite(p)) throw DataError(a.in[i] + " records no power_mW; pass --power-mW");
            series.entries.push_back({p, std::move(h)});
        }
        std::optional<EmitterModel> init;
        if (!a.init.empty()) {
            init = load_model(a.init);
            if (fs::exists(a.init)) inputs.push_back(provenance(a.init));
        }
        FitResult fit = fit_g2_global(series, init);
        print_fit("g2_global", fit);
        auto model = emitter_model_from_fit(fit);
        model.name = "fitted";
        const fs::path model_path = dir / "emitter_model.json";
        write_emitter_model(model_path, model);
        outputs.push_back(model_path);
        emit("g2_global", std::move(fit), inputs);
    } else {
        if (!a.init.empty()) throw UsageError("--init applies to g2-global only");
        for (std::size_t i = 0; i < a.in.size(); ++i) {
            const std::string& path = a.in[i];
            FitResult fit;
            switch (family) {
            case FitFamily::G2Single:
                fit = fit_g2_single(read_g2hist(path));
                break;
            case FitFamily::Spectrum: {
                const auto s = read_kind(path, DatasetKind::Spectrum);
                fit = fit_spectrum(s.x, s.y, a.psb_peaks);
                break;
            }
            case FitFamily::Lifetime:
                fit = fit_lifetime(decay_from_series(read_kind(path, DatasetKind::Decay)));
                break;
            case FitFamily::Saturation: {
                const auto s = read_kind(path, DatasetKind::Saturation);
                fit = fit_saturation(s.x, s.y, {a.background});
                break;
            }
            case FitFamily::Polarization: {
                const auto s = read_kind(path, DatasetKind::Polarization);
                fit = fit_polarization(s.x, s.y);
                break;
            }
            case FitFamily::G2Global:
                break;
            }
            print_fit(stem_of(path), fit);
            emit(stem_of(path), std::move(fit), {inputs[i]});
        }
    }
    write_manifest(dir, {"fit", flags, inputs, outputs, std::nullopt});
    if (!converged) {
        warn("fit did not converge; report written with a not_converged flag");
        return kNotConverged;
    }
    return kOk;
}

} // namespace photodyn::cli
