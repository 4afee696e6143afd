#include "photodyn/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "json.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/format.hpp"

namespace photodyn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kKindNames[] = {"timetags", "g2hist", "spectrum", "saturation", "polarization", "decay",
                                  "emitter_model", "fit_report"};

std::string int_str(std::int64_t v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

void check_meta_text(const std::string& s) {
    if (s.find('\n') != std::string::npos || s.find('\r') != std::string::npos) {
        throw DataError("metadata may not contain line breaks: '" + s + "'");
    }
}

std::string csv_preamble(DatasetKind kind, const std::map<std::string, std::string>& metadata) {
    std::string out = "# kind: " + to_string(kind) + "\n# schema_version: " + int_str(kSchemaVersion) + "\n";
    for (const auto& [k, v] : metadata) {
        check_meta_text(k);
        check_meta_text(v);
        if (k.empty() || k.find(':') != std::string::npos || k == "kind" || k == "schema_version") {
            throw DataError("invalid metadata key '" + k + "'");
        }
        out += "# " + k + ": " + v + "\n";
    }
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

struct CsvHeader {
    DatasetKind kind = DatasetKind::TimeTags;
    std::map<std::string, std::string> metadata;
    std::string columns;
};

// Reads the comment block and the column header; `line` ends on the header line.
CsvHeader read_csv_header(std::istream& in, std::size_t& line, const fs::path& path) {
    CsvHeader h;
    std::string text;
    std::optional<std::string> kind, version;
    while (std::getline(in, text)) {
        ++line;
        strip_cr(text);
        if (text.empty()) continue;
        if (text[0] != '#') {
            h.columns = text;
            break;
        }
        const auto colon = text.find(':');
        if (colon == std::string::npos) throw ParseError("comment line without 'key: value'", line);
        auto key = text.substr(1, colon - 1);
        auto value = text.substr(colon + 1);
        const auto trim = [](std::string& s) {
            const auto b = s.find_first_not_of(' ');
            const auto e = s.find_last_not_of(' ');
            s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        trim(key);
        if (!value.empty() && value[0] == ' ') value.erase(0, 1);
        if (key == "kind") {
            kind = value;
        } else if (key == "schema_version") {
            version = value;
        } else {
            h.metadata[key] = value;
        }
    }
    if (!kind) throw SchemaError(path.string() + ": missing '# kind:' header");
    h.kind = parse_dataset_kind(*kind);
    int v = 0;
    if (!version || !parse_integer(*version, v)) throw SchemaError(path.string() + ": missing schema_version");
    if (v != kSchemaVersion) throw SchemaError(path.string() + ": unsupported schema_version " + *version);
    if (h.columns.empty()) throw SchemaError(path.string() + ": missing column header");
    return h;
}

CsvHeader expect_kind(std::istream& in, std::size_t& line, const fs::path& path, DatasetKind kind) {
    auto h = read_csv_header(in, line, path);
    if (h.kind != kind) {
        throw SchemaError(path.string() + ": expected kind " + to_string(kind) + ", found " + to_string(h.kind));
    }
    return h;
}

std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double field_double(std::string_view s, std::size_t line, const char* what) {
    double v = 0;
    if (!parse_double(s, v)) throw ParseError(std::string("bad ") + what + " '" + std::string(s) + "'", line);
    return v;
}

template <class Int>
Int meta_int(const std::map<std::string, std::string>& m, const std::string& key, const fs::path& path) {
    const auto it = m.find(key);
    Int v{};
    if (it == m.end() || !parse_integer(it->second, v)) {
        throw SchemaError(path.string() + ": missing or invalid metadata '" + key + "'");
    }
    return v;
}

double meta_double(const std::map<std::string, std::string>& m, const std::string& key, const fs::path& path) {
    const auto it = m.find(key);
    double v = 0;
    if (it == m.end() || !parse_double(it->second, v)) {
        throw SchemaError(path.string() + ": missing or invalid metadata '" + key + "'");
    }
    return v;
}

std::string channel_name(Channel c) {
    switch (c) {
    case Channel::Detector0: return "0";
    case Channel::Detector1: return "1";
    case Channel::Sync: return "sync";
    }
    return "?";
}

void append_tag(std::string& buf, const TimeTag& t) {
    buf += channel_name(t.channel);
    buf += ',';
    char num[32];
    auto r = std::to_chars(num, num + sizeof num, t.timestamp_ps);
    buf.append(num, r.ptr);
    buf += '\n';
}

const char* normalization_name(Normalization n) {
    switch (n) {
    case Normalization::Raw: return "raw";
    case Normalization::TailPlateau: return "tail";
    case Normalization::RateProduct: return "rate";
    }
    return "raw";
}

Normalization parse_normalization(const std::string& s) {
    if (s == "raw") return Normalization::Raw;
    if (s == "tail") return Normalization::TailPlateau;
    if (s == "rate") return Normalization::RateProduct;
    throw SchemaError("unknown normalization '" + s + "'");
}

// JSON numbers cannot hold inf/nan; those travel as strings.
json num(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double num(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan") return NAN;
    }
    throw SchemaError("expected a number, got " + j.dump());
}

void check_json_header(const json& j, DatasetKind kind) {
    if (!j.is_object() || !j.contains("kind") || !j.contains("schema_version")) {
        throw SchemaError("JSON document lacks kind/schema_version");
    }
    if (j.at("kind").get<std::string>() != to_string(kind)) {
        throw SchemaError("expected kind " + to_string(kind) + ", found " + j.at("kind").get<std::string>());
    }
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
        throw SchemaError("unsupported schema_version " + j.at("schema_version").dump());
    }
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), 1);
    }
}

json model_json(const EmitterModel& m) {
    return json{{"K_GHz_per_mW", m.pump_efficiency}, {"k21_GHz", m.k21},         {"k23_GHz", m.k23},
                {"A1_GHz", m.deshelve_high},         {"B1_mW", m.deshelve_sat}, {"C1_GHz", m.deshelve_low}};
}

} // namespace

std::string to_string(DatasetKind kind) { return kKindNames[static_cast<int>(kind)]; }

DatasetKind parse_dataset_kind(const std::string& name) {
    for (int i = 0; i < 8; ++i) {
        if (name == kKindNames[i]) return static_cast<DatasetKind>(i);
    }
    throw SchemaError("unknown dataset kind '" + name + "'");
}

DatasetKind detect_kind(const fs::path& path) {
    auto in = open_in(path);
    const int c = in.peek();
    if (c == '{') {
        std::stringstream ss;
        ss << in.rdbuf();
        const auto j = parse_json(ss.str());
        if (!j.contains("kind")) throw SchemaError(path.string() + ": JSON without kind");
        return parse_dataset_kind(j.at("kind").get<std::string>());
    }
    std::size_t line = 0;
    return read_csv_header(in, line, path).kind;
}

// --- time tags -----------------------------------------------------------

TimeTagWriter::TimeTagWriter(const fs::path& path, std::int64_t duration_ps,
                             const std::map<std::string, std::string>& metadata)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot write '" + path.string() + "'");
    auto meta = metadata;
    meta["duration_ps"] = int_str(duration_ps);
    out_ << csv_preamble(DatasetKind::TimeTags, meta) << "channel,timestamp_ps\n";
}

void TimeTagWriter::write(std::span<const TimeTag> events) {
    for (const auto& t : events) {
        append_tag(buffer_, t);
        if (buffer_.size() > (1u << 20)) {
            out_ << buffer_;
            buffer_.clear();
        }
    }
    rows_ += events.size();
}

void TimeTagWriter::close() {
    out_ << buffer_;
    buffer_.clear();
    out_.close();
    if (!out_) throw DataError("failed writing time tags");
}

void write_timetags(const fs::path& path, const TimeTagStream& stream) {
    if (!stream.is_sorted()) throw DataError("time tags must be time-ordered");
    std::string out = csv_preamble(DatasetKind::TimeTags, [&] {
        auto meta = stream.metadata;
        meta["duration_ps"] = int_str(stream.duration_ps);
        return meta;
    }());
    out += "channel,timestamp_ps\n";
    out.reserve(out.size() + stream.events.size() * 14);
    for (const auto& t : stream.events) append_tag(out, t);
    write_file_atomic(path, out);
}

TimeTagReader::TimeTagReader(const fs::path& path) : in_(open_in(path)) {
    auto h = expect_kind(in_, line_, path, DatasetKind::TimeTags);
    if (h.columns != "channel,timestamp_ps") {
        throw SchemaError(path.string() + ": expected header 'channel,timestamp_ps', found '" + h.columns + "'");
    }
    duration_ps_ = meta_int<std::int64_t>(h.metadata, "duration_ps", path);
    h.metadata.erase("duration_ps");
    metadata_ = std::move(h.metadata);
}

bool TimeTagReader::next(std::vector<TimeTag>& out, std::size_t max_events) {
    out.clear();
    std::string text;
    while (out.size() < max_events && std::getline(in_, text)) {
        ++line_;
        strip_cr(text);
        if (text.empty()) continue;
        const auto comma = text.find(',');
        if (comma == std::string::npos || text.find(',', comma + 1) != std::string::npos) {
            throw ParseError("expected 2 fields", line_);
        }
        const std::string_view ch(text.data(), comma);
        const std::string_view ts(text.data() + comma + 1, text.size() - comma - 1);
        TimeTag t;
        if (ch == "0") {
            t.channel = Channel::Detector0;
        } else if (ch == "1") {
            t.channel = Channel::Detector1;
        } else if (ch == "sync") {
            t.channel = Channel::Sync;
        } else {
            throw ParseError("bad channel '" + std::string(ch) + "'", line_);
        }
        if (!parse_integer(ts, t.timestamp_ps)) throw ParseError("bad timestamp '" + std::string(ts) + "'", line_);
        if (t.timestamp_ps < 0 || t.timestamp_ps > duration_ps_) {
            throw ParseError("timestamp outside [0, duration_ps]", line_);
        }
        if (have_last_ && t.timestamp_ps < last_ps_) throw ParseError("timestamp out of order", line_);
        last_ps_ = t.timestamp_ps;
        have_last_ = true;
        out.push_back(t);
    }
    return !out.empty();
}

TimeTagStream read_timetags(const fs::path& path) {
    TimeTagReader reader(path);
    TimeTagStream s;
    s.duration_ps = reader.duration_ps();
    s.metadata = reader.metadata();
    std::vector<TimeTag> chunk;
    while (reader.next(chunk)) s.events.insert(s.events.end(), chunk.begin(), chunk.end());
    return s;
}

// --- g2 histograms --------------------------------------------------------

void write_g2hist(const fs::path& path, const CorrelationHistogram& hist) {
    auto meta = hist.metadata;
    meta["bin_width_ns"] = format_double(hist.bin_width_ns);
    meta["half_bins"] = int_str(hist.half_bins);
    meta["normalization"] = normalization_name(hist.normalization);
    meta["norm_factor"] = format_double(hist.norm_factor);
    meta["n0"] = int_str(static_cast<std::int64_t>(hist.n0));
    meta["n1"] = int_str(static_cast<std::int64_t>(hist.n1));
    meta["duration_ps"] = int_str(hist.duration_ps);
    if (hist.tail_window) {
        meta["tail_lo_ns"] = format_double(hist.tail_window->lo_ns);
        meta["tail_hi_ns"] = format_double(hist.tail_window->hi_ns);
    }
    for (std::size_t i = 0; i < hist.warnings.size(); ++i) meta["warning_" + int_str(static_cast<std::int64_t>(i))] = hist.warnings[i];
    std::string out = csv_preamble(DatasetKind::G2Hist, meta) + "tau_ns,g2,sigma,counts\n";
    for (std::size_t i = 0; i < hist.size(); ++i) {
        const double g = i < hist.normalized.size() ? hist.normalized[i] : static_cast<double>(hist.counts[i]);
        const double s = i < hist.sigma.size() ? hist.sigma[i] : std::sqrt(std::max<double>(hist.counts[i], 1.0));
        out += format_double(hist.center_ns(i)) + ',' + format_double(g) + ',' + format_double(s) + ',' +
               int_str(static_cast<std::int64_t>(hist.counts[i])) + '\n';
    }
    write_file_atomic(path, out);
}

CorrelationHistogram read_g2hist(const fs::path& path) {
    auto in = open_in(path);
    std::size_t line = 0;
    auto h = expect_kind(in, line, path, DatasetKind::G2Hist);
    bool with_counts = false;
    if (h.columns == "tau_ns,g2,sigma,counts") {
        with_counts = true;
    } else if (h.columns != "tau_ns,g2,sigma") {
        throw SchemaError(path.string() + ": expected header 'tau_ns,g2,sigma', found '" + h.columns + "'");
    }
    CorrelationHistogram hist;
    auto& m = h.metadata;
    hist.bin_width_ns = meta_double(m, "bin_width_ns", path);
    hist.half_bins = meta_int<std::int64_t>(m, "half_bins", path);
    hist.normalization = parse_normalization(m.count("normalization") ? m.at("normalization") : "raw");
    hist.norm_factor = m.count("norm_factor") ? meta_double(m, "norm_factor", path) : 1.0;
    hist.n0 = m.count("n0") ? meta_int<std::uint64_t>(m, "n0", path) : 0;
    hist.n1 = m.count("n1") ? meta_int<std::uint64_t>(m, "n1", path) : 0;
    hist.duration_ps = m.count("duration_ps") ? meta_int<std::int64_t>(m, "duration_ps", path) : 0;
    if (m.count("tail_lo_ns")) {
        hist.tail_window = TailWindow{meta_double(m, "tail_lo_ns", path), meta_double(m, "tail_hi_ns", path)};
    }
    for (const char* k : {"bin_width_ns", "half_bins", "normalization", "norm_factor", "n0", "n1", "duration_ps",
                          "tail_lo_ns", "tail_hi_ns"}) {
        m.erase(k);
    }
    for (auto it = m.begin(); it != m.end();) {
        if (it->first.rfind("warning_", 0) == 0) {
            hist.warnings.push_back(it->second);
            it = m.erase(it);
        } else {
            ++it;
        }
    }
    hist.metadata = m;
    if (!(hist.bin_width_ns > 0) || hist.half_bins < 0) throw SchemaError(path.string() + ": invalid bin layout");

    std::string text;
    while (std::getline(in, text)) {
        ++line;
        strip_cr(text);
        if (text.empty()) continue;
        const auto f = split(text);
        if (f.size() != (with_counts ? 4u : 3u)) throw ParseError("wrong number of fields", line);
        const double tau = field_double(f[0], line, "tau_ns");
        const double g = field_double(f[1], line, "g2");
        const double s = field_double(f[2], line, "sigma");
        const std::size_t i = hist.counts.size();
        if (std::abs(tau - hist.center_ns(i)) > 1e-6 * hist.bin_width_ns) {
            throw ParseError("tau_ns does not match the bin layout", line);
        }
        std::uint64_t c = 0;
        if (with_counts) {
            if (!parse_integer(f[3], c)) throw ParseError("bad counts '" + std::string(f[3]) + "'", line);
        } else {
            c = static_cast<std::uint64_t>(std::llround(std::max(g * hist.norm_factor, 0.0)));
        }
        hist.counts.push_back(c);
        hist.normalized.push_back(g);
        hist.sigma.push_back(s);
    }
    if (hist.counts.size() != static_cast<std::size_t>(2 * hist.half_bins + 1)) {
        throw SchemaError(path.string() + ": expected " + int_str(2 * hist.half_bins + 1) + " rows");
    }
    return hist;
}

// --- series ---------------------------------------------------------------

std::pair<std::string, std::string> series_columns(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::Spectrum: return {"wavelength_nm", "counts"};
    case DatasetKind::Saturation: return {"power_mW", "rate_Hz"};
    case DatasetKind::Polarization: return {"angle_deg", "rate_Hz"};
    case DatasetKind::Decay: return {"time_ns", "counts"};
    default: throw SchemaError(to_string(kind) + " is not a two-column series");
    }
}

void write_series(const fs::path& path, const Series& series) {
    if (series.x.size() != series.y.size()) throw DataError("series columns differ in length");
    const auto [cx, cy] = series_columns(series.kind);
    std::string out = csv_preamble(series.kind, series.metadata) + cx + "," + cy + "\n";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
        out += format_double(series.x[i]) + ',' + format_double(series.y[i]) + '\n';
    }
    write_file_atomic(path, out);
}

Series read_series(const fs::path& path) {
    auto in = open_in(path);
    std::size_t line = 0;
    auto h = read_csv_header(in, line, path);
    Series s;
    s.kind = h.kind;
    const auto [cx, cy] = series_columns(h.kind);
    if (h.columns != cx + "," + cy) {
        throw SchemaError(path.string() + ": expected header '" + cx + "," + cy + "', found '" + h.columns + "'");
    }
    s.metadata = std::move(h.metadata);
    std::string text;
    while (std::getline(in, text)) {
        ++line;
        strip_cr(text);
        if (text.empty()) continue;
        const auto f = split(text);
        if (f.size() != 2) throw ParseError("wrong number of fields", line);
        s.x.push_back(field_double(f[0], line, cx.c_str()));
        s.y.push_back(field_double(f[1], line, cy.c_str()));
    }
    return s;
}

Series to_series(const DecayHistogram& hist) {
    Series s;
    s.kind = DatasetKind::Decay;
    s.metadata = hist.metadata;
    s.metadata["bin_width_ns"] = format_double(hist.bin_width_ns);
    s.metadata["period_ns"] = format_double(hist.period_ns);
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        s.x.push_back(hist.time_ns(i));
        s.y.push_back(static_cast<double>(hist.counts[i]));
    }
    return s;
}

DecayHistogram decay_from_series(const Series& series) {
    if (series.kind != DatasetKind::Decay) throw SchemaError("not a decay series");
    DecayHistogram h;
    h.metadata = series.metadata;
    h.bin_width_ns = meta_double(h.metadata, "bin_width_ns", "decay series");
    h.period_ns = meta_double(h.metadata, "period_ns", "decay series");
    h.metadata.erase("bin_width_ns");
    h.metadata.erase("period_ns");
    for (double c : series.y) {
        if (!(c >= 0) || c != std::floor(c)) throw DataError("decay counts must be non-negative integers");
        h.counts.push_back(static_cast<std::uint64_t>(c));
    }
    return h;
}

// --- JSON -------------------------------------------------------------------

std::string emitter_model_to_json(const EmitterModel& model) {
    const json j{{"kind", "emitter_model"},
                 {"schema_version", kSchemaVersion},
                 {"name", model.name},
                 {"parameters", model_json(model)}};
    return j.dump(2) + "\n";
}

EmitterModel emitter_model_from_json(const std::string& text) {
    const auto j = parse_json(text);
    check_json_header(j, DatasetKind::EmitterModel);
    try {
        const auto& p = j.at("parameters");
        EmitterModel m;
        m.name = j.value("name", "");
        m.pump_efficiency = p.at("K_GHz_per_mW").get<double>();
        m.k21 = p.at("k21_GHz").get<double>();
        m.k23 = p.at("k23_GHz").get<double>();
        m.deshelve_high = p.at("A1_GHz").get<double>();
        m.deshelve_sat = p.at("B1_mW").get<double>();
        m.deshelve_low = p.at("C1_GHz").get<double>();
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("emitter model: ") + e.what());
    }
}

void write_emitter_model(const fs::path& path, const EmitterModel& model) {
    write_file_atomic(path, emitter_model_to_json(model));
}

EmitterModel read_emitter_model(const fs::path& path) { return emitter_model_from_json(read_file(path)); }

std::string fit_report_to_json(const FitReport& report) {
    const auto& f = report.fit;
    json params = json::array();
    for (const auto& p : f.parameters) {
        params.push_back({{"name", p.name},
                          {"unit", p.unit},
                          {"value", num(p.value)},
                          {"standard_error", num(p.standard_error)},
                          {"identifiable", p.identifiable}});
    }
    json derived = json::object();
    for (const auto& [k, v] : f.derived) derived[k] = num(v);
    json settings = json::object();
    for (const auto& [k, v] : f.settings) settings[k] = num(v);
    json data = json::array();
    for (const auto& d : f.data) data.push_back({num(d.x), num(d.y), num(d.sigma), d.group});
    json inputs = json::array();
    for (const auto& in : report.inputs) inputs.push_back({{"path", in.path}, {"sha256", in.sha256}, {"kind", in.kind}});
    json j{{"kind", "fit_report"},
           {"schema_version", kSchemaVersion},
           {"family", to_string(f.family)},
           {"parameters", params},
           {"reduced_chi2", num(f.reduced_chi2)},
           {"n_points", f.n_points},
           {"n_params", f.n_params},
           {"convergence",
            {{"converged", f.convergence.converged},
             {"iterations", f.convergence.iterations},
             {"final_gradient_norm", num(f.convergence.final_gradient_norm)},
             {"reason", f.convergence.reason}}},
           {"derived", derived},
           {"flags", f.flags},
           {"settings", settings},
           {"provenance", {{"tool_version", report.tool_version}, {"inputs", inputs}}},
           {"data", data}};
    if (f.family == FitFamily::G2Global) j["emitter_model"] = model_json(emitter_model_from_fit(f));
    return j.dump(2) + "\n";
}

FitReport fit_report_from_json(const std::string& text) {
    const auto j = parse_json(text);
    check_json_header(j, DatasetKind::FitReport);
    FitReport r;
    try {
        auto& f = r.fit;
        f.family = parse_fit_family(j.at("family").get<std::string>());
        for (const auto& p : j.at("parameters")) {
            f.parameters.push_back({p.at("name").get<std::string>(), p.at("unit").get<std::string>(), num(p.at("value")),
                                    num(p.at("standard_error")), p.at("identifiable").get<bool>()});
        }
        f.reduced_chi2 = num(j.at("reduced_chi2"));
        f.n_points = j.at("n_points").get<std::size_t>();
        f.n_params = j.at("n_params").get<std::size_t>();
        const auto& c = j.at("convergence");
        f.convergence.converged = c.at("converged").get<bool>();
        f.convergence.iterations = c.at("iterations").get<int>();
        f.convergence.final_gradient_norm = num(c.at("final_gradient_norm"));
        f.convergence.reason = c.at("reason").get<std::string>();
        for (const auto& [k, v] : j.at("derived").items()) f.derived[k] = num(v);
        f.flags = j.at("flags").get<std::vector<std::string>>();
        for (const auto& [k, v] : j.at("settings").items()) f.settings[k] = num(v);
        for (const auto& d : j.at("data")) f.data.push_back({num(d.at(0)), num(d.at(1)), num(d.at(2)), d.at(3).get<int>()});
        const auto& prov = j.at("provenance");
        r.tool_version = prov.value("tool_version", "");
        for (const auto& in : prov.at("inputs")) {
            r.inputs.push_back({in.at("path").get<std::string>(), in.at("sha256").get<std::string>(),
                                in.at("kind").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("fit report: ") + e.what());
    }
    return r;
}

void write_fit_report(const fs::path& path, const FitReport& report) {
    write_file_atomic(path, fit_report_to_json(report));
}

FitReport read_fit_report(const fs::path& path) { return fit_report_from_json(read_file(path)); }

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp" + int_str(static_cast<std::int64_t>(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + path.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("failed writing '" + path.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw DataError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace photodyn
