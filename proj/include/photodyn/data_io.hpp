#pragma once

// File formats. Every CSV file opens with comment lines
//
//   # kind: <kind>
//   # schema_version: 1
//   # <key>: <value>          (metadata, any number)
//
// followed by a unit-bearing column header and the rows. Numbers are written
// in shortest round-trip form with '.' as decimal separator and '\n' line
// ends. JSON documents carry "kind" and "schema_version" members.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photodyn/correlator.hpp"
#include "photodyn/fits.hpp"
#include "photodyn/rate_model.hpp"
#include "photodyn/timetags.hpp"

namespace photodyn {

inline constexpr int kSchemaVersion = 1;

enum class DatasetKind { TimeTags, G2Hist, Spectrum, Saturation, Polarization, Decay, EmitterModel, FitReport };

[[nodiscard]] std::string to_string(DatasetKind kind);
[[nodiscard]] DatasetKind parse_dataset_kind(const std::string& name);

/// Kind declared by a file (CSV comment header or JSON "kind" member).
[[nodiscard]] DatasetKind detect_kind(const std::filesystem::path& path);

// --- time tags -----------------------------------------------------------

/// Columns `channel,timestamp_ps`; channel is 0, 1 or sync. The stream
/// duration is stored as metadata `duration_ps`.
void write_timetags(const std::filesystem::path& path, const TimeTagStream& stream);
[[nodiscard]] TimeTagStream read_timetags(const std::filesystem::path& path);

/// Streaming writer for streams too long to hold in memory.
class TimeTagWriter {
public:
    TimeTagWriter(const std::filesystem::path& path, std::int64_t duration_ps,
                  const std::map<std::string, std::string>& metadata);
    void write(std::span<const TimeTag> events);
    void close();
    [[nodiscard]] std::uint64_t rows() const { return rows_; }

private:
    std::ofstream out_;
    std::string buffer_;
    std::uint64_t rows_ = 0;
};

/// Streaming reader: header on construction, rows in chunks.
class TimeTagReader {
public:
    explicit TimeTagReader(const std::filesystem::path& path);
    [[nodiscard]] const std::map<std::string, std::string>& metadata() const { return metadata_; }
    [[nodiscard]] std::int64_t duration_ps() const { return duration_ps_; }
    /// Replaces `out` with up to max_events rows. Returns false once the file is exhausted
    /// and nothing was read. Throws ParseError on malformed or out-of-order rows.
    bool next(std::vector<TimeTag>& out, std::size_t max_events = 1 << 16);

private:
    std::ifstream in_;
    std::map<std::string, std::string> metadata_;
    std::int64_t duration_ps_ = 0;
    std::size_t line_ = 0;
    std::int64_t last_ps_ = 0;
    bool have_last_ = false;
};

// --- g2 histograms --------------------------------------------------------

/// Columns `tau_ns,g2,sigma,counts`. Readers require the first three; the raw
/// counts column is optional on input (counts are then recovered from g2 and
/// the normalisation factor).
void write_g2hist(const std::filesystem::path& path, const CorrelationHistogram& hist);
[[nodiscard]] CorrelationHistogram read_g2hist(const std::filesystem::path& path);

// --- two-column series ----------------------------------------------------

/// spectrum `wavelength_nm,counts`, saturation `power_mW,rate_Hz`,
/// polarization `angle_deg,rate_Hz`, decay `time_ns,counts`.
struct Series {
    DatasetKind kind = DatasetKind::Spectrum;
    std::vector<double> x;
    std::vector<double> y;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] bool operator==(const Series&) const = default;
};

[[nodiscard]] std::pair<std::string, std::string> series_columns(DatasetKind kind);
void write_series(const std::filesystem::path& path, const Series& series);
[[nodiscard]] Series read_series(const std::filesystem::path& path);

/// Decay histograms travel as decay series with bin_width_ns / period_ns metadata.
[[nodiscard]] Series to_series(const DecayHistogram& hist);
[[nodiscard]] DecayHistogram decay_from_series(const Series& series);

// --- JSON documents ------------------------------------------------------

[[nodiscard]] std::string emitter_model_to_json(const EmitterModel& model);
[[nodiscard]] EmitterModel emitter_model_from_json(const std::string& text);
void write_emitter_model(const std::filesystem::path& path, const EmitterModel& model);
[[nodiscard]] EmitterModel read_emitter_model(const std::filesystem::path& path);

struct InputProvenance {
    std::string path;
    std::string sha256;
    std::string kind;

    [[nodiscard]] bool operator==(const InputProvenance&) const = default;
};

struct FitReport {
    FitResult fit;
    std::vector<InputProvenance> inputs;
    std::string tool_version;
};

[[nodiscard]] std::string fit_report_to_json(const FitReport& report);
[[nodiscard]] FitReport fit_report_from_json(const std::string& text);
void write_fit_report(const std::filesystem::path& path, const FitReport& report);
[[nodiscard]] FitReport read_fit_report(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

} // namespace photodyn
