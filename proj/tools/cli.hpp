#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photodyn/data_io.hpp"
#include "photodyn/errors.hpp"

namespace photodyn::cli {

inline constexpr const char* kToolVersion = PHOTODYN_VERSION;

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNotConverged = 3;

/// Bad flag combination or value detected after parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

struct SimulateArgs {
    std::string model = "gev1";
    double power_mw = 1.0;
    double duration_s = 1.0;
    std::string mode = "cw";
    std::uint64_t seed = 0;
    double efficiency = 0.1;
    double background_hz = 0.0;
    double splitter_ratio = 0.5;
    double period_ns = 100.0;
    double excitation_probability = 1.0;
    std::string out;
};

struct CorrelateArgs {
    std::string in;
    std::string mode = "g2";
    double bin_ns = 1.0;
    std::optional<double> max_delay_ns;
    std::string normalize = "tail";
    std::optional<double> period_ns;
    int side_peaks = 5;
    std::string out;
};

struct FitArgs {
    std::string family;
    std::vector<std::string> in;
    std::vector<double> powers_mw;
    std::string init;
    int psb_peaks = 1;
    bool background = false;
    std::string out;
};

struct ReportArgs {
    std::vector<std::string> in;
    int points = 500;
    bool svg = false;
    std::string out;
};

int run_simulate(const SimulateArgs& args, const std::map<std::string, std::string>& flags);
int run_correlate(const CorrelateArgs& args, const std::map<std::string, std::string>& flags);
int run_fit(const FitArgs& args, const std::map<std::string, std::string>& flags);
int run_report(const ReportArgs& args, const std::map<std::string, std::string>& flags);

// --- shared helpers (commands.cpp) ----------------------------------------

/// --out, else $PHOTODYN_OUT, else the working directory. Created if missing.
std::filesystem::path output_dir(const std::string& flag);

std::string sha256_file(const std::filesystem::path& path);

struct Manifest {
    std::string subcommand;
    std::map<std::string, std::string> flags;
    std::vector<InputProvenance> inputs;
    std::vector<std::filesystem::path> outputs;
    std::optional<std::uint64_t> seed;
};

/// Writes <dir>/manifest.json, replacing any earlier one.
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);

InputProvenance provenance(const std::filesystem::path& path);

/// Emitter model from a JSON file or a built-in name (gev1, gev2).
EmitterModel load_model(const std::string& spec);

void warn(const std::string& message);

} // namespace photodyn::cli
