#pragma once

// Kinetic Monte Carlo of the three-level emitter seen through a
// beamsplitter and two detectors.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "photodyn/rate_model.hpp"
#include "photodyn/timetags.hpp"

namespace photodyn {

struct CwExcitation {};

/// Delta-pulse excitation: at each pulse an emitter found in state 1 is
/// promoted to state 2 with `excitation_probability`. k12 is zero between
/// pulses; k31 still follows the configured (average) power.
struct PulsedExcitation {
    double period_ns = 100.0;
    double excitation_probability = 1.0;
};

using Excitation = std::variant<CwExcitation, PulsedExcitation>;

struct SimConfig {
    EmitterModel model;
    double power_mw = 1.0;
    double duration_ns = 1e6;
    double detection_efficiency = 1.0;
    double background_rate_ghz = 0.0; ///< per detector channel
    double splitter_ratio = 0.5;      ///< probability a detected photon goes to detector 0
    std::uint64_t seed = 0;
    Excitation mode = CwExcitation{};

    /// Throws ConfigError on any out-of-range field.
    void validate() const;
    [[nodiscard]] bool pulsed() const { return std::holds_alternative<PulsedExcitation>(mode); }
    [[nodiscard]] std::int64_t duration_ps() const;
    /// Flat description stored in the stream metadata (and the run manifest).
    [[nodiscard]] std::map<std::string, std::string> metadata() const;
};

/// Incremental generator. Emits events in timestamp order in chunks so long
/// runs can be correlated without holding the whole stream in memory.
/// Concatenating every chunk gives exactly simulate(config).events.
class PhotonSimulator {
public:
    explicit PhotonSimulator(const SimConfig& config);
    ~PhotonSimulator();
    PhotonSimulator(PhotonSimulator&&) noexcept;
    PhotonSimulator& operator=(PhotonSimulator&&) noexcept;

    /// Appends every event with timestamp < min(until_ps, duration). Returns
    /// true while more events may follow.
    bool generate_until(std::int64_t until_ps, std::vector<TimeTag>& out);

    [[nodiscard]] bool finished() const;
    [[nodiscard]] const SimConfig& config() const;

    /// Time spent in states 1, 2, 3 so far (ns), clipped to the run duration.
    [[nodiscard]] std::array<double, 3> occupation_ns() const;
    /// Photons emitted by the emitter (before detection losses).
    [[nodiscard]] std::uint64_t emitted_photons() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Whole-run helpers. simulate_cw / simulate_pulsed reject the wrong mode.
[[nodiscard]] TimeTagStream simulate(const SimConfig& config);
[[nodiscard]] TimeTagStream simulate_cw(const SimConfig& config);
[[nodiscard]] TimeTagStream simulate_pulsed(const SimConfig& config);

} // namespace photodyn
