#pragma once

// Closed-form photophysics of a three-level emitter (ground 1, excited 2,
// metastable 3) whose de-shelving rate k31 saturates with excitation power.
//
// Units are fixed throughout the library: rates in GHz, times in ns,
// powers in mW.

#include <span>
#include <string>
#include <vector>

namespace photodyn {

/// Rate coefficients k_ij (state i -> state j) at one excitation power.
struct RateCoefficients {
    double k12 = 0.0;
    double k21 = 0.0;
    double k23 = 0.0;
    double k31 = 0.0;

    /// Throws DomainError unless all rates are finite, >= 0, and k21 > 0.
    void validate() const;
};

/// Power-independent description of one emitter.
struct EmitterModel {
    std::string name;
    double pump_efficiency = 0.0; ///< K, GHz/mW
    double k21 = 0.0;             ///< GHz
    double k23 = 0.0;             ///< GHz
    double deshelve_high = 0.0;   ///< A1, GHz
    double deshelve_sat = 1.0;    ///< B1, mW
    double deshelve_low = 0.0;    ///< C1, GHz

    void validate() const;

    [[nodiscard]] bool operator==(const EmitterModel&) const = default;
};

/// The two emitters characterised in the reference measurements. Pump
/// efficiency K is not part of the published table; 0.05 GHz/mW is the
/// value injected by the simulations in this project.
constexpr double kReferencePumpEfficiency = 0.05;
[[nodiscard]] EmitterModel gev1_model(double pump_efficiency = kReferencePumpEfficiency);
[[nodiscard]] EmitterModel gev2_model(double pump_efficiency = kReferencePumpEfficiency);

enum class Shelving {
    Regular,   ///< k31 > 0: state 3 empties again
    Permanent, ///< k31 == 0: state 3 is absorbing
};

struct TimeConstants {
    double tau1 = 0.0; ///< antibunching (fast) time, ns
    double tau2 = 0.0; ///< bunching (slow) time, ns; +inf when shelving is permanent and B == 0
    Shelving shelving = Shelving::Regular;
};

struct BunchingAmplitude {
    double value = 0.0; ///< raw a, may be negative for unphysical inputs; +inf under permanent shelving
    Shelving shelving = Shelving::Regular;
};

/// g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2).
struct G2Parameters {
    double a = 0.0;
    double tau1 = 1.0;
    double tau2 = 1.0;

    /// Validates tau1 > 0, tau2 > 0, tau1 <= tau2, a >= 0.
    [[nodiscard]] static G2Parameters make(double a, double tau1, double tau2);
    /// Runs time_constants + bunching_amplitude; a is clamped to >= 0 here.
    [[nodiscard]] static G2Parameters from_rates(const RateCoefficients& rates);
};

struct SteadyState {
    double n1 = 1.0;
    double n2 = 0.0;
    double n3 = 0.0;
    double emission_rate = 0.0; ///< k21 * n2, GHz
    Shelving shelving = Shelving::Regular;
};

[[nodiscard]] double pump_rate(const EmitterModel& model, double power_mw);
[[nodiscard]] double deshelving_rate(const EmitterModel& model, double power_mw);
[[nodiscard]] RateCoefficients rates_at_power(const EmitterModel& model, double power_mw);

/// Roots of the characteristic quadratic of the rate equations:
///   A = k12 + k21 + k23 + k31
///   B = k12 k23 + k12 k31 + k21 k31 + k23 k31
///   tau1 = 2 / (A + sqrt(A^2 - 4B)),  tau2 = 2 / (A - sqrt(A^2 - 4B))
/// tau2 is evaluated as (A + sqrt(A^2 - 4B)) / (2B), the same quantity without
/// the cancellation in A - sqrt(...).
[[nodiscard]] TimeConstants time_constants(const RateCoefficients& rates);

/// a = (1 - tau2 k31) / (k31 (tau2 - tau1)), unclamped.
[[nodiscard]] BunchingAmplitude bunching_amplitude(const RateCoefficients& rates, double tau1, double tau2);

[[nodiscard]] double g2_model(const G2Parameters& params, double tau_ns);
/// Same law without the G2Parameters invariants (raw a, any ordering).
[[nodiscard]] double g2_law(double a, double tau1, double tau2, double tau_ns);
/// Average of g2_law over [center - width/2, center + width/2].
[[nodiscard]] double g2_law_bin_average(double a, double tau1, double tau2, double center_ns, double width_ns);

[[nodiscard]] SteadyState steady_state(const RateCoefficients& rates);
[[nodiscard]] std::vector<double> predicted_saturation_curve(const EmitterModel& model,
                                                             std::span<const double> powers_mw);

/// tau1 at vanishing pump (k12 = 0, k31 = C1).
[[nodiscard]] double zero_power_lifetime(const EmitterModel& model);

/// k23 / k31(P) at a caller-chosen power.
[[nodiscard]] double ratio_k23_k31(const EmitterModel& model, double power_mw);

/// Non-radiative share of a measured total decay rate: Gamma_measured - k21.
[[nodiscard]] double nonradiative_rate(const EmitterModel& model, double measured_lifetime_ns);

} // namespace photodyn
