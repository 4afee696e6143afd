#pragma once

// Model families fitted by the toolkit. Each returns a FitResult carrying
// parameters with units, standard errors, identifiability and the derived
// quantities of that family.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photodyn/correlator.hpp"
#include "photodyn/least_squares.hpp"
#include "photodyn/rate_model.hpp"

namespace photodyn {

enum class FitFamily { G2Single, G2Global, Spectrum, Lifetime, Saturation, Polarization };

[[nodiscard]] std::string to_string(FitFamily family);
/// Accepts the CLI spellings (g2, g2-global, spectrum, lifetime, saturation, polarization).
[[nodiscard]] FitFamily parse_fit_family(const std::string& name);

struct FitParameter {
    std::string name;
    std::string unit;
    double value = 0.0;
    double standard_error = 0.0;
    bool identifiable = true;
};

/// One measured point as used by the fit: abscissa, value, 1-sigma.
struct DataPoint {
    double x = 0.0;
    double y = 0.0;
    double sigma = 0.0;
    /// Group index for pooled fits (power index for the global g2 fit).
    int group = 0;
};

struct FitResult {
    FitFamily family = FitFamily::G2Single;
    std::vector<FitParameter> parameters;
    double reduced_chi2 = 0.0;
    std::size_t n_points = 0;
    std::size_t n_params = 0;
    Convergence convergence;
    std::map<std::string, double> derived;
    std::vector<std::string> flags;
    std::vector<DataPoint> data;
    /// Abscissa settings needed to resample the fitted curve (bin width, group powers...).
    std::map<std::string, double> settings;

    [[nodiscard]] const FitParameter& param(const std::string& name) const;
    [[nodiscard]] double value(const std::string& name) const { return param(name).value; }
    [[nodiscard]] double error(const std::string& name) const { return param(name).standard_error; }
    [[nodiscard]] bool has_flag(const std::string& flag) const;
};

/// Fitted model evaluated at x (group selects the power for the global fit).
[[nodiscard]] double evaluate_fit(const FitResult& fit, double x, int group = 0);

// --- g2 ----------------------------------------------------------------

struct G2FitOptions {
    /// Compare the data with the model averaged over each bin rather than sampled at the centre.
    bool bin_average = true;
    std::optional<G2Parameters> initial;
    /// Refit with sigma taken from the Poisson variance of the first-pass
    /// curve (needs the histogram's norm_factor).
    bool model_variance = true;
};

/// Fits g2 = 1 - (1+a) exp(-|t|/tau1) + a exp(-|t|/tau2) with unit plateau,
/// weights 1/sigma^2. Parameters: a, tau1, tau2 (ns).
[[nodiscard]] FitResult fit_g2_single(const CorrelationHistogram& hist, const G2FitOptions& options = {});

struct PowerSeriesEntry {
    double power_mw = 0.0;
    CorrelationHistogram histogram;
};

struct PowerSeries {
    std::vector<PowerSeriesEntry> entries;
    /// Throws DataError on non-positive/duplicate powers, fewer than 3 entries
    /// or histograms not sharing one normalisation mode.
    void validate() const;
};

/// Initial emitter model derived from per-power single fits.
[[nodiscard]] EmitterModel global_fit_initial_guess(const PowerSeries& series);

/// One emitter model shared by every power: K, k21, k23, A1, B1, C1 (GHz,
/// GHz/mW, mW). Fitted on log-rates, with the same second weighting pass
/// as fit_g2_single.
[[nodiscard]] FitResult fit_g2_global(const PowerSeries& series, const std::optional<EmitterModel>& initial = std::nullopt);

/// Emitter model held by a g2-global fit result.
[[nodiscard]] EmitterModel emitter_model_from_fit(const FitResult& fit);

// --- spectra -----------------------------------------------------------

/// Lorentzian by centre, full width at half maximum and area.
[[nodiscard]] double lorentzian(double x, double center, double fwhm, double area);

/// Sum of 1 + n_psb_peaks Lorentzians on a constant baseline (>= 0).
/// Parameters: baseline, then center_i, fwhm_i, area_i. The zero-phonon
/// line is the tallest peak; S = -ln(area_ZPL / total area).
[[nodiscard]] FitResult fit_spectrum(std::span<const double> wavelength_nm, std::span<const double> counts,
                                     int n_psb_peaks);

// --- lifetime ----------------------------------------------------------

/// I = I0 + A exp(-t/tau) on a decay histogram. Parameters: I0, A, tau (ns).
[[nodiscard]] FitResult fit_lifetime(const DecayHistogram& hist);
[[nodiscard]] FitResult fit_lifetime(std::span<const double> time_ns, std::span<const double> counts);

// --- saturation --------------------------------------------------------

struct SaturationOptions {
    /// Adds b * P to the model for data that still contain background.
    bool linear_background = false;
};

/// I = I_inf P / (P_sat + P) [+ b P]. Parameters: I_inf (Hz), P_sat (mW) [, b (Hz/mW)];
/// derived I_inf_Hz and P_sat_mW repeat the first two.
[[nodiscard]] FitResult fit_saturation(std::span<const double> power_mw, std::span<const double> rate_hz,
                                       const SaturationOptions& options = {});

// --- polarization ------------------------------------------------------

/// I = alpha + beta sin^2(theta + phi). Parameters: alpha, beta (Hz),
/// phi (deg) in [0, 180). Derived visibility V = beta / (2 alpha + beta).
[[nodiscard]] FitResult fit_polarization(std::span<const double> angle_deg, std::span<const double> rate_hz);

} // namespace photodyn
