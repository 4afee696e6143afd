#pragma once

// Synthetic datasets drawn from the model laws, with optional Poisson noise.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "photodyn/correlator.hpp"
#include "photodyn/fits.hpp"
#include "photodyn/rate_model.hpp"

namespace synth {

inline double poisson(std::mt19937_64* rng, double mean) {
    if (!rng) return mean;
    return static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(*rng));
}

/// Tail-normalised g2 histogram with `plateau` expected counts per bin far
/// from zero. Noise-free when rng is null (normalized holds the exact bin
/// averages then).
inline photodyn::CorrelationHistogram g2_histogram(double a, double tau1, double tau2, double width,
                                                   double max_delay, double plateau, std::mt19937_64* rng) {
    photodyn::CorrelationHistogram h;
    h.bin_width_ns = width;
    h.half_bins = std::llround(max_delay / width);
    const std::size_t n = static_cast<std::size_t>(2 * h.half_bins + 1);
    std::vector<double> exact(n);
    for (std::size_t i = 0; i < n; ++i) {
        exact[i] = photodyn::g2_law_bin_average(a, tau1, tau2, h.center_ns(i), width);
        h.counts.push_back(static_cast<std::uint64_t>(std::llround(poisson(rng, plateau * exact[i]))));
    }
    h.normalized.assign(n, 0.0);
    h.sigma.assign(n, 1.0);
    if (rng) return photodyn::normalize(h, photodyn::Normalization::TailPlateau);
    h.normalization = photodyn::Normalization::TailPlateau;
    h.tail_window = photodyn::default_tail_window(h);
    h.norm_factor = plateau;
    for (std::size_t i = 0; i < n; ++i) {
        h.normalized[i] = exact[i];
        h.sigma[i] = std::sqrt(std::max(plateau * exact[i], 1.0)) / plateau;
    }
    return h;
}

inline photodyn::PowerSeries power_series(const photodyn::EmitterModel& m, const std::vector<double>& powers,
                                          double width, double max_delay, double plateau, std::mt19937_64* rng) {
    photodyn::PowerSeries s;
    for (double p : powers) {
        const auto r = photodyn::rates_at_power(m, p);
        const auto tc = photodyn::time_constants(r);
        const double a = photodyn::bunching_amplitude(r, tc.tau1, tc.tau2).value;
        s.entries.push_back({p, g2_histogram(a, tc.tau1, tc.tau2, width, max_delay, plateau, rng)});
    }
    return s;
}

struct Peak {
    double center, fwhm, area;
};

inline std::vector<double> spectrum(const std::vector<double>& wl, double baseline, const std::vector<Peak>& peaks,
                                    std::mt19937_64* rng) {
    std::vector<double> y;
    for (double x : wl) {
        double v = baseline;
        for (const auto& p : peaks) v += photodyn::lorentzian(x, p.center, p.fwhm, p.area);
        y.push_back(poisson(rng, v));
    }
    return y;
}

/// ZPL plus one broad red-shifted side band with areas set by S.
inline std::vector<Peak> zpl_psb(double zpl, double fwhm, double S, double total_area) {
    const double zpl_area = total_area * std::exp(-S);
    return {{zpl, fwhm, zpl_area}, {zpl + 14.0, 16.0, total_area - zpl_area}};
}

inline std::vector<double> grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (int i = 0; lo + i * step <= hi + 1e-9; ++i) g.push_back(lo + i * step);
    return g;
}

} // namespace synth
