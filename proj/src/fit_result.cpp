#include <algorithm>
#include <cmath>

#include "photodyn/errors.hpp"
#include "photodyn/fits.hpp"

namespace photodyn {

std::string to_string(FitFamily family) {
    switch (family) {
    case FitFamily::G2Single: return "g2";
    case FitFamily::G2Global: return "g2-global";
    case FitFamily::Spectrum: return "spectrum";
    case FitFamily::Lifetime: return "lifetime";
    case FitFamily::Saturation: return "saturation";
    case FitFamily::Polarization: return "polarization";
    }
    return "unknown";
}

FitFamily parse_fit_family(const std::string& name) {
    for (auto f : {FitFamily::G2Single, FitFamily::G2Global, FitFamily::Spectrum, FitFamily::Lifetime,
                   FitFamily::Saturation, FitFamily::Polarization}) {
        if (to_string(f) == name) return f;
    }
    throw DomainError("unknown fit family '" + name + "'");
}

const FitParameter& FitResult::param(const std::string& name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return p;
    }
    throw DomainError("fit result has no parameter '" + name + "'");
}

bool FitResult::has_flag(const std::string& flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

double evaluate_fit(const FitResult& fit, double x, int group) {
    switch (fit.family) {
    case FitFamily::G2Single:
        return g2_law(fit.value("a"), fit.value("tau1"), fit.value("tau2"), x);
    case FitFamily::G2Global: {
        const std::string key = "power_mW[" + std::to_string(group) + "]";
        const auto it = fit.settings.find(key);
        if (it == fit.settings.end()) throw DomainError("global fit has no group " + std::to_string(group));
        const auto rates = rates_at_power(emitter_model_from_fit(fit), it->second);
        const auto tc = time_constants(rates);
        const auto amp = bunching_amplitude(rates, tc.tau1, tc.tau2);
        double plateau = 1.0;
        for (const auto& p : fit.parameters) {
            if (p.name == "plateau[" + std::to_string(group) + "]") plateau = p.value;
        }
        return plateau * g2_law(amp.value, tc.tau1, tc.tau2, x);
    }
    case FitFamily::Spectrum: {
        const int peaks = static_cast<int>(fit.settings.at("n_peaks"));
        double y = fit.value("baseline");
        for (int i = 0; i < peaks; ++i) {
            const std::string s = std::to_string(i);
            y += lorentzian(x, fit.value("center_" + s), fit.value("fwhm_" + s), fit.value("area_" + s));
        }
        return y;
    }
    case FitFamily::Lifetime:
        return fit.value("I0") + fit.value("A") * std::exp(-x / std::abs(fit.value("tau")));
    case FitFamily::Saturation: {
        double y = fit.value("I_inf") * x / (fit.value("P_sat") + x);
        if (fit.settings.count("linear_background") && fit.settings.at("linear_background") != 0.0) {
            y += fit.value("b") * x;
        }
        return y;
    }
    case FitFamily::Polarization: {
        const double s = std::sin((x + fit.value("phi")) * M_PI / 180.0);
        return fit.value("alpha") + fit.value("beta") * s * s;
    }
    }
    return 0.0;
}

} // namespace photodyn
