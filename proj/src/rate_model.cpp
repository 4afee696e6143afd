#include "photodyn/rate_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "photodyn/errors.hpp"

namespace photodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_power(double power_mw) {
    if (!std::isfinite(power_mw) || power_mw < 0.0) {
        throw DomainError("excitation power must be finite and >= 0, got " + std::to_string(power_mw));
    }
}

bool nonnegative_finite(double v) { return std::isfinite(v) && v >= 0.0; }

// Mean of exp(-|t|/tau) over [c - w/2, c + w/2].
double exp_bin_average(double tau, double center, double width) {
    if (std::isinf(tau)) return 1.0;
    const double lo = center - 0.5 * width;
    const double hi = center + 0.5 * width;
    // integral of exp(-|t|/tau) from x to y with 0 <= x <= y
    auto side = [tau](double x, double y) { return tau * (std::exp(-x / tau) - std::exp(-y / tau)); };
    double integral = 0.0;
    if (lo >= 0.0) {
        integral = side(lo, hi);
    } else if (hi <= 0.0) {
        integral = side(-hi, -lo);
    } else {
        integral = side(0.0, -lo) + side(0.0, hi);
    }
    return integral / width;
}

} // namespace

void RateCoefficients::validate() const {
    if (!nonnegative_finite(k12) || !nonnegative_finite(k21) || !nonnegative_finite(k23) ||
        !nonnegative_finite(k31)) {
        throw DomainError("rate coefficients must be finite and >= 0");
    }
    if (k21 <= 0.0) throw DomainError("k21 must be > 0: an emitter needs a radiative decay channel");
}

void EmitterModel::validate() const {
    for (double v : {pump_efficiency, k21, k23, deshelve_high, deshelve_sat, deshelve_low}) {
        if (!nonnegative_finite(v)) throw DomainError("emitter model parameters must be finite and >= 0");
    }
    if (deshelve_sat <= 0.0) throw DomainError("de-shelving saturation power B1 must be > 0");
    if (k21 <= 0.0) throw DomainError("k21 must be > 0");
}

EmitterModel gev1_model(double pump_efficiency) {
    return {"GeV1", pump_efficiency, 0.1014, 0.0065, 0.0051, 0.45, 0.0022};
}

EmitterModel gev2_model(double pump_efficiency) {
    return {"GeV2", pump_efficiency, 0.0458, 0.0052, 0.002, 1.42, 0.0007};
}

G2Parameters G2Parameters::make(double a, double tau1, double tau2) {
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw DomainError("g2 time constants must be > 0");
    if (tau1 > tau2) throw DomainError("g2 parameters require tau1 <= tau2");
    if (!(a >= 0.0)) throw DomainError("bunching amplitude must be >= 0");
    return {a, tau1, tau2};
}

G2Parameters G2Parameters::from_rates(const RateCoefficients& rates) {
    const TimeConstants tc = time_constants(rates);
    const BunchingAmplitude amp = bunching_amplitude(rates, tc.tau1, tc.tau2);
    return make(std::max(amp.value, 0.0), tc.tau1, tc.tau2);
}

double pump_rate(const EmitterModel& model, double power_mw) {
    require_power(power_mw);
    return model.pump_efficiency * power_mw;
}

double deshelving_rate(const EmitterModel& model, double power_mw) {
    require_power(power_mw);
    return model.deshelve_high * power_mw / (power_mw + model.deshelve_sat) + model.deshelve_low;
}

RateCoefficients rates_at_power(const EmitterModel& model, double power_mw) {
    model.validate();
    return {pump_rate(model, power_mw), model.k21, model.k23, deshelving_rate(model, power_mw)};
}

TimeConstants time_constants(const RateCoefficients& r) {
    r.validate();
    const double A = r.k12 + r.k21 + r.k23 + r.k31;
    const double B = r.k12 * r.k23 + r.k12 * r.k31 + r.k21 * r.k31 + r.k23 * r.k31;
    double disc = A * A - 4.0 * B;
    if (disc < 0.0) {
        if (disc < -1e-12 * A * A) {
            throw OscillatoryRegimeError("rate matrix has complex eigenvalues (A^2 - 4B < 0)");
        }
        disc = 0.0;
    }
    const double root = std::sqrt(disc);
    TimeConstants tc;
    tc.tau1 = 2.0 / (A + root);
    tc.tau2 = B > 0.0 ? (A + root) / (2.0 * B) : kInf;
    tc.shelving = r.k31 > 0.0 ? Shelving::Regular : Shelving::Permanent;
    return tc;
}

BunchingAmplitude bunching_amplitude(const RateCoefficients& rates, double tau1, double tau2) {
    if (rates.k31 <= 0.0) return {kInf, Shelving::Permanent};
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw DomainError("time constants must be > 0");
    if (std::abs(tau2 - tau1) <= 1e-12 * std::max(tau1, tau2)) {
        throw DegeneracyError("tau1 == tau2: bunching amplitude undefined");
    }
    return {(1.0 - tau2 * rates.k31) / (rates.k31 * (tau2 - tau1)), Shelving::Regular};
}

double g2_law(double a, double tau1, double tau2, double tau_ns) {
    const double t = std::abs(tau_ns);
    return 1.0 - (1.0 + a) * std::exp(-t / tau1) + a * std::exp(-t / tau2);
}

double g2_model(const G2Parameters& p, double tau_ns) { return g2_law(p.a, p.tau1, p.tau2, tau_ns); }

double g2_law_bin_average(double a, double tau1, double tau2, double center_ns, double width_ns) {
    if (!(width_ns > 0.0)) return g2_law(a, tau1, tau2, center_ns);
    return 1.0 - (1.0 + a) * exp_bin_average(tau1, center_ns, width_ns) +
           a * exp_bin_average(tau2, center_ns, width_ns);
}

SteadyState steady_state(const RateCoefficients& r) {
    r.validate();
    SteadyState s;
    if (r.k12 <= 0.0) return s;
    if (r.k31 <= 0.0 && r.k23 > 0.0) {
        s.n1 = 0.0;
        s.n3 = 1.0;
        s.shelving = Shelving::Permanent;
        return s;
    }
    const double shelved_ratio = r.k23 > 0.0 ? r.k23 / r.k31 : 0.0;
    s.n2 = 1.0 / ((r.k21 + r.k23) / r.k12 + 1.0 + shelved_ratio);
    s.n3 = shelved_ratio * s.n2;
    s.n1 = 1.0 - s.n2 - s.n3;
    if (s.n1 < 0.0) s.n1 = 0.0;
    s.emission_rate = r.k21 * s.n2;
    return s;
}

std::vector<double> predicted_saturation_curve(const EmitterModel& model, std::span<const double> powers_mw) {
    std::vector<double> out;
    out.reserve(powers_mw.size());
    for (double p : powers_mw) out.push_back(steady_state(rates_at_power(model, p)).emission_rate);
    return out;
}

double zero_power_lifetime(const EmitterModel& model) {
    return time_constants(rates_at_power(model, 0.0)).tau1;
}

double ratio_k23_k31(const EmitterModel& model, double power_mw) {
    const double k31 = deshelving_rate(model, power_mw);
    if (k31 <= 0.0) return kInf;
    return model.k23 / k31;
}

double nonradiative_rate(const EmitterModel& model, double measured_lifetime_ns) {
    if (!(measured_lifetime_ns > 0.0)) throw DomainError("lifetime must be > 0");
    return 1.0 / measured_lifetime_ns - model.k21;
}

} // namespace photodyn
