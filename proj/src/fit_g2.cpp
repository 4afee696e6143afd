#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "fit_detail.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/fits.hpp"

namespace photodyn {

namespace {

constexpr double kMinTau = 1e-3;
constexpr double kMaxTau = 1e7;

// Mean of exp(-|t|/tau) over one bin and its derivative in tau.
struct ExpTerm {
    double value;
    double d_tau;
};

ExpTerm exp_term(double tau, double center, double width, bool bin_average) {
    if (!bin_average || width <= 0.0) {
        const double t = std::abs(center);
        const double e = std::exp(-t / tau);
        return {e, t / (tau * tau) * e};
    }
    auto piece = [tau](double x, double y) -> ExpTerm {
        const double ex = std::exp(-x / tau);
        const double ey = std::exp(-y / tau);
        return {tau * (ex - ey), (ex - ey) + (x * ex - y * ey) / tau};
    };
    const double lo = center - 0.5 * width;
    const double hi = center + 0.5 * width;
    ExpTerm sum{0.0, 0.0};
    auto add = [&sum](ExpTerm t) {
        sum.value += t.value;
        sum.d_tau += t.d_tau;
    };
    if (lo >= 0.0) {
        add(piece(lo, hi));
    } else if (hi <= 0.0) {
        add(piece(-hi, -lo));
    } else {
        add(piece(0.0, -lo));
        add(piece(0.0, hi));
    }
    return {sum.value / width, sum.d_tau / width};
}

struct G2Data {
    std::vector<double> x, y, inv_sigma;
    double width = 0.0;
    bool bin_average = true;
    double norm = 0.0; // counts per unit g2, 0 when unknown
};

// Second-pass weights from the Poisson variance of the fitted curve. Weights
// taken from the observed counts pull the fit low by about one count per bin.
template <class Model>
void reweight(G2Data& d, Model&& model) {
    if (!(d.norm > 0.0) || !std::isfinite(d.norm)) return;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const double expected = std::max(d.norm * model(d.x[i]), 1.0);
        d.inv_sigma[i] = d.norm / std::sqrt(expected);
    }
}

G2Data g2_data(const CorrelationHistogram& hist, bool bin_average) {
    if (hist.normalization == Normalization::Raw) throw DataError("g2 fits need a normalised histogram");
    if (hist.size() == 0) throw DataError("histogram is empty");
    G2Data d;
    d.width = hist.bin_width_ns;
    d.bin_average = bin_average;
    d.norm = hist.norm_factor;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        if (!(hist.sigma[i] > 0.0)) continue;
        d.x.push_back(hist.center_ns(i));
        d.y.push_back(hist.normalized[i]);
        d.inv_sigma.push_back(1.0 / hist.sigma[i]);
    }
    return d;
}

std::vector<DataPoint> data_points(const G2Data& d, int group) {
    std::vector<DataPoint> pts;
    pts.reserve(d.x.size());
    for (std::size_t i = 0; i < d.x.size(); ++i) pts.push_back({d.x[i], d.y[i], 1.0 / d.inv_sigma[i], group});
    return pts;
}

LeastSquaresProblem single_problem(const G2Data& d) {
    LeastSquaresProblem p;
    p.n_params = 3;
    p.n_residuals = d.x.size();
    p.lower = {0.0, std::log(kMinTau), std::log(kMinTau)};
    p.upper = {1e3, std::log(kMaxTau), std::log(kMaxTau)};
    p.residuals = [&d](std::span<const double> th, std::span<double> r) {
        const double a = th[0], t1 = std::exp(th[1]), t2 = std::exp(th[2]);
        for (std::size_t i = 0; i < d.x.size(); ++i) {
            const double e1 = exp_term(t1, d.x[i], d.width, d.bin_average).value;
            const double e2 = exp_term(t2, d.x[i], d.width, d.bin_average).value;
            r[i] = (d.y[i] - (1.0 - (1.0 + a) * e1 + a * e2)) * d.inv_sigma[i];
        }
    };
    p.jacobian = [&d](std::span<const double> th, Eigen::Ref<Eigen::MatrixXd> J) {
        const double a = th[0], t1 = std::exp(th[1]), t2 = std::exp(th[2]);
        for (std::size_t i = 0; i < d.x.size(); ++i) {
            const auto e1 = exp_term(t1, d.x[i], d.width, d.bin_average);
            const auto e2 = exp_term(t2, d.x[i], d.width, d.bin_average);
            const auto row = static_cast<Eigen::Index>(i);
            const double s = -d.inv_sigma[i];
            J(row, 0) = s * (e2.value - e1.value);
            J(row, 1) = s * (-(1.0 + a) * e1.d_tau * t1);
            J(row, 2) = s * (a * e2.d_tau * t2);
        }
    };
    return p;
}

// Rough (a, tau1, tau2) read off a normalised curve.
std::array<double, 3> single_guess(const CorrelationHistogram& hist) {
    const auto M = static_cast<std::size_t>(hist.half_bins);
    const double w = hist.bin_width_ns;
    std::vector<double> s(M + 1);
    for (std::size_t k = 0; k <= M; ++k) s[k] = 0.5 * (hist.normalized[M + k] + hist.normalized[M - k]);
    std::vector<double> sm(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        const std::size_t lo = k >= 2 ? k - 2 : 0;
        const std::size_t hi = std::min(s.size() - 1, k + 2);
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += s[j];
        sm[k] = acc / static_cast<double>(hi - lo + 1);
    }
    const auto peak_it = std::max_element(sm.begin(), sm.end());
    const double peak = *peak_it;
    const auto k_peak = static_cast<std::size_t>(peak_it - sm.begin());
    const double a0 = std::max(peak - 1.0, 0.0) * 1.5 + 0.05;

    double t_half = w;
    for (std::size_t k = 0; k < sm.size(); ++k) {
        if (s[k] >= 0.5) {
            t_half = std::max(static_cast<double>(k) * w, 0.5 * w);
            break;
        }
    }
    const double tau1 = std::clamp(t_half / std::log((1.0 + a0) / (0.5 + a0)), 2.0 * kMinTau, 0.1 * kMaxTau);

    double tau2 = 20.0 * tau1;
    if (peak > 1.0) {
        const double target = 1.0 + (peak - 1.0) / std::exp(1.0);
        for (std::size_t k = k_peak; k < sm.size(); ++k) {
            if (sm[k] < target) {
                tau2 = std::max(static_cast<double>(k - k_peak) * w + 0.5 * static_cast<double>(k_peak) * w, 2.0 * tau1);
                break;
            }
        }
    }
    return {a0, tau1, std::clamp(tau2, 2.0 * tau1, 0.1 * kMaxTau)};
}

struct PerPower {
    double a, tau1, tau2;
};

PerPower model_at(const std::array<double, 6>& v, double power, double* k31_out = nullptr) {
    const EmitterModel m{"", v[0], v[1], v[2], v[3], v[4], v[5]};
    const auto rates = rates_at_power(m, power);
    const auto tc = time_constants(rates);
    const auto amp = bunching_amplitude(rates, tc.tau1, tc.tau2);
    if (k31_out) *k31_out = rates.k31;
    return {amp.value, tc.tau1, tc.tau2};
}

std::array<double, 6> to_array(const EmitterModel& m) {
    return {m.pump_efficiency, m.k21, m.k23, m.deshelve_high, m.deshelve_sat, m.deshelve_low};
}

} // namespace

FitResult fit_g2_single(const CorrelationHistogram& hist, const G2FitOptions& options) {
    G2Data data = g2_data(hist, options.bin_average);
    if (data.x.size() <= 3) throw DataError("not enough bins for a g2 fit");
    const LeastSquaresProblem problem = single_problem(data);

    std::vector<std::vector<double>> starts;
    if (options.initial) {
        starts.push_back({options.initial->a, std::log(options.initial->tau1), std::log(options.initial->tau2)});
    } else {
        const auto g = single_guess(hist);
        for (double m1 : {0.5, 1.0, 2.0}) {
            for (double m2 : {0.3, 1.0, 3.0}) {
                const double t1 = std::clamp(g[1] * m1, 2.0 * kMinTau, 0.1 * kMaxTau);
                const double t2 = std::clamp(std::max(g[2] * m2, 1.5 * t1), 2.0 * kMinTau, 0.1 * kMaxTau);
                starts.push_back({g[0], std::log(t1), std::log(t2)});
            }
        }
    }

    SolverResult best;
    bool have = false;
    for (const auto& s : starts) {
        SolverResult sol = solve_least_squares(problem, s);
        if (!have || sol.chi2 < best.chi2) {
            best = std::move(sol);
            have = true;
        }
    }
    if (options.model_variance && data.norm > 0.0) {
        const double a = best.theta[0], t1 = std::exp(best.theta[1]), t2 = std::exp(best.theta[2]);
        reweight(data, [&](double x) {
            return 1.0 - (1.0 + a) * exp_term(t1, x, data.width, data.bin_average).value +
                   a * exp_term(t2, x, data.width, data.bin_average).value;
        });
        best = solve_least_squares(problem, best.theta);
    }

    FitResult r = detail::make_result(FitFamily::G2Single, best,
                                      {{"a", "", false, 0.0}, {"tau1", "ns", true, 1.0}, {"tau2", "ns", true, 1.0}});
    r.data = data_points(data, 0);
    r.settings["bin_width_ns"] = hist.bin_width_ns;
    r.settings["bin_average"] = options.bin_average ? 1.0 : 0.0;
    if (best.theta[0] <= 1e-9) {
        r.flags.emplace_back("bunching_absent");
        auto& t2 = r.parameters[2];
        if (t2.identifiable) {
            t2.identifiable = false;
            r.flags.emplace_back("unidentifiable:tau2");
        }
    }
    r.derived["g2_zero"] = g2_law(r.value("a"), r.value("tau1"), r.value("tau2"), 0.0);
    r.derived["plateau"] = 1.0;
    return r;
}

void PowerSeries::validate() const {
    if (entries.size() < 3) throw DataError("a global fit needs at least 3 powers");
    std::set<double> seen;
    for (const auto& e : entries) {
        if (!(e.power_mw > 0.0) || !std::isfinite(e.power_mw)) throw DataError("powers must be > 0");
        if (!seen.insert(e.power_mw).second) throw DataError("powers must be distinct");
        if (e.histogram.normalization == Normalization::Raw) throw DataError("histograms must be normalised");
        if (e.histogram.normalization != entries.front().histogram.normalization) {
            throw DataError("histograms use inconsistent normalisation modes");
        }
    }
}

EmitterModel global_fit_initial_guess(const PowerSeries& series) {
    series.validate();
    std::vector<PowerSeriesEntry> sorted = series.entries;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.power_mw < b.power_mw; });

    std::vector<double> P, a, t1, t2;
    for (const auto& e : sorted) {
        const FitResult f = fit_g2_single(e.histogram);
        P.push_back(e.power_mw);
        a.push_back(f.value("a"));
        t1.push_back(f.value("tau1"));
        t2.push_back(f.value("tau2"));
    }
    const std::size_t n = P.size();
    const std::size_t mid = n / 2;

    // 1/tau1 against P: slope K, intercept at P = 0
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = 1.0 / t1[i];
        sx += P[i];
        sy += y;
        sxx += P[i] * P[i];
        sxy += P[i] * y;
    }
    const double dn = static_cast<double>(n);
    double K = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    double intercept = (sy - K * sx) / dn;
    if (!(intercept > 0.0)) intercept = 1.0 / t1.front();
    if (!(K > 0.0)) K = 0.1 * intercept / P.back();

    const double C1 = 1.0 / t2.front();
    const double A1 = std::max(1.0 / t2.back() - C1, 0.1 * C1);
    const double B1 = P[mid];

    // invert the amplitude law for k31 at the mid power, then close A = 1/tau1 + 1/tau2
    const double k31_mid = 1.0 / (t2[mid] + std::max(a[mid], 0.0) * (t2[mid] - t1[mid]));
    double k23 = 1.0 / t1[mid] + 1.0 / t2[mid] - K * P[mid] - intercept - k31_mid;
    k23 = std::max(k23, 0.0);
    if (k23 < 1e-3 * intercept) k23 = std::max(k31_mid * std::max(a[mid], 0.05), 1e-3 * intercept);
    const double k21 = std::max(intercept - k23, 0.5 * intercept);

    return {"initial", K, k21, k23, A1, B1, C1};
}

FitResult fit_g2_global(const PowerSeries& series, const std::optional<EmitterModel>& initial) {
    series.validate();
    struct Curve {
        double power;
        G2Data data;
    };
    std::vector<Curve> curves;
    std::size_t total = 0;
    for (const auto& e : series.entries) {
        curves.push_back({e.power_mw, g2_data(e.histogram, true)});
        total += curves.back().data.x.size();
    }

    // Six log-rates, then one free plateau per curve: a tail-normalised
    // histogram carries a common scale error (noise plus leftover bunching
    // inside the tail window) that the rates would otherwise soak up.
    const std::size_t n_curves = curves.size();
    LeastSquaresProblem p;
    p.n_params = 6 + n_curves;
    p.n_residuals = total;
    p.lower.assign(p.n_params, -INFINITY);
    p.upper.assign(p.n_params, INFINITY);
    for (std::size_t g = 0; g < n_curves; ++g) {
        p.lower[6 + g] = 0.5;
        p.upper[6 + g] = 2.0;
    }
    p.residuals = [&curves](std::span<const double> th, std::span<double> r) {
        std::array<double, 6> v{};
        for (std::size_t j = 0; j < 6; ++j) v[j] = std::exp(th[j]);
        std::size_t off = 0;
        for (std::size_t g = 0; g < curves.size(); ++g) {
            const auto& c = curves[g];
            const double plateau = th[6 + g];
            PerPower pp{};
            bool ok = true;
            try {
                pp = model_at(v, c.power);
            } catch (const Error&) {
                ok = false;
            }
            const auto& d = c.data;
            for (std::size_t i = 0; i < d.x.size(); ++i) {
                r[off + i] = ok ? (d.y[i] - plateau * g2_law_bin_average(pp.a, pp.tau1, pp.tau2, d.x[i], d.width)) *
                                      d.inv_sigma[i]
                                : 1e10;
            }
            off += d.x.size();
        }
    };

    std::vector<EmitterModel> starts;
    if (initial) {
        starts.push_back(*initial);
    } else {
        const EmitterModel guess = global_fit_initial_guess(series);
        starts.push_back(guess);
        // the saturation power is the least constrained start value; also try the ends of the power range
        std::vector<double> powers;
        for (const auto& e : series.entries) powers.push_back(e.power_mw);
        for (double b : {*std::min_element(powers.begin(), powers.end()), *std::max_element(powers.begin(), powers.end())}) {
            EmitterModel alt = guess;
            alt.deshelve_sat = b;
            starts.push_back(alt);
        }
    }

    SolverResult best;
    bool have = false;
    for (const auto& m : starts) {
        const auto v = to_array(m);
        std::vector<double> th(p.n_params, 1.0);
        for (std::size_t j = 0; j < 6; ++j) th[j] = std::log(std::max(v[j], 1e-12));
        SolverResult sol;
        try {
            sol = solve_least_squares(p, th);
        } catch (const DomainError&) {
            continue;
        }
        if (!have || sol.chi2 < best.chi2) {
            best = std::move(sol);
            have = true;
        }
    }
    if (!have) throw DataError("no valid starting point for the global fit");
    {
        std::array<double, 6> v{};
        for (std::size_t j = 0; j < 6; ++j) v[j] = std::exp(best.theta[j]);
        bool ok = true;
        for (std::size_t g = 0; g < n_curves; ++g) {
            auto& c = curves[g];
            const double plateau = best.theta[6 + g];
            try {
                const PerPower pp = model_at(v, c.power);
                reweight(c.data, [&](double x) {
                    return plateau * g2_law_bin_average(pp.a, pp.tau1, pp.tau2, x, c.data.width);
                });
            } catch (const Error&) {
                ok = false;
            }
        }
        if (ok) best = solve_least_squares(p, best.theta);
    }

    std::vector<detail::ParamSpec> specs{{"K", "GHz/mW", true, 1.0}, {"k21", "GHz", true, 1.0},
                                         {"k23", "GHz", true, 1.0},   {"A1", "GHz", true, 1.0},
                                         {"B1", "mW", true, 1.0},     {"C1", "GHz", true, 1.0}};
    for (std::size_t g = 0; g < n_curves; ++g) specs.push_back({"plateau[" + std::to_string(g) + "]", "", false, 0.0});
    FitResult r = detail::make_result(FitFamily::G2Global, best, specs);

    std::array<double, 6> v{};
    for (std::size_t j = 0; j < 6; ++j) v[j] = std::exp(best.theta[j]);
    const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
    for (std::size_t g = 0; g < curves.size(); ++g) {
        const double P = curves[g].power;
        const std::string idx = "[" + std::to_string(g) + "]";
        r.settings["power_mW" + idx] = P;
        double k31 = 0.0;
        const PerPower pp = model_at(v, P, &k31);
        r.derived["a" + idx] = pp.a;
        r.derived["tau1_ns" + idx] = pp.tau1;
        r.derived["tau2_ns" + idx] = pp.tau2;
        r.derived["ratio_k23_k31" + idx] = v[2] / k31;
        // propagate the covariance of the log-parameters into (a, tau1, tau2)
        std::array<std::vector<double>, 3> grads;
        for (auto& gv : grads) gv.assign(6, 0.0);
        for (std::size_t j = 0; j < 6; ++j) {
            const double h = 1e-6;
            auto hi = v, lo = v;
            hi[j] *= std::exp(h);
            lo[j] *= std::exp(-h);
            try {
                const PerPower ph = model_at(hi, P);
                const PerPower pl = model_at(lo, P);
                grads[0][j] = (ph.a - pl.a) / (2 * h);
                grads[1][j] = (ph.tau1 - pl.tau1) / (2 * h);
                grads[2][j] = (ph.tau2 - pl.tau2) / (2 * h);
            } catch (const Error&) {
                grads[0][j] = grads[1][j] = grads[2][j] = INFINITY;
            }
        }
        r.derived["a_err" + idx] = detail::propagate(best, all, grads[0]);
        r.derived["tau1_err" + idx] = detail::propagate(best, all, grads[1]);
        r.derived["tau2_err" + idx] = detail::propagate(best, all, grads[2]);
        for (auto& pt : data_points(curves[g].data, static_cast<int>(g))) r.data.push_back(pt);
    }
    r.settings["n_groups"] = static_cast<double>(curves.size());
    r.settings["bin_width_ns"] = series.entries.front().histogram.bin_width_ns;
    const EmitterModel fitted = emitter_model_from_fit(r);
    r.derived["zero_power_lifetime_ns"] = zero_power_lifetime(fitted);
    return r;
}

EmitterModel emitter_model_from_fit(const FitResult& fit) {
    if (fit.family != FitFamily::G2Global) throw DomainError("not a global g2 fit");
    return {"fitted", fit.value("K"), fit.value("k21"), fit.value("k23"),
            fit.value("A1"), fit.value("B1"), fit.value("C1")};
}

} // namespace photodyn
