#include <algorithm>
#include <cmath>
#include <numeric>

#include "fit_detail.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/fits.hpp"

namespace photodyn {

namespace {

std::vector<double> poisson_weights(std::span<const double> counts) {
    std::vector<double> w;
    w.reserve(counts.size());
    for (double c : counts) w.push_back(1.0 / std::max(std::abs(c), 1.0));
    return w;
}

std::vector<DataPoint> points(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
    std::vector<DataPoint> out;
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back({x[i], y[i], 1.0 / std::sqrt(w[i]), 0});
    return out;
}

void require_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("x and y columns differ in length");
}

// --- Lorentzian sums ------------------------------------------------------

void lorentzian_grad(double x, double c, double g, double A, double& dc, double& dg, double& dA) {
    const double h = 0.5 * g;
    const double dx = x - c;
    const double D = dx * dx + h * h;
    dA = h / (M_PI * D);
    dc = A * h / M_PI * 2.0 * dx / (D * D);
    dg = 0.5 * A / M_PI * (D - 2.0 * h * h) / (D * D);
}

CurveModel lorentzian_sum(int peaks) {
    CurveModel m;
    m.value = [peaks](double x, std::span<const double> th) {
        double y = th[0];
        for (int i = 0; i < peaks; ++i) y += lorentzian(x, th[1 + 3 * i], th[2 + 3 * i], th[3 + 3 * i]);
        return y;
    };
    m.gradient = [peaks](double x, std::span<const double> th, std::span<double> g) {
        g[0] = 1.0;
        for (int i = 0; i < peaks; ++i) {
            lorentzian_grad(x, th[1 + 3 * i], th[2 + 3 * i], th[3 + 3 * i], g[1 + 3 * i], g[2 + 3 * i], g[3 + 3 * i]);
        }
    };
    return m;
}

// Largest feature of y: position, height above zero, and full width at half height.
void find_peak(std::span<const double> x, const std::vector<double>& y, double& center, double& height, double& fwhm) {
    std::vector<double> sm(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t lo = i >= 1 ? i - 1 : 0;
        const std::size_t hi = std::min(y.size() - 1, i + 1);
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += y[j];
        sm[i] = acc / static_cast<double>(hi - lo + 1);
    }
    const auto it = std::max_element(sm.begin(), sm.end());
    const auto k = static_cast<std::size_t>(it - sm.begin());
    center = x[k];
    height = std::max(*it, 0.0);
    std::size_t l = k, r = k;
    while (l > 0 && sm[l] > 0.5 * height) --l;
    while (r + 1 < sm.size() && sm[r] > 0.5 * height) ++r;
    fwhm = std::max(x[r] - x[l], 2.0 * (x[1] - x[0]));
}

} // namespace

double lorentzian(double x, double center, double fwhm, double area) {
    const double h = 0.5 * fwhm;
    const double dx = x - center;
    return area * h / (M_PI * (dx * dx + h * h));
}

FitResult fit_spectrum(std::span<const double> wl, std::span<const double> counts, int n_psb_peaks) {
    require_same_length(wl, counts);
    if (n_psb_peaks < 0) throw DataError("number of side-band peaks must be >= 0");
    const int peaks = 1 + n_psb_peaks;
    if (wl.size() < static_cast<std::size_t>(3 * peaks + 2)) throw DataError("too few spectral points");
    for (std::size_t i = 1; i < wl.size(); ++i) {
        if (!(wl[i] > wl[i - 1])) throw DataError("wavelengths must be strictly increasing");
    }
    const auto w = poisson_weights(counts);
    const double span = wl.back() - wl.front();
    const double step = span / static_cast<double>(wl.size() - 1);

    std::vector<double> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    const double baseline0 = std::max(sorted[sorted.size() / 10], 0.0);

    std::vector<double> theta{baseline0};
    std::vector<double> lower{0.0}, upper{INFINITY};
    SolverResult sol;
    for (int k = 0; k < peaks; ++k) {
        // next peak goes where the current model leaves the most signal
        const CurveModel current = lorentzian_sum(k);
        std::vector<double> resid(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) resid[i] = counts[i] - current.value(wl[i], theta);
        double c = 0, hgt = 0, fw = 0;
        find_peak(wl, resid, c, hgt, fw);
        theta.insert(theta.end(), {c, fw, std::max(hgt, 1e-12) * M_PI * 0.5 * fw});
        lower.insert(lower.end(), {wl.front(), 0.5 * step, 0.0});
        upper.insert(upper.end(), {wl.back(), 2.0 * span, INFINITY});
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = std::clamp(theta[j], lower[j], upper[j]);
        sol = least_squares(lorentzian_sum(k + 1), theta, wl, counts, w, lower, upper);
        theta = sol.theta;
    }

    std::vector<detail::ParamSpec> specs{{"baseline", "counts", false, 0.0}};
    for (int i = 0; i < peaks; ++i) {
        const std::string s = std::to_string(i);
        specs.push_back({"center_" + s, "nm", false, 0.0});
        specs.push_back({"fwhm_" + s, "nm", false, 0.0});
        specs.push_back({"area_" + s, "counts*nm", false, 0.0});
    }
    FitResult r = detail::make_result(FitFamily::Spectrum, sol, specs);
    r.data = points(wl, counts, w);
    r.settings["n_peaks"] = peaks;

    // zero-phonon line: the tallest peak (height = 2 area / (pi fwhm))
    int zpl = 0;
    double best_height = -1.0;
    double total = 0.0;
    for (int i = 0; i < peaks; ++i) {
        const double A = sol.theta[3 + 3 * i];
        const double g = sol.theta[2 + 3 * i];
        total += A;
        const double height = 2.0 * A / (M_PI * g);
        if (height > best_height) {
            best_height = height;
            zpl = i;
        }
    }
    const double zpl_area = sol.theta[3 + 3 * zpl];
    r.derived["zpl_index"] = zpl;
    r.derived["zpl_center_nm"] = sol.theta[1 + 3 * zpl];
    r.derived["zpl_fwhm_nm"] = sol.theta[2 + 3 * zpl];
    r.derived["zpl_area"] = zpl_area;
    r.derived["total_area"] = total;
    r.derived["S"] = zpl_area > 0.0 && total > 0.0 ? -std::log(zpl_area / total) : INFINITY;
    std::vector<std::size_t> idx;
    std::vector<double> grad;
    for (int i = 0; i < peaks; ++i) {
        idx.push_back(static_cast<std::size_t>(3 + 3 * i));
        grad.push_back(1.0 / total - (i == zpl ? 1.0 / zpl_area : 0.0));
    }
    r.derived["S_err"] = detail::propagate(sol, idx, grad);

    // a peak with no area, or one the data cannot pin down, is as redundant as an overlapping one
    bool degenerate = false;
    for (int i = 0; i < peaks; ++i) {
        const auto& area = r.parameters[static_cast<std::size_t>(3 + 3 * i)];
        if (!(area.value > 1e-6 * total) || !area.identifiable) degenerate = true;
    }
    if (degenerate) r.flags.emplace_back("degenerate_peaks");
    for (int i = 0; i < peaks && !degenerate; ++i) {
        for (int j = i + 1; j < peaks; ++j) {
            const double gi = sol.theta[2 + 3 * i], gj = sol.theta[2 + 3 * j];
            if (std::abs(sol.theta[1 + 3 * i] - sol.theta[1 + 3 * j]) < 0.5 * std::min(gi, gj)) {
                r.flags.emplace_back("degenerate_peaks");
                i = j = peaks;
            }
        }
    }
    return r;
}

FitResult fit_lifetime(const DecayHistogram& hist) {
    std::vector<double> t, c;
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        t.push_back(hist.time_ns(i));
        c.push_back(static_cast<double>(hist.counts[i]));
    }
    return fit_lifetime(t, c);
}

FitResult fit_lifetime(std::span<const double> t, std::span<const double> counts) {
    require_same_length(t, counts);
    if (t.size() < 20) throw DataError("lifetime fits need at least 20 bins");
    const auto w = poisson_weights(counts);
    const std::size_t n = t.size();
    const double span = t.back() - t.front();
    const double width = span / static_cast<double>(n - 1);

    const std::size_t tail = std::max<std::size_t>(n / 10, 1);
    const double I0 = std::max(std::accumulate(counts.end() - static_cast<std::ptrdiff_t>(tail), counts.end(), 0.0) /
                                   static_cast<double>(tail),
                               0.0);
    const double head = *std::max_element(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, n)));
    const double A = std::max(head - I0, 0.0);
    double tau = span / 3.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[i] - I0 < A / std::exp(1.0)) {
            tau = std::max(t[i] - t.front(), width);
            break;
        }
    }

    CurveModel m;
    m.value = [](double x, std::span<const double> th) { return th[0] + th[1] * std::exp(-x / th[2]); };
    m.gradient = [](double x, std::span<const double> th, std::span<double> g) {
        const double e = std::exp(-x / th[2]);
        g[0] = 1.0;
        g[1] = e;
        g[2] = th[1] * e * x / (th[2] * th[2]);
    };
    const std::vector<double> lower{0.0, 0.0, 0.1 * width}, upper{INFINITY, INFINITY, 1e3 * span};
    std::vector<double> init{I0, A, std::clamp(tau, lower[2], upper[2])};
    const SolverResult sol = least_squares(m, init, t, counts, w, lower, upper);

    FitResult r = detail::make_result(FitFamily::Lifetime, sol,
                                      {{"I0", "counts", false, 0.0}, {"A", "counts", false, 0.0}, {"tau", "ns", false, 0.5}});
    r.data = points(t, counts, w);
    if (!(sol.theta[1] > 0.0)) {
        auto& tp = r.parameters[2];
        if (tp.identifiable) {
            tp.identifiable = false;
            r.flags.emplace_back("unidentifiable:tau");
        }
    }
    r.derived["lifetime_ns"] = sol.theta[2];
    r.derived["decay_rate_GHz"] = 1.0 / sol.theta[2];
    if (sol.reduced_chi2 > 2.0) r.flags.emplace_back("non_exponential");
    return r;
}

FitResult fit_saturation(std::span<const double> P, std::span<const double> I, const SaturationOptions& options) {
    require_same_length(P, I);
    if (P.size() < 4) throw DataError("saturation fits need at least 4 points");
    for (double p : P) {
        if (!(p >= 0.0)) throw DataError("powers must be >= 0");
    }
    const auto w = poisson_weights(I);

    // double-reciprocal regression: 1/I = 1/I_inf + (P_sat/I_inf) / P
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (P[i] <= 0.0 || I[i] <= 0.0) continue;
        const double x = 1.0 / P[i], y = 1.0 / I[i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1;
    }
    const double pmax = *std::max_element(P.begin(), P.end());
    const double imax = *std::max_element(I.begin(), I.end());
    double I_inf = 1.5 * imax, P_sat = 0.5 * pmax;
    if (n >= 2) {
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double icpt = (sy - slope * sx) / n;
        if (icpt > 0.0 && slope > 0.0) {
            I_inf = 1.0 / icpt;
            P_sat = slope * I_inf;
        }
    }
    I_inf = std::clamp(I_inf, 0.5 * imax, 1e3 * imax);
    P_sat = std::clamp(P_sat, 1e-3 * pmax, 1e3 * pmax);

    const bool bg = options.linear_background;
    CurveModel m;
    m.value = [bg](double x, std::span<const double> th) {
        return th[0] * x / (th[1] + x) + (bg ? th[2] * x : 0.0);
    };
    m.gradient = [bg](double x, std::span<const double> th, std::span<double> g) {
        const double d = th[1] + x;
        g[0] = x / d;
        g[1] = -th[0] * x / (d * d);
        if (bg) g[2] = x;
    };
    std::vector<double> init{I_inf, P_sat}, lower{0.0, 1e-9 * pmax}, upper{INFINITY, INFINITY};
    std::vector<detail::ParamSpec> specs{{"I_inf", "Hz", false, 0.5}, {"P_sat", "mW", false, 0.5}};
    if (bg) {
        init.push_back(0.0);
        lower.push_back(0.0);
        upper.push_back(INFINITY);
        specs.push_back({"b", "Hz/mW", false, 0.0});
    }
    const SolverResult sol = least_squares(m, init, P, I, w, lower, upper);

    FitResult r = detail::make_result(FitFamily::Saturation, sol, specs);
    r.data = points(P, I, w);
    r.settings["linear_background"] = bg ? 1.0 : 0.0;
    const double slope = sol.theta[0] / sol.theta[1];
    r.derived["I_inf_Hz"] = sol.theta[0];
    r.derived["P_sat_mW"] = sol.theta[1];
    r.derived["initial_slope_Hz_per_mW"] = slope;
    r.derived["initial_slope_err"] =
        detail::propagate(sol, {0, 1}, {1.0 / sol.theta[1], -sol.theta[0] / (sol.theta[1] * sol.theta[1])});
    if (pmax < sol.theta[1]) {
        r.flags.emplace_back("linear_regime");
        auto& ip = r.parameters[0];
        if (ip.identifiable) {
            ip.identifiable = false;
            r.flags.emplace_back("unidentifiable:I_inf");
        }
    }
    return r;
}

FitResult fit_polarization(std::span<const double> angle, std::span<const double> I) {
    require_same_length(angle, I);
    if (angle.size() < 8) throw DataError("polarization fits need at least 8 points");
    const auto [amin, amax] = std::minmax_element(angle.begin(), angle.end());
    if (*amax - *amin < 180.0 - 1e-9) throw DataError("polarizer angles must cover at least 180 degrees");
    const auto w = poisson_weights(I);

    // I = c0 + c1 cos(2 theta) + c2 sin(2 theta) is linear; solve it for the start point
    Eigen::MatrixXd X(static_cast<Eigen::Index>(angle.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(angle.size()));
    for (std::size_t i = 0; i < angle.size(); ++i) {
        const double th = angle[i] * M_PI / 180.0;
        const double sw = std::sqrt(w[i]);
        const auto row = static_cast<Eigen::Index>(i);
        X(row, 0) = sw;
        X(row, 1) = sw * std::cos(2 * th);
        X(row, 2) = sw * std::sin(2 * th);
        y[row] = sw * I[i];
    }
    const Eigen::Vector3d c = X.colPivHouseholderQr().solve(y);
    const double half_beta = std::hypot(c[1], c[2]);
    double phi0 = 0.5 * std::atan2(c[2], -c[1]) * 180.0 / M_PI;
    const double alpha0 = std::max(c[0] - half_beta, 0.0);

    CurveModel m;
    m.value = [](double x, std::span<const double> th) {
        const double s = std::sin((x + th[2]) * M_PI / 180.0);
        return th[0] + th[1] * s * s;
    };
    m.gradient = [](double x, std::span<const double> th, std::span<double> g) {
        const double arg = (x + th[2]) * M_PI / 180.0;
        const double s = std::sin(arg);
        g[0] = 1.0;
        g[1] = s * s;
        g[2] = th[1] * std::sin(2.0 * arg) * M_PI / 180.0;
    };
    const SolverResult sol = least_squares(m, {alpha0, 2.0 * half_beta, phi0}, angle, I, w, {0.0, 0.0, -360.0},
                                           {INFINITY, INFINITY, 360.0});

    FitResult r = detail::make_result(FitFamily::Polarization, sol,
                                      {{"alpha", "Hz", false, 0.0}, {"beta", "Hz", false, 0.0}, {"phi", "deg", false, 0.0}});
    r.data = points(angle, I, w);
    auto& phi = r.parameters[2];
    phi.value = std::fmod(phi.value, 180.0);
    if (phi.value < 0.0) phi.value += 180.0;
    const double a = sol.theta[0], b = sol.theta[1];
    if (!(b > 3.0 * r.parameters[1].standard_error) && phi.identifiable) {
        phi.identifiable = false;
        r.flags.emplace_back("unidentifiable:phi");
    }
    const double denom = 2.0 * a + b;
    r.derived["visibility"] = denom > 0.0 ? b / denom : 0.0;
    r.derived["visibility_err"] =
        denom > 0.0 ? detail::propagate(sol, {0, 1}, {-2.0 * b / (denom * denom), 2.0 * a / (denom * denom)}) : INFINITY;
    r.derived["I_max_Hz"] = a + b;
    r.derived["I_min_Hz"] = a;
    return r;
}

} // namespace photodyn
