#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/format.hpp"

namespace fs = std::filesystem;

namespace photodyn::cli {

namespace {

std::string report_stem(const fs::path& path) {
    std::string s = path.filename().string();
    for (const char* suffix : {".fit.json", ".json"}) {
        const std::string suf = suffix;
        if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
            s.erase(s.size() - suf.size());
            break;
        }
    }
    return s;
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return format_double(v);
}

struct Curve {
    int group = 0;
    std::vector<double> x, y;
};

// Model sampled at `points` abscissae spanning each group's data.
std::vector<Curve> sample_curves(const FitResult& fit, int points) {
    std::map<int, std::pair<double, double>> range;
    for (const auto& d : fit.data) {
        auto [it, fresh] = range.try_emplace(d.group, d.x, d.x);
        if (!fresh) {
            it->second.first = std::min(it->second.first, d.x);
            it->second.second = std::max(it->second.second, d.x);
        }
    }
    std::vector<Curve> out;
    for (const auto& [g, r] : range) {
        Curve c;
        c.group = g;
        for (int i = 0; i < points; ++i) {
            const double x = points == 1 ? r.first : r.first + (r.second - r.first) * i / (points - 1);
            c.x.push_back(x);
            c.y.push_back(evaluate_fit(fit, x, g));
        }
        out.push_back(std::move(c));
    }
    return out;
}

void write_curve_csv(const fs::path& path, const FitResult& fit, const std::vector<Curve>& curves) {
    std::ostringstream o;
    o << "# kind: fit_curve\n# schema_version: " << kSchemaVersion << "\n# family: " << to_string(fit.family) << '\n';
    o << "series,group,x,y,sigma\n";
    for (const auto& d : fit.data) o << "data," << d.group << ',' << num(d.x) << ',' << num(d.y) << ',' << num(d.sigma) << '\n';
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.x.size(); ++i) o << "model," << c.group << ',' << num(c.x[i]) << ',' << num(c.y[i]) << ",\n";
    }
    write_file_atomic(path, o.str());
}

const char* axis_label(FitFamily f, bool y) {
    switch (f) {
    case FitFamily::G2Single:
    case FitFamily::G2Global:
        return y ? "g2" : "delay (ns)";
    case FitFamily::Spectrum:
        return y ? "counts" : "wavelength (nm)";
    case FitFamily::Lifetime:
        return y ? "counts" : "time (ns)";
    case FitFamily::Saturation:
        return y ? "rate (Hz)" : "power (mW)";
    case FitFamily::Polarization:
        return y ? "rate (Hz)" : "angle (deg)";
    }
    return "";
}

void write_svg(const fs::path& path, const std::string& title, const FitResult& fit, const std::vector<Curve>& curves) {
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    const double W = 720, H = 440, L = 70, R = 20, T = 30, B = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto grow = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    };
    for (const auto& d : fit.data) grow(d.x, d.y);
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.x.size(); ++i) grow(c.x[i], c.y[i]);
    }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
        o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << num(std::round(xv * 1000) / 1000) << "</text>\n";
        o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(std::round(yv * 1000) / 1000) << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << axis_label(fit.family, false) << "</text>\n";
    o << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << axis_label(fit.family, true) << "</text>\n";
    // thin out dense data so the file stays small
    const std::size_t stride = std::max<std::size_t>(1, fit.data.size() / 3000);
    for (std::size_t i = 0; i < fit.data.size(); i += stride) {
        const auto& d = fit.data[i];
        if (!std::isfinite(d.y)) continue;
        o << "<circle cx=\"" << px(d.x) << "\" cy=\"" << py(d.y) << "\" r=\"1.5\" fill=\"" << colours[d.group % 6]
          << "\" fill-opacity=\"0.5\"/>\n";
    }
    for (const auto& c : curves) {
        o << "<polyline fill=\"none\" stroke=\"" << colours[c.group % 6] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            if (std::isfinite(c.y[i])) o << px(c.x[i]) << ',' << py(c.y[i]) << ' ';
        }
        o << "\"/>\n";
    }
    o << "</svg>\n";
    write_file_atomic(path, o.str());
}

struct Row {
    std::string report;
    const FitResult* fit;
    std::map<std::string, double> values;
};

std::map<std::string, double> flatten(const FitResult& f) {
    std::map<std::string, double> v;
    for (const auto& p : f.parameters) {
        v[p.name] = p.value;
        v[p.name + "_err"] = p.standard_error;
    }
    for (const auto& [k, d] : f.derived) v[k] = d;
    return v;
}

// Column order: parameters as they appear, then derived keys.
std::vector<std::string> columns_of(const std::vector<Row>& rows) {
    std::vector<std::string> cols;
    std::set<std::string> seen;
    auto add = [&](const std::string& c) {
        if (seen.insert(c).second) cols.push_back(c);
    };
    for (const auto& r : rows) {
        for (const auto& p : r.fit->parameters) {
            add(p.name);
            add(p.name + "_err");
        }
    }
    for (const auto& r : rows) {
        for (const auto& [k, d] : r.fit->derived) add(k);
    }
    return cols;
}

void write_summary(const fs::path& path, const std::vector<Row>& rows) {
    const auto cols = columns_of(rows);
    std::ostringstream o;
    o << "# kind: fit_summary\n# schema_version: " << kSchemaVersion << '\n';
    o << "report,family,reduced_chi2,n_points,converged,flags";
    for (const auto& c : cols) o << ',' << c;
    o << '\n';
    for (const auto& r : rows) {
        std::string flags;
        for (const auto& f : r.fit->flags) flags += (flags.empty() ? "" : ";") + f;
        o << r.report << ',' << to_string(r.fit->family) << ',' << num(r.fit->reduced_chi2) << ',' << r.fit->n_points
          << ',' << (r.fit->convergence.converged ? "true" : "false") << ',' << flags;
        for (const auto& c : cols) {
            o << ',';
            if (auto it = r.values.find(c); it != r.values.end()) o << num(it->second);
        }
        o << '\n';
    }
    write_file_atomic(path, o.str());
}

struct Stats {
    std::size_t n = 0;
    double mean = 0, sd = 0, sem = 0, lo = 0, hi = 0;
};

Stats stats_of(const std::vector<double>& v) {
    Stats s;
    s.n = v.size();
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(s.n);
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
    s.sem = s.sd / std::sqrt(static_cast<double>(s.n));
    s.lo = *std::min_element(v.begin(), v.end());
    s.hi = *std::max_element(v.begin(), v.end());
    return s;
}

// Ensemble statistics per family over every non-error column; spectrum
// families also get histograms of the ZPL centre, width and S.
std::vector<fs::path> write_ensemble(const fs::path& dir, const std::vector<Row>& rows) {
    std::map<FitFamily, std::vector<const Row*>> by_family;
    for (const auto& r : rows) by_family[r.fit->family].push_back(&r);
    std::ostringstream o, h;
    bool any = false, any_hist = false;
    o << "# kind: ensemble_summary\n# schema_version: " << kSchemaVersion << '\n';
    o << "family,quantity,n,mean,std,sem,min,max\n";
    h << "# kind: ensemble_histogram\n# schema_version: " << kSchemaVersion << '\n';
    h << "family,quantity,bin_lo,bin_hi,count\n";
    for (const auto& [family, members] : by_family) {
        if (members.size() < 2) continue;
        any = true;
        std::vector<Row> subset;
        for (const Row* r : members) subset.push_back(*r);
        for (const auto& c : columns_of(subset)) {
            if (c.size() > 4 && c.compare(c.size() - 4, 4, "_err") == 0) continue;
            std::vector<double> v;
            for (const Row* r : members) {
                if (auto it = r->values.find(c); it != r->values.end() && std::isfinite(it->second)) v.push_back(it->second);
            }
            if (v.empty()) continue;
            const Stats s = stats_of(v);
            o << to_string(family) << ',' << c << ',' << s.n << ',' << num(s.mean) << ',' << num(s.sd) << ','
              << num(s.sem) << ',' << num(s.lo) << ',' << num(s.hi) << '\n';
            if (family == FitFamily::Spectrum && (c == "zpl_center_nm" || c == "zpl_fwhm_nm" || c == "S")) {
                any_hist = true;
                const int bins = static_cast<int>(std::ceil(std::log2(static_cast<double>(v.size())))) + 1;
                const double width = s.hi > s.lo ? (s.hi - s.lo) / bins : 1.0;
                std::vector<int> count(static_cast<std::size_t>(bins), 0);
                for (double x : v) ++count[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>((x - s.lo) / width)))];
                for (int b = 0; b < bins; ++b) {
                    h << to_string(family) << ',' << c << ',' << num(s.lo + b * width) << ',' << num(s.lo + (b + 1) * width)
                      << ',' << count[static_cast<std::size_t>(b)] << '\n';
                }
            }
        }
    }
    std::vector<fs::path> out;
    if (any) {
        write_file_atomic(dir / "ensemble.csv", o.str());
        out.push_back(dir / "ensemble.csv");
    }
    if (any_hist) {
        write_file_atomic(dir / "ensemble_histograms.csv", h.str());
        out.push_back(dir / "ensemble_histograms.csv");
    }
    return out;
}

} // namespace

int run_report(const ReportArgs& a, const std::map<std::string, std::string>& flags) {
    if (a.in.empty()) throw UsageError("--in needs at least one fit report");
    if (a.points < 2) throw UsageError("--points must be >= 2");
    std::vector<InputProvenance> inputs;
    std::vector<FitReport> reports;
    for (const auto& p : a.in) {
        inputs.push_back(provenance(p));
        if (inputs.back().kind != to_string(DatasetKind::FitReport)) throw DataError(p + " is not a fit report");
        reports.push_back(read_fit_report(p));
    }
    const fs::path dir = output_dir(a.out);
    std::vector<fs::path> outputs;
    std::vector<Row> rows;
    std::set<std::string> stems;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::string stem = report_stem(a.in[i]);
        for (int k = 2; !stems.insert(stem).second; ++k) stem = report_stem(a.in[i]) + "_" + std::to_string(k);
        const FitResult& fit = reports[i].fit;
        const auto curves = sample_curves(fit, a.points);
        write_curve_csv(dir / (stem + ".curve.csv"), fit, curves);
        outputs.push_back(dir / (stem + ".curve.csv"));
        if (a.svg) {
            write_svg(dir / (stem + ".svg"), stem + " (" + to_string(fit.family) + ")", fit, curves);
            outputs.push_back(dir / (stem + ".svg"));
        }
        rows.push_back({stem, &fit, flatten(fit)});
    }
    write_summary(dir / "summary.csv", rows);
    outputs.push_back(dir / "summary.csv");
    for (auto& p : write_ensemble(dir, rows)) outputs.push_back(p);
    write_manifest(dir, {"report", flags, inputs, outputs, std::nullopt});
    std::cout << "report: " << reports.size() << " fit(s) summarised in " << (dir / "summary.csv").string() << '\n';
    return kOk;
}

} // namespace photodyn::cli
