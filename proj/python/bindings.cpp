#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "photodyn/correlator.hpp"
#include "photodyn/data_io.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/fits.hpp"
#include "photodyn/photon_sim.hpp"
#include "photodyn/rate_model.hpp"

namespace py = pybind11;
using namespace photodyn;

namespace {

using Doubles = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Doubles& a) {
    if (a.ndim() != 1) throw DataError("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

// Time tags cross the boundary as two arrays: timestamps (ps) and channels (0, 1, 2).
py::dict stream_to_dict(const TimeTagStream& s) {
    py::array_t<std::int64_t> t(static_cast<py::ssize_t>(s.events.size()));
    py::array_t<std::uint8_t> c(static_cast<py::ssize_t>(s.events.size()));
    std::int64_t* tp = t.mutable_data();
    std::uint8_t* cp = c.mutable_data();
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        tp[i] = s.events[i].timestamp_ps;
        cp[i] = static_cast<std::uint8_t>(s.events[i].channel);
    }
    py::dict d;
    d["timestamp_ps"] = t;
    d["channel"] = c;
    d["duration_ps"] = s.duration_ps;
    d["metadata"] = s.metadata;
    return d;
}

TimeTagStream stream_from_arrays(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t,
                                 const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& c,
                                 std::int64_t duration_ps) {
    if (t.ndim() != 1 || c.ndim() != 1 || t.size() != c.size())
        throw DataError("timestamps and channels must be 1-d arrays of equal length");
    TimeTagStream s;
    s.duration_ps = duration_ps;
    s.events.reserve(static_cast<std::size_t>(t.size()));
    for (py::ssize_t i = 0; i < t.size(); ++i) {
        const auto ch = c.data()[i];
        if (ch < 0 || ch > 2) throw DataError("channel must be 0, 1 or 2");
        s.events.push_back({t.data()[i], static_cast<Channel>(ch)});
    }
    return s;
}

py::dict fit_to_dict(const FitResult& f) {
    py::dict params, errors;
    py::list unidentifiable;
    for (const auto& p : f.parameters) {
        params[py::str(p.name)] = p.value;
        errors[py::str(p.name)] = p.standard_error;
        if (!p.identifiable) unidentifiable.append(p.name);
    }
    py::dict d;
    d["family"] = to_string(f.family);
    d["params"] = params;
    d["errors"] = errors;
    d["unidentifiable"] = unidentifiable;
    d["derived"] = f.derived;
    d["reduced_chi2"] = f.reduced_chi2;
    d["n_points"] = f.n_points;
    d["converged"] = f.convergence.converged;
    d["reason"] = f.convergence.reason;
    d["flags"] = f.flags;
    return d;
}

Normalization parse_normalization(const std::string& name) {
    if (name == "tail") return Normalization::TailPlateau;
    if (name == "rate") return Normalization::RateProduct;
    if (name == "raw") return Normalization::Raw;
    throw ConfigError("normalization must be tail, rate or raw");
}

} // namespace

PYBIND11_MODULE(_photodyn, m) {
    m.doc() = "Three-level emitter photodynamics: rate model, photon simulation, correlation and fits";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<OscillatoryRegimeError>(m, "OscillatoryRegimeError", base.ptr());
    py::register_exception<DegeneracyError>(m, "DegeneracyError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NormalizationError>(m, "NormalizationError", base.ptr());
    py::register_exception<StatisticsError>(m, "StatisticsError", base.ptr());
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());

    py::class_<RateCoefficients>(m, "RateCoefficients")
        .def(py::init<>())
        .def(py::init([](double k12, double k21, double k23, double k31) {
                 return RateCoefficients{k12, k21, k23, k31};
             }),
             py::arg("k12"), py::arg("k21"), py::arg("k23"), py::arg("k31"))
        .def_readwrite("k12", &RateCoefficients::k12)
        .def_readwrite("k21", &RateCoefficients::k21)
        .def_readwrite("k23", &RateCoefficients::k23)
        .def_readwrite("k31", &RateCoefficients::k31)
        .def("validate", &RateCoefficients::validate)
        .def("__repr__", [](const RateCoefficients& r) {
            return "RateCoefficients(k12=" + std::to_string(r.k12) + ", k21=" + std::to_string(r.k21) +
                   ", k23=" + std::to_string(r.k23) + ", k31=" + std::to_string(r.k31) + ")";
        });

    py::class_<EmitterModel>(m, "EmitterModel")
        .def(py::init<>())
        .def_readwrite("name", &EmitterModel::name)
        .def_readwrite("K", &EmitterModel::pump_efficiency)
        .def_readwrite("k21", &EmitterModel::k21)
        .def_readwrite("k23", &EmitterModel::k23)
        .def_readwrite("A1", &EmitterModel::deshelve_high)
        .def_readwrite("B1", &EmitterModel::deshelve_sat)
        .def_readwrite("C1", &EmitterModel::deshelve_low)
        .def("validate", &EmitterModel::validate)
        .def("to_json", &emitter_model_to_json)
        .def_static("from_json", &emitter_model_from_json)
        .def(py::self == py::self);

    m.def("gev1_model", &gev1_model, py::arg("K") = kReferencePumpEfficiency);
    m.def("gev2_model", &gev2_model, py::arg("K") = kReferencePumpEfficiency);

    m.def("rates_at_power", &rates_at_power, py::arg("model"), py::arg("power_mw"));
    m.def(
        "time_constants",
        [](const RateCoefficients& r) {
            const auto tc = time_constants(r);
            return py::make_tuple(tc.tau1, tc.tau2);
        },
        "(tau1, tau2) in ns");
    m.def("bunching_amplitude", [](const RateCoefficients& r) {
        const auto tc = time_constants(r);
        return bunching_amplitude(r, tc.tau1, tc.tau2).value;
    });
    m.def("g2_law", py::vectorize(&g2_law), py::arg("a"), py::arg("tau1"), py::arg("tau2"), py::arg("tau_ns"));
    m.def("steady_state", [](const RateCoefficients& r) {
        const auto s = steady_state(r);
        return py::make_tuple(s.n1, s.n2, s.n3, s.emission_rate);
    });
    m.def("zero_power_lifetime", &zero_power_lifetime);
    m.def("ratio_k23_k31", &ratio_k23_k31, py::arg("model"), py::arg("power_mw"));
    m.def("predicted_saturation_curve", [](const EmitterModel& model, const Doubles& powers) {
        return predicted_saturation_curve(model, to_vector(powers));
    });

    m.def(
        "simulate",
        [](const EmitterModel& model, double power_mw, double duration_ns, double efficiency, double background_hz,
           double splitter_ratio, std::uint64_t seed, std::optional<double> period_ns, double excitation_probability) {
            SimConfig cfg;
            cfg.model = model;
            cfg.power_mw = power_mw;
            cfg.duration_ns = duration_ns;
            cfg.detection_efficiency = efficiency;
            cfg.background_rate_ghz = background_hz * 1e-9;
            cfg.splitter_ratio = splitter_ratio;
            cfg.seed = seed;
            if (period_ns) cfg.mode = PulsedExcitation{*period_ns, excitation_probability};
            TimeTagStream s;
            {
                py::gil_scoped_release release;
                s = simulate(cfg);
            }
            return stream_to_dict(s);
        },
        py::arg("model"), py::arg("power_mw"), py::arg("duration_ns"), py::arg("efficiency") = 1.0,
        py::arg("background_hz") = 0.0, py::arg("splitter_ratio") = 0.5, py::arg("seed") = 0,
        py::arg("period_ns") = py::none(), py::arg("excitation_probability") = 1.0,
        "Time tags of one run; pulsed when period_ns is given.");

    m.def(
        "correlate",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& c, std::int64_t duration_ps,
           double bin_ns, double max_delay_ns, const std::string& normalization) {
            const auto s = stream_from_arrays(t, c, duration_ps);
            auto h = correlate(s, bin_ns, max_delay_ns);
            if (normalization != "raw") h = normalize(h, parse_normalization(normalization));
            std::vector<double> tau;
            for (std::size_t i = 0; i < h.size(); ++i) tau.push_back(h.center_ns(i));
            py::dict d;
            d["tau_ns"] = tau;
            d["counts"] = h.counts;
            d["g2"] = h.normalized;
            d["sigma"] = h.sigma;
            d["norm_factor"] = h.norm_factor;
            d["warnings"] = h.warnings;
            return d;
        },
        py::arg("timestamp_ps"), py::arg("channel"), py::arg("duration_ps"), py::arg("bin_ns") = 1.0,
        py::arg("max_delay_ns") = 500.0, py::arg("normalization") = "tail");

    m.def(
        "pulsed_g2_zero",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& c, std::int64_t duration_ps,
           double period_ns, int side_peaks) {
            const auto r = pulsed_g2_zero(stream_from_arrays(t, c, duration_ps), period_ns, side_peaks);
            return py::make_tuple(r.value, r.sigma);
        },
        py::arg("timestamp_ps"), py::arg("channel"), py::arg("duration_ps"), py::arg("period_ns"),
        py::arg("side_peaks") = 5, "(g2(0), sigma)");

    m.def(
        "fit_g2",
        [](const std::string& path) { return fit_to_dict(fit_g2_single(read_g2hist(path))); }, py::arg("g2hist_path"),
        "Single-power g2 fit of a g2hist file.");
    m.def(
        "fit_g2_global",
        [](const std::vector<std::string>& paths, const std::vector<double>& powers_mw) {
            if (paths.size() != powers_mw.size()) throw DataError("one power per histogram file");
            PowerSeries series;
            for (std::size_t i = 0; i < paths.size(); ++i) series.entries.push_back({powers_mw[i], read_g2hist(paths[i])});
            const auto f = fit_g2_global(series);
            return py::make_tuple(fit_to_dict(f), emitter_model_from_fit(f));
        },
        py::arg("g2hist_paths"), py::arg("powers_mw"), "(fit, emitter model)");
    m.def(
        "fit_spectrum",
        [](const Doubles& wl, const Doubles& counts, int n_psb) {
            return fit_to_dict(fit_spectrum(to_vector(wl), to_vector(counts), n_psb));
        },
        py::arg("wavelength_nm"), py::arg("counts"), py::arg("psb_peaks") = 1);
    m.def(
        "fit_saturation",
        [](const Doubles& p, const Doubles& rate, bool background) {
            return fit_to_dict(fit_saturation(to_vector(p), to_vector(rate), SaturationOptions{background}));
        },
        py::arg("power_mw"), py::arg("rate_hz"), py::arg("background") = false);
    m.def(
        "fit_polarization",
        [](const Doubles& angle, const Doubles& rate) {
            return fit_to_dict(fit_polarization(to_vector(angle), to_vector(rate)));
        },
        py::arg("angle_deg"), py::arg("rate_hz"));
    m.def(
        "fit_lifetime",
        [](const Doubles& t, const Doubles& counts) { return fit_to_dict(fit_lifetime(to_vector(t), to_vector(counts))); },
        py::arg("time_ns"), py::arg("counts"));

    m.def(
        "write_timetags",
        [](const std::filesystem::path& path, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& t,
           const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& c,
           std::int64_t duration_ps) { write_timetags(path, stream_from_arrays(t, c, duration_ps)); },
        py::arg("path"), py::arg("timestamp_ps"), py::arg("channel"), py::arg("duration_ps"));
    m.def(
        "read_timetags", [](const std::filesystem::path& path) { return stream_to_dict(read_timetags(path)); },
        py::arg("path"));
    m.def("write_emitter_model", &write_emitter_model, py::arg("path"), py::arg("model"));
    m.def("read_emitter_model", &read_emitter_model, py::arg("path"));
    m.def(
        "detect_kind", [](const std::filesystem::path& path) { return to_string(detect_kind(path)); }, py::arg("path"));
}
