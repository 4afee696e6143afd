#include <CLI11.hpp>
#include <iostream>

#include "cli.hpp"
#include "photodyn/errors.hpp"

using namespace photodyn;
using namespace photodyn::cli;

namespace {

// Every option of the chosen subcommand as given (defaults included), for the manifest.
std::map<std::string, std::string> flags_of(const CLI::App* sub) {
    std::map<std::string, std::string> out;
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt == sub->get_help_ptr() || opt->get_name().empty()) continue;
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
        } else {
            value = opt->get_default_str();
        }
        out[opt->get_name()] = value;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Photodynamics of single colour centres: simulate, correlate, fit and report"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Monte Carlo time tags from an emitter model");
    s->add_option("--model", sim.model, "Emitter model JSON, or gev1 / gev2")->capture_default_str();
    s->add_option("--power-mW", sim.power_mw, "Excitation power (mW)")->capture_default_str();
    s->add_option("--duration-s", sim.duration_s, "Simulated acquisition time (s)")->capture_default_str();
    s->add_option("--mode", sim.mode, "cw or pulsed")->check(CLI::IsMember({"cw", "pulsed"}))->capture_default_str();
    s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    s->add_option("--efficiency", sim.efficiency, "Overall detection efficiency in [0, 1]")->capture_default_str();
    s->add_option("--background-Hz", sim.background_hz, "Background count rate per detector (Hz)")->capture_default_str();
    s->add_option("--splitter-ratio", sim.splitter_ratio, "Probability a photon reaches detector 0")->capture_default_str();
    s->add_option("--period-ns", sim.period_ns, "Laser period in pulsed mode (ns)")->capture_default_str();
    s->add_option("--excitation-probability", sim.excitation_probability, "Pulse excitation probability")
        ->capture_default_str();
    s->add_option("--out", sim.out, "Output directory (default $PHOTODYN_OUT or .)");

    CorrelateArgs cor;
    auto* c = app.add_subcommand("correlate", "Histogram a time-tag file");
    c->add_option("--in", cor.in, "Time-tag CSV")->required();
    c->add_option("--mode", cor.mode, "g2, decay or pulsed-g2")
        ->check(CLI::IsMember({"g2", "decay", "pulsed-g2"}))
        ->capture_default_str();
    c->add_option("--bin-ns", cor.bin_ns, "Bin width (ns)")->capture_default_str();
    c->add_option("--max-delay-ns", cor.max_delay_ns, "Largest |delay| (ns); default 20 tau2 of the recorded model");
    c->add_option("--normalize", cor.normalize, "tail or rate")->check(CLI::IsMember({"tail", "rate"}))->capture_default_str();
    c->add_option("--period-ns", cor.period_ns, "Laser period (ns); default from the stream");
    c->add_option("--side-peaks", cor.side_peaks, "Side peaks per side for pulsed g2")->capture_default_str();
    c->add_option("--out", cor.out, "Output directory (default $PHOTODYN_OUT or .)");

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit one model family");
    f->add_option("--family", fit.family, "g2, g2-global, spectrum, lifetime, saturation or polarization")
        ->required()
        ->check(CLI::IsMember({"g2", "g2-global", "spectrum", "lifetime", "saturation", "polarization"}));
    f->add_option("--in", fit.in, "Input datasets")->required()->expected(1, -1);
    f->add_option("--power-mW", fit.powers_mw, "Power of each g2-global input (mW); default from file metadata")
        ->expected(1, -1);
    f->add_option("--init", fit.init, "Initial emitter model for g2-global");
    f->add_option("--psb-peaks", fit.psb_peaks, "Side-band Lorentzians in spectrum fits")->capture_default_str();
    f->add_flag("--background", fit.background, "Add a linear background term to saturation fits");
    f->add_option("--out", fit.out, "Output directory (default $PHOTODYN_OUT or .)");

    ReportArgs rep;
    auto* r = app.add_subcommand("report", "Curves and summary tables from fit reports");
    r->add_option("--in", rep.in, "Fit report JSON files")->required()->expected(1, -1);
    r->add_option("--points", rep.points, "Model samples per curve")->capture_default_str();
    r->add_flag("--svg", rep.svg, "Also render each curve as SVG");
    r->add_option("--out", rep.out, "Output directory (default $PHOTODYN_OUT or .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (s->parsed()) return run_simulate(sim, flags_of(s));
        if (c->parsed()) return run_correlate(cor, flags_of(c));
        if (f->parsed()) return run_fit(fit, flags_of(f));
        if (r->parsed()) return run_report(rep, flags_of(r));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}
