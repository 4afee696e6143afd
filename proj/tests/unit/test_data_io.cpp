#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "photodyn/data_io.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/photon_sim.hpp"
#include "synthetic.hpp"

using namespace photodyn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("photodyn-io-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

double random_double(std::mt19937_64& rng) {
    // mixes magnitudes, signs and awkward mantissas
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<int> e(-30, 30);
    return u(rng) * std::pow(10.0, e(rng));
}

} // namespace

TEST_CASE("time tags round trip") {
    TempDir dir;
    SimConfig c;
    c.model = gev1_model();
    c.duration_ns = 5e5;
    c.detection_efficiency = 0.3;
    c.background_rate_ghz = 1e-3;
    c.seed = 42;
    c.mode = PulsedExcitation{100.0, 0.8};
    const auto s = simulate(c);
    REQUIRE(s.count(Channel::Sync) > 0);
    write_timetags(dir / "tags.csv", s);
    CHECK(read_timetags(dir / "tags.csv") == s);
    CHECK(detect_kind(dir / "tags.csv") == DatasetKind::TimeTags);

    // byte-identical when the same config is written twice
    write_timetags(dir / "again.csv", simulate(c));
    CHECK(read_file(dir / "tags.csv") == read_file(dir / "again.csv"));

    SUBCASE("streaming writer matches") {
        TimeTagWriter w(dir / "streamed.csv", s.duration_ps, s.metadata);
        w.write(std::span(s.events).first(s.events.size() / 2));
        w.write(std::span(s.events).subspan(s.events.size() / 2));
        w.close();
        CHECK(read_file(dir / "streamed.csv") == read_file(dir / "tags.csv"));
    }
}

TEST_CASE("time tag parse errors name the line") {
    TempDir dir;
    const std::string head = "# kind: timetags\n# schema_version: 1\n# duration_ps: 1000\nchannel,timestamp_ps\n";
    write_text(dir / "order.csv", head + "0,10\n1,20\n0,15\n");
    try {
        (void)read_timetags(dir / "order.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
        CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }
    write_text(dir / "chan.csv", head + "0,10\n2,20\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "chan.csv"), ParseError);
    write_text(dir / "num.csv", head + "0,1e3\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "num.csv"), ParseError);
    write_text(dir / "range.csv", head + "0,5000\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "range.csv"), ParseError);
    write_text(dir / "hdr.csv", "# kind: timetags\n# schema_version: 1\n# duration_ps: 1000\nchannel,timestamp\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "hdr.csv"), SchemaError);
    write_text(dir / "ver.csv", "# kind: timetags\n# schema_version: 2\n# duration_ps: 1000\nchannel,timestamp_ps\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "ver.csv"), SchemaError);
    write_text(dir / "nover.csv", "# kind: timetags\n# duration_ps: 1000\nchannel,timestamp_ps\n");
    CHECK_THROWS_AS((void)read_timetags(dir / "nover.csv"), SchemaError);
    CHECK_THROWS_AS((void)read_timetags(dir / "missing.csv"), DataError);
}

TEST_CASE("streaming reader keeps chunks bounded") {
    TempDir dir;
    TimeTagWriter w(dir / "big.csv", 1'000'000'000'000, {});
    std::vector<TimeTag> chunk;
    for (std::int64_t i = 0; i < 1'000'000; ++i) chunk.push_back({i * 1000, i % 2 ? Channel::Detector1 : Channel::Detector0});
    w.write(chunk);
    w.close();
    TimeTagReader r(dir / "big.csv");
    std::vector<TimeTag> part;
    std::size_t total = 0, largest = 0;
    while (r.next(part, 4096)) {
        total += part.size();
        largest = std::max(largest, part.size());
    }
    CHECK(total == 1'000'000);
    CHECK(largest == 4096);
}

TEST_CASE("g2 histogram round trip") {
    TempDir dir;
    std::mt19937_64 rng(1);
    auto h = synth::g2_histogram(1.2, 9.0, 130.0, 0.5, 400.0, 1000.0, &rng);
    h.metadata["power_mW"] = "1";
    h.n0 = 123;
    h.n1 = 456;
    h.duration_ps = 789;
    h.warnings.push_back("example warning");
    write_g2hist(dir / "h.csv", h);
    const auto back = read_g2hist(dir / "h.csv");
    CHECK(back.counts == h.counts);
    CHECK(back.normalized == h.normalized);
    CHECK(back.sigma == h.sigma);
    CHECK(back.half_bins == h.half_bins);
    CHECK(back.bin_width_ns == h.bin_width_ns);
    CHECK(back.norm_factor == h.norm_factor);
    CHECK(back.normalization == h.normalization);
    CHECK(back.tail_window->lo_ns == h.tail_window->lo_ns);
    CHECK(back.metadata == h.metadata);
    CHECK(back.warnings == h.warnings);
    CHECK(back.n0 == 123);
    CHECK(back.duration_ps == 789);

    write_text(dir / "bad.csv", "# kind: g2hist\n# schema_version: 1\n# bin_width_ns: 1\n# half_bins: 0\ntau,g2,sigma\n0,1,1\n");
    CHECK_THROWS_AS((void)read_g2hist(dir / "bad.csv"), SchemaError);
    write_text(dir / "three.csv",
               "# kind: g2hist\n# schema_version: 1\n# bin_width_ns: 1\n# half_bins: 0\n# normalization: tail\n"
               "# norm_factor: 10\ntau_ns,g2,sigma\n0,0.5,0.1\n");
    const auto t = read_g2hist(dir / "three.csv");
    CHECK(t.counts[0] == 5);
}

TEST_CASE("series round trip and unit-suffixed headers") {
    TempDir dir;
    std::mt19937_64 rng(2);
    for (auto kind : {DatasetKind::Spectrum, DatasetKind::Saturation, DatasetKind::Polarization, DatasetKind::Decay}) {
        for (int trial = 0; trial < 20; ++trial) {
            Series s;
            s.kind = kind;
            s.metadata["note"] = "trial " + std::to_string(trial);
            for (int i = 0; i < 50; ++i) {
                s.x.push_back(random_double(rng));
                s.y.push_back(random_double(rng));
            }
            write_series(dir / "s.csv", s);
            CHECK(read_series(dir / "s.csv") == s);
        }
    }
    write_text(dir / "nounit.csv", "# kind: spectrum\n# schema_version: 1\nwavelength,counts\n600,1\n");
    CHECK_THROWS_AS((void)read_series(dir / "nounit.csv"), SchemaError);
    write_text(dir / "row.csv", "# kind: saturation\n# schema_version: 1\npower_mW,rate_Hz\n1,2\n1;2\n");
    try {
        (void)read_series(dir / "row.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
    }
}

TEST_CASE("decay histogram as a series") {
    DecayHistogram h;
    h.bin_width_ns = 0.25;
    h.period_ns = 100;
    h.counts = {5, 4, 3, 0, 1};
    h.metadata["seed"] = "1";
    const auto back = decay_from_series(to_series(h));
    CHECK(back.counts == h.counts);
    CHECK(back.bin_width_ns == 0.25);
    CHECK(back.period_ns == 100);
    CHECK(back.metadata == h.metadata);
}

TEST_CASE("emitter model round trip") {
    TempDir dir;
    for (const auto& m : {gev1_model(), gev2_model()}) {
        write_emitter_model(dir / "m.json", m);
        const auto back = read_emitter_model(dir / "m.json");
        CHECK(back == m);
        CHECK(back.k21 == m.k21);
        CHECK(back.deshelve_sat == m.deshelve_sat);
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1e-5, 3.0);
    for (int i = 0; i < 200; ++i) {
        EmitterModel m{"random", u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        CHECK(emitter_model_from_json(emitter_model_to_json(m)) == m);
    }
    CHECK_THROWS_AS((void)emitter_model_from_json("{\"kind\":\"emitter_model\",\"schema_version\":9}"), SchemaError);
    CHECK_THROWS_AS((void)emitter_model_from_json("{\"kind\":\"fit_report\",\"schema_version\":1}"), SchemaError);
    CHECK_THROWS_AS((void)emitter_model_from_json("{not json"), ParseError);
}

TEST_CASE("fit report round trip and schema") {
    std::mt19937_64 rng(4);
    FitReport r;
    r.fit = fit_g2_single(synth::g2_histogram(1.0, 10.0, 150.0, 2.0, 1500.0, 500.0, &rng));
    r.fit.parameters[0].standard_error = INFINITY;
    r.fit.parameters[0].identifiable = false;
    r.fit.flags.push_back("unidentifiable:a");
    r.inputs.push_back({"in/h.csv", std::string(64, 'a'), "g2hist"});
    r.tool_version = "0.1.0";
    const auto text = fit_report_to_json(r);
    const auto back = fit_report_from_json(text);
    CHECK(fit_report_to_json(back) == text);
    CHECK(back.fit.family == FitFamily::G2Single);
    CHECK(std::isinf(back.fit.param("a").standard_error));
    CHECK(back.fit.reduced_chi2 == r.fit.reduced_chi2);
    CHECK(back.inputs == r.inputs);
    for (const char* key : {"\"family\"", "\"parameters\"", "\"standard_error\"", "\"reduced_chi2\"", "\"provenance\"",
                            "\"schema_version\""}) {
        CHECK(text.find(key) != std::string::npos);
    }

    const auto global = fit_g2_global(synth::power_series(gev1_model(), {0.1, 1.0, 4.0}, 2.0, 1500.0, 1e5, nullptr));
    FitReport g{global, {}, "0.1.0"};
    const auto gt = fit_report_to_json(g);
    CHECK(gt.find("\"emitter_model\"") != std::string::npos);
    CHECK(emitter_model_from_fit(fit_report_from_json(gt).fit) == emitter_model_from_fit(global));
}
