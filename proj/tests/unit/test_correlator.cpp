#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "photodyn/correlator.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/photon_sim.hpp"

using namespace photodyn;

namespace {

// Clustered random stream with exact ties and a few sync events.
TimeTagStream random_stream(std::mt19937_64& rng, std::size_t n, std::int64_t span_ps) {
    std::uniform_int_distribution<std::int64_t> pos(0, span_ps);
    std::uniform_int_distribution<int> jitter(-3000, 3000);
    std::uniform_int_distribution<int> ch(0, 9);
    TimeTagStream s;
    s.duration_ps = span_ps + 10000;
    std::int64_t anchor = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 7 == 0) anchor = pos(rng);
        const int c = ch(rng);
        const Channel channel = c == 9 ? Channel::Sync : (c % 2 ? Channel::Detector1 : Channel::Detector0);
        s.events.push_back({std::clamp<std::int64_t>(anchor + jitter(rng), 0, s.duration_ps), channel});
    }
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const TimeTag& a, const TimeTag& b) { return a.timestamp_ps < b.timestamp_ps; });
    return s;
}

TimeTagStream poisson_pair(double rate_ghz, double duration_ns, std::uint64_t seed) {
    SimConfig c;
    c.model = gev1_model();
    c.detection_efficiency = 0.0;
    c.background_rate_ghz = rate_ghz;
    c.duration_ns = duration_ns;
    c.seed = seed;
    return simulate(c);
}

} // namespace

TEST_CASE("sliding window equals the all-pairs oracle") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> size(0, 3000);
    for (int trial = 0; trial < 30; ++trial) {
        const auto s = random_stream(rng, size(rng), 2'000'000);
        const std::int64_t width = std::uniform_int_distribution<std::int64_t>(1, 1500)(rng);
        const std::int64_t half = std::uniform_int_distribution<std::int64_t>(10, 40)(rng);
        const auto h = correlate(s, static_cast<double>(width) / 1000.0, static_cast<double>(width * half) / 1000.0);
        REQUIRE(h.half_bins == half);
        CHECK(h.counts == oracle::all_pairs_histogram(s, width, half));
    }
    SUBCASE("ten thousand events") {
        const auto s = random_stream(rng, 10000, 5'000'000);
        const auto h = correlate(s, 0.25, 5.0);
        CHECK(h.counts == oracle::all_pairs_histogram(s, 250, 20));
    }
}

TEST_CASE("parallel and chunked correlation are bit-identical") {
    std::mt19937_64 rng(2);
    const auto s = random_stream(rng, 20000, 20'000'000);
    const auto ref = correlate(s, 1.0, 30.0);
    for (unsigned t : {1u, 2u, 3u, 8u}) CHECK(correlate_parallel(s, 1.0, 30.0, t).counts == ref.counts);
    StreamingCorrelator sc(1.0, 30.0);
    for (std::size_t i = 0; i < s.events.size(); i += 777) {
        sc.add(std::span(s.events).subspan(i, std::min<std::size_t>(777, s.events.size() - i)));
    }
    const auto streamed = sc.result(s.duration_ps);
    CHECK(streamed.counts == ref.counts);
    CHECK(streamed.n0 == ref.n0);
    CHECK(streamed.n1 == ref.n1);
}

TEST_CASE("time reversal mirrors the histogram") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = random_stream(rng, 4000, 3'000'000);
        const auto fwd = correlate(s, 0.5, 6.0);
        const auto back = correlate(time_reversed(s), 0.5, 6.0);
        CHECK(back.counts == fwd.mirrored().counts);
    }
}

TEST_CASE("bins nest under odd refinement at fixed window") {
    std::mt19937_64 rng(4);
    const auto s = random_stream(rng, 6000, 4'000'000);
    const std::int64_t w = 3000, m = 12;
    const auto coarse = correlate(s, w / 1000.0, w * m / 1000.0);
    for (std::int64_t n : {3, 5}) {
        const std::int64_t wf = w / n, mf = n * m + (n - 1) / 2;
        const auto fine = correlate(s, wf / 1000.0, wf * mf / 1000.0);
        REQUIRE(fine.half_bins == mf);
        CHECK(fine.total() == coarse.total());
        for (std::size_t k = 0; k < coarse.size(); ++k) {
            std::uint64_t sum = 0;
            for (std::int64_t j = 0; j < n; ++j) sum += fine.counts[k * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            CHECK(sum == coarse.counts[k]);
        }
    }
}

TEST_CASE("preconditions") {
    TimeTagStream s;
    s.duration_ps = 100;
    s.events = {{50, Channel::Detector0}, {10, Channel::Detector1}};
    CHECK_THROWS_AS((void)correlate(s, 1.0, 10.0), DataError);
    s.events = {{10, Channel::Detector0}};
    CHECK_THROWS_AS((void)correlate(s, 1.0, 5.0), DataError);
    CHECK_THROWS_AS((void)correlate(s, 0.0, 5.0), DataError);
    const auto h = correlate(s, 1.0, 10.0);
    CHECK(h.total() == 0);
    CHECK_FALSE(h.warnings.empty());
}

TEST_CASE("uncorrelated light is flat") {
    const auto s = poisson_pair(2e-3, 1e8, 10);
    const auto h = normalize(correlate(s, 1.0, 200.0), Normalization::RateProduct);
    const double mean = std::accumulate(h.normalized.begin(), h.normalized.end(), 0.0) / static_cast<double>(h.size());
    const double sigma = 1.0 / std::sqrt(static_cast<double>(h.total()));
    CHECK(std::abs(mean - 1.0) < 3 * sigma + 1e-3);
}

TEST_CASE("normalisation modes") {
    CorrelationHistogram flat;
    flat.bin_width_ns = 1.0;
    flat.half_bins = 50;
    flat.counts.assign(101, 7);
    flat.normalized.assign(101, 7);
    flat.sigma.assign(101, 1);
    const auto n = normalize(flat, Normalization::TailPlateau);
    for (double v : n.normalized) CHECK(v == 1.0);
    REQUIRE(n.tail_window);
    CHECK(n.tail_window->lo_ns == 37.5);

    CHECK_THROWS_AS((void)normalize(flat, Normalization::TailPlateau, TailWindow{10.0, 50.0}), NormalizationError);
    CHECK_THROWS_AS((void)normalize(flat, Normalization::TailPlateau, TailWindow{45.0, 50.0}), NormalizationError);
    CHECK_THROWS_AS((void)normalize(flat, Normalization::RateProduct), NormalizationError);
    auto empty = flat;
    std::fill(empty.counts.begin(), empty.counts.end(), 0);
    CHECK_THROWS_AS((void)normalize(empty, Normalization::TailPlateau), NormalizationError);

    SUBCASE("plateau mean is one on a simulated curve") {
        SimConfig c;
        c.model = gev1_model();
        c.power_mw = 1.0;
        c.duration_ns = 2e8;
        c.detection_efficiency = 0.1;
        c.seed = 21;
        const auto h = normalize(correlate(simulate(c), 1.0, 1500.0), Normalization::TailPlateau);
        double sum = 0;
        int bins = 0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double t = std::abs(h.center_ns(i));
            if (t >= h.tail_window->lo_ns && t <= h.tail_window->hi_ns) {
                sum += h.normalized[i];
                ++bins;
            }
        }
        CHECK(std::abs(sum / bins - 1.0) < 1e-9);
        // both modes agree at zero background
        const auto r = normalize(h, Normalization::RateProduct);
        CHECK(r.norm_factor == doctest::Approx(h.norm_factor).epsilon(0.02));
        // raw antibunching dip without any correction
        CHECK(h.normalized[static_cast<std::size_t>(h.half_bins)] < 0.2);
    }
}

TEST_CASE("background correction") {
    CorrelationHistogram h;
    h.bin_width_ns = 1;
    h.half_bins = 1;
    h.counts = {1, 1, 1};
    h.normalized = {0.19, 1.0, 2.0};
    h.sigma = {0.1, 0.1, 0.1};
    const auto c = background_corrected(h, 0.9);
    CHECK(c.normalized[0] == doctest::Approx(0.0).scale(1));
    CHECK(c.normalized[1] == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)background_corrected(h, 0.0), DomainError);
}

TEST_CASE("reported sigma matches the spread across seeds") {
    const int seeds = 100;
    std::vector<std::vector<double>> vals;
    std::vector<double> reported;
    for (int s = 0; s < seeds; ++s) {
        const auto h = normalize(correlate(poisson_pair(1e-3, 1e7, 1000 + s), 1.0, 40.0), Normalization::RateProduct);
        vals.push_back(h.normalized);
        double acc = 0;
        for (double v : h.sigma) acc += v;
        reported.push_back(acc / static_cast<double>(h.sigma.size()));
    }
    const std::size_t bins = vals[0].size();
    double spread = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        double mean = 0, var = 0;
        for (const auto& v : vals) mean += v[b];
        mean /= seeds;
        for (const auto& v : vals) var += (v[b] - mean) * (v[b] - mean);
        spread += std::sqrt(var / (seeds - 1));
    }
    spread /= static_cast<double>(bins);
    const double sigma = std::accumulate(reported.begin(), reported.end(), 0.0) / seeds;
    CHECK(std::abs(spread / sigma - 1.0) < 0.2);
}

TEST_CASE("pulsed g2 at zero delay") {
    SUBCASE("Poisson light") {
        SimConfig c;
        c.model = gev1_model();
        c.detection_efficiency = 0.0;
        c.background_rate_ghz = 2e-3;
        c.duration_ns = 5e7;
        c.seed = 31;
        c.mode = PulsedExcitation{100.0, 1.0};
        const auto r = pulsed_g2_zero(simulate(c), 100.0);
        CHECK(std::abs(r.value - 1.0) < 3 * r.sigma);
        CHECK(r.side_counts.size() == 10);
    }
    SUBCASE("single emitter") {
        SimConfig c;
        c.model = gev1_model();
        c.power_mw = 1.0;
        c.detection_efficiency = 0.2;
        c.background_rate_ghz = 1e-6;
        c.duration_ns = 5e7;
        c.seed = 32;
        c.mode = PulsedExcitation{100.0, 1.0};
        const auto r = pulsed_g2_zero(simulate(c), 100.0);
        CHECK(r.value < 0.5);
    }
    SUBCASE("errors") {
        TimeTagStream s;
        s.duration_ps = 1'000'000;
        CHECK_THROWS_AS((void)pulsed_g2_zero(s, 100.0, 2), StatisticsError);
        CHECK_THROWS_AS((void)pulsed_g2_zero(s, 500.0), StatisticsError);
    }
}

TEST_CASE("decay histogram") {
    SimConfig c;
    c.model = gev1_model();
    c.detection_efficiency = 0.0;
    c.background_rate_ghz = 1e-3;
    c.duration_ns = 1e8;
    c.seed = 41;
    c.mode = PulsedExcitation{100.0, 1.0};
    const auto s = simulate(c);
    const auto h = decay_histogram(s, 100.0, 1.0);
    REQUIRE(h.counts.size() == 100);
    const double mean = static_cast<double>(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0})) / 100.0;
    double chi2 = 0;
    for (auto v : h.counts) chi2 += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean) / mean;
    // flat within chi-square(99) at roughly 4 sigma
    CHECK(chi2 < 99 + 4 * std::sqrt(2 * 99.0));
    CHECK(h.time_ns(0) == 0.5);

    CHECK_THROWS_AS((void)decay_histogram(s, 100.0, 2.0), DataError);
    auto cw = c;
    cw.mode = CwExcitation{};
    CHECK_THROWS_AS((void)decay_histogram(simulate(cw), 100.0, 0.5), DataError);
}
