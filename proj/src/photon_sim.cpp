#include "photodyn/photon_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>

#include "photodyn/errors.hpp"
#include "photodyn/format.hpp"
#include "photodyn/rng.hpp"

namespace photodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// RNG stream assignment within one seed.
constexpr std::uint64_t kEmitterStream = 0;
constexpr std::uint64_t kBackground0Stream = 1;
constexpr std::uint64_t kBackground1Stream = 2;

std::int64_t to_ps(double t_ns) { return std::llround(t_ns * 1000.0); }

bool probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

class EmitterProcess {
public:
    EmitterProcess(const SimConfig& cfg)
        : rng_(cfg.seed, kEmitterStream),
          rates_(rates_at_power(cfg.model, cfg.power_mw)),
          duration_ns_(cfg.duration_ns),
          duration_ps_(cfg.duration_ps()) {
        const double decay = rates_.k21 + rates_.k23;
        decay_rate_ = decay;
        const double p_rad = rates_.k21 / decay;
        const double eta = cfg.detection_efficiency;
        cut_ch0_ = p_rad * eta * cfg.splitter_ratio;
        cut_ch1_ = p_rad * eta;
        cut_rad_ = p_rad;
        stop_ = cut_ch1_ + (1.0 - p_rad);
        if (const auto* pulsed = std::get_if<PulsedExcitation>(&cfg.mode)) {
            pulsed_ = true;
            period_ps_ = to_ps(pulsed->period_ns);
            excitation_probability_ = pulsed->excitation_probability;
            rates_.k12 = 0.0;
        }
    }

    std::optional<TimeTag> peek() {
        while (ready_.empty() && !exhausted_) step();
        if (ready_.empty()) return std::nullopt;
        return ready_.front();
    }

    void pop() { ready_.pop_front(); }

    [[nodiscard]] const std::array<double, 3>& occupation() const { return occupation_; }
    [[nodiscard]] std::uint64_t emitted() const { return emitted_; }

private:
    // Moves the clock to t, charging the elapsed time to the current state.
    void move_to(double t) {
        const double a = std::min(now_, duration_ns_);
        const double b = std::min(t, duration_ns_);
        occupation_[state_] += b - a;
        now_ = t;
    }

    void finish() {
        move_to(kInf);
        exhausted_ = true;
    }

    // Leaves state 2: radiative decay (possibly detected) or shelving.
    void decay_from_excited() {
        const double u = rng_.uniform();
        if (u < cut_rad_) {
            ++emitted_;
            state_ = 0;
            if (u < cut_ch1_ && now_ < duration_ns_) {
                const std::int64_t ts = to_ps(now_);
                if (ts < duration_ps_) {
                    ready_.push_back({ts, u < cut_ch0_ ? Channel::Detector0 : Channel::Detector1});
                }
            }
        } else {
            state_ = 2;
        }
    }

    void step() { pulsed_ ? step_pulsed() : step_cw(); }

    void step_cw() {
        if (now_ >= duration_ns_) {
            finish();
            return;
        }
        switch (state_) {
        case 0:
            if (rates_.k12 <= 0.0) return finish();
            if (stop_ > 0.0 && stop_ < 0.5 && skip_cycles()) break;
            move_to(now_ + rng_.exponential(rates_.k12));
            state_ = 1;
            break;
        case 1:
            move_to(now_ + rng_.exponential(decay_rate_));
            decay_from_excited();
            break;
        default:
            if (rates_.k31 <= 0.0) return finish();
            move_to(now_ + rng_.exponential(rates_.k31));
            state_ = 0;
            break;
        }
    }

    // From state 1, jumps straight to the next cycle that ends in a detected
    // photon or in shelving. The silent cycles before it number N - 1 with N
    // geometric, and the time spent in states 1 and 2 over N cycles is a sum
    // of N exponentials each, i.e. Gamma. A block that would overrun the run
    // is thrown away and replayed step by step; state 1 is a renewal point so
    // the replay is still an exact sample.
    bool skip_cycles() {
        const double n = rng_.geometric(stop_);
        const double t1 = rng_.gamma(n, rates_.k12);
        const double t2 = rng_.gamma(n, decay_rate_);
        if (!(now_ + t1 + t2 < duration_ns_)) return false;
        occupation_[0] += t1;
        occupation_[1] += t2;
        now_ += t1 + t2;
        emitted_ += static_cast<std::uint64_t>(n) - 1;
        const double u = rng_.uniform() * stop_;
        if (u < cut_ch1_) {
            ++emitted_;
            const std::int64_t ts = to_ps(now_);
            if (ts < duration_ps_) ready_.push_back({ts, u < cut_ch0_ ? Channel::Detector0 : Channel::Detector1});
        } else {
            state_ = 2;
        }
        return true;
    }

    void step_pulsed() {
        const double next_pulse_ns =
            next_pulse_ps_ < duration_ps_ ? static_cast<double>(next_pulse_ps_) / 1000.0 : kInf;
        if (std::isinf(next_pulse_ns) && (std::isinf(next_transition_) || next_transition_ >= duration_ns_)) {
            return finish();
        }
        if (next_transition_ < next_pulse_ns) {
            move_to(next_transition_);
            if (state_ == 1) {
                decay_from_excited();
                next_transition_ = state_ == 2 && rates_.k31 > 0.0 ? now_ + rng_.exponential(rates_.k31) : kInf;
            } else {
                state_ = 0;
                next_transition_ = kInf;
            }
            return;
        }
        move_to(next_pulse_ns);
        ready_.push_back({next_pulse_ps_, Channel::Sync});
        next_pulse_ps_ += period_ps_;
        if (state_ == 0 && rng_.uniform() < excitation_probability_) {
            state_ = 1;
            next_transition_ = now_ + rng_.exponential(decay_rate_);
        }
    }

    RandomStream rng_;
    RateCoefficients rates_;
    double duration_ns_;
    std::int64_t duration_ps_;
    double decay_rate_ = 0.0;
    double cut_ch0_ = 0.0, cut_ch1_ = 0.0, cut_rad_ = 0.0;
    double stop_ = 0.0; // per-cycle chance of a detection or shelving

    bool pulsed_ = false;
    std::int64_t period_ps_ = 0;
    double excitation_probability_ = 0.0;
    std::int64_t next_pulse_ps_ = 0;
    double next_transition_ = kInf;

    int state_ = 0; // 0, 1, 2 for states 1, 2, 3
    double now_ = 0.0;
    std::array<double, 3> occupation_{};
    std::uint64_t emitted_ = 0;
    bool exhausted_ = false;
    std::deque<TimeTag> ready_;
};

class BackgroundProcess {
public:
    BackgroundProcess(const SimConfig& cfg, std::uint64_t stream, Channel ch)
        : rng_(cfg.seed, stream), rate_(cfg.background_rate_ghz), duration_ps_(cfg.duration_ps()), channel_(ch) {
        advance();
    }

    std::optional<TimeTag> peek() const {
        if (next_ps_ >= duration_ps_) return std::nullopt;
        return TimeTag{next_ps_, channel_};
    }

    void pop() { advance(); }

private:
    void advance() {
        if (rate_ <= 0.0) {
            next_ps_ = duration_ps_;
            return;
        }
        now_ += rng_.exponential(rate_);
        next_ps_ = now_ * 1000.0 >= static_cast<double>(duration_ps_) ? duration_ps_ : to_ps(now_);
    }

    RandomStream rng_;
    double rate_;
    std::int64_t duration_ps_;
    Channel channel_;
    double now_ = 0.0;
    std::int64_t next_ps_ = 0;
};

} // namespace

void SimConfig::validate() const {
    try {
        model.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("invalid emitter model: ") + e.what());
    }
    if (!std::isfinite(power_mw) || power_mw < 0.0) throw ConfigError("power must be >= 0 mW");
    if (!std::isfinite(duration_ns) || duration_ns <= 0.0) throw ConfigError("duration must be > 0");
    if (duration_ns * 1000.0 > 9.0e18) throw ConfigError("duration exceeds the 64-bit picosecond range");
    if (!probability(detection_efficiency)) throw ConfigError("detection efficiency must lie in [0, 1]");
    if (!probability(splitter_ratio)) throw ConfigError("splitter ratio must lie in [0, 1]");
    if (!std::isfinite(background_rate_ghz) || background_rate_ghz < 0.0) {
        throw ConfigError("background rate must be >= 0");
    }
    if (const auto* p = std::get_if<PulsedExcitation>(&mode)) {
        if (!std::isfinite(p->period_ns) || p->period_ns <= 0.0 || to_ps(p->period_ns) <= 0) {
            throw ConfigError("pulse period must be > 0");
        }
        if (!probability(p->excitation_probability)) throw ConfigError("excitation probability must lie in [0, 1]");
    }
}

std::int64_t SimConfig::duration_ps() const { return to_ps(duration_ns); }

std::map<std::string, std::string> SimConfig::metadata() const {
    std::map<std::string, std::string> m;
    m["source"] = "photodyn-simulator";
    m["rng"] = std::string(RandomStream::kAlgorithm);
    m["model_name"] = model.name;
    m["K_GHz_per_mW"] = format_double(model.pump_efficiency);
    m["k21_GHz"] = format_double(model.k21);
    m["k23_GHz"] = format_double(model.k23);
    m["A1_GHz"] = format_double(model.deshelve_high);
    m["B1_mW"] = format_double(model.deshelve_sat);
    m["C1_GHz"] = format_double(model.deshelve_low);
    m["power_mW"] = format_double(power_mw);
    m["duration_ns"] = format_double(duration_ns);
    m["detection_efficiency"] = format_double(detection_efficiency);
    m["background_rate_GHz"] = format_double(background_rate_ghz);
    m["splitter_ratio"] = format_double(splitter_ratio);
    m["seed"] = std::to_string(seed);
    if (const auto* p = std::get_if<PulsedExcitation>(&mode)) {
        m["mode"] = "pulsed";
        m["period_ns"] = format_double(p->period_ns);
        m["excitation_probability"] = format_double(p->excitation_probability);
    } else {
        m["mode"] = "cw";
    }
    return m;
}

struct PhotonSimulator::Impl {
    explicit Impl(const SimConfig& cfg)
        : config(cfg),
          emitter(cfg),
          bg0(cfg, kBackground0Stream, Channel::Detector0),
          bg1(cfg, kBackground1Stream, Channel::Detector1) {}

    SimConfig config;
    EmitterProcess emitter;
    BackgroundProcess bg0;
    BackgroundProcess bg1;
    bool finished = false;
};

PhotonSimulator::PhotonSimulator(const SimConfig& config) {
    config.validate();
    impl_ = std::make_unique<Impl>(config);
}

PhotonSimulator::~PhotonSimulator() = default;
PhotonSimulator::PhotonSimulator(PhotonSimulator&&) noexcept = default;
PhotonSimulator& PhotonSimulator::operator=(PhotonSimulator&&) noexcept = default;

bool PhotonSimulator::generate_until(std::int64_t until_ps, std::vector<TimeTag>& out) {
    auto& s = *impl_;
    constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::max();
    while (!s.finished) {
        const auto e = s.emitter.peek();
        const auto b0 = s.bg0.peek();
        const auto b1 = s.bg1.peek();
        const std::int64_t te = e ? e->timestamp_ps : kNone;
        const std::int64_t t0 = b0 ? b0->timestamp_ps : kNone;
        const std::int64_t t1 = b1 ? b1->timestamp_ps : kNone;
        const std::int64_t t = std::min({te, t0, t1});
        if (t == kNone) {
            s.finished = true;
            break;
        }
        if (t >= until_ps) break;
        // ties resolve emitter, background 0, background 1
        if (te == t) {
            out.push_back(*e);
            s.emitter.pop();
        } else if (t0 == t) {
            out.push_back(*b0);
            s.bg0.pop();
        } else {
            out.push_back(*b1);
            s.bg1.pop();
        }
    }
    return !s.finished;
}

bool PhotonSimulator::finished() const { return impl_->finished; }
const SimConfig& PhotonSimulator::config() const { return impl_->config; }
std::array<double, 3> PhotonSimulator::occupation_ns() const { return impl_->emitter.occupation(); }
std::uint64_t PhotonSimulator::emitted_photons() const { return impl_->emitter.emitted(); }

TimeTagStream simulate(const SimConfig& config) {
    PhotonSimulator sim(config);
    TimeTagStream stream;
    stream.duration_ps = config.duration_ps();
    stream.metadata = config.metadata();
    sim.generate_until(std::numeric_limits<std::int64_t>::max(), stream.events);
    return stream;
}

TimeTagStream simulate_cw(const SimConfig& config) {
    if (config.pulsed()) throw ConfigError("simulate_cw requires continuous-wave mode");
    return simulate(config);
}

TimeTagStream simulate_pulsed(const SimConfig& config) {
    if (!config.pulsed()) throw ConfigError("simulate_pulsed requires pulsed mode");
    return simulate(config);
}

} // namespace photodyn
