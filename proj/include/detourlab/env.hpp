// MDP wrapper around the simulator: 44-value detector state, 16-way detour
// action grid, duty-cycle actuation with random driver compliance, speed- and
// count-based rewards, 36-interval episodes with optional incidents.
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <memory>
#include <vector>

#include "detourlab/demand.hpp"
#include "detourlab/simcore.hpp"

namespace detourlab {

using Observation = std::vector<double>;

inline constexpr std::array<double, 4> kDutyGrid{0.0, 0.1, 0.2, 0.3};
inline constexpr int kActionCount = 16;

struct ActionTuple {
    double f1 = 0.0;
    double f2 = 0.0;
};

// Row-major enumeration over the duty grid: f1 varies slowest.
inline ActionTuple decode_action(int index) {
    if (index < 0 || index >= kActionCount)
        throw ContractViolation("decode_action: index outside [0,16)");
    return {kDutyGrid[static_cast<std::size_t>(index / 4)],
            kDutyGrid[static_cast<std::size_t>(index % 4)]};
}

// Per-step split plan for one control interval. `commanded[e][t]` records
// whether the detour instruction was in force (after compliance thinning);
// `splits[t]` is what the simulator actually applies.
struct SplitSchedule {
    std::vector<StepSplits> splits;
    std::array<std::vector<std::uint8_t>, 2> commanded;

    double commanded_share(int exit_idx) const {
        const auto& c = commanded[static_cast<std::size_t>(exit_idx)];
        if (c.empty()) return 0.0;
        double s = 0.0;
        for (auto v : c) s += v;
        return s / static_cast<double>(c.size());
    }
};

// Duty-cycle actuation: for the first f*steps seconds all through traffic at
// the exit is directed onto the ramp; drivers comply independently each step
// with probability hc. Outside the duty window the natural exit share applies.
inline SplitSchedule actuate(const ActionTuple& action, double hc, Rng& rng, int steps = 600,
                             double natural_exit = 0.05) {
    if (!(hc > 0.0 && hc <= 1.0)) throw ContractViolation("actuate: HC must be in (0,1]");
    for (double f : {action.f1, action.f2})
        if (f < 0.0 || f > kDutyGrid.back() + 1e-12)
            throw ContractViolation("actuate: duty fraction outside the grid range");

    SplitSchedule sched;
    sched.splits.assign(static_cast<std::size_t>(steps), StepSplits{{natural_exit, natural_exit}});
    const std::array<double, 2> duty{action.f1, action.f2};
    for (int e = 0; e < 2; ++e) {
        auto& flags = sched.commanded[static_cast<std::size_t>(e)];
        flags.assign(static_cast<std::size_t>(steps), 0);
        const int duty_steps =
            static_cast<int>(std::lround(duty[static_cast<std::size_t>(e)] * steps));
        for (int t = 0; t < duty_steps; ++t) {
            const bool obeyed = hc >= 1.0 ? true : rng.bernoulli(hc);
            if (obeyed) {
                sched.splits[static_cast<std::size_t>(t)].exit_fraction[static_cast<std::size_t>(e)] = 1.0;
                flags[static_cast<std::size_t>(t)] = 1;
            }
        }
    }
    return sched;
}

// Detector readings for an empty network: zero counts, free-flow speeds.
inline std::vector<DetectorReading> quiet_readings(const RoadNetwork& net) {
    std::vector<DetectorReading> out(net.detectors.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {0.0, net.cell(net.detectors[i].host_cell).fd.free_flow_speed};
    return out;
}

// 44-value state: 22 per-lane counts then 22 mean speeds, in canonical
// detector order. Normalization divides counts by the lane capacity over the
// window and speeds by the host free-flow speed.
inline Observation encode_state(const std::vector<DetectorReading>& readings,
                                const RoadNetwork& net, bool normalize = true,
                                double window_s = 600.0) {
    if (readings.size() != net.detectors.size())
        throw ContractViolation("encode_state: expected one reading per detector");
    Observation out(readings.size() * 2);
    for (std::size_t i = 0; i < readings.size(); ++i) {
        const Cell& host = net.cell(net.detectors[i].host_cell);
        double c = readings[i].count;
        double v = readings[i].mean_speed;
        if (normalize) {
            c /= host.fd.capacity() * window_s / kSecondsPerHour;
            v /= host.fd.free_flow_speed;
        }
        out[i] = c;
        out[readings.size() + i] = v;
    }
    return out;
}

// Order-checked variant: the caller supplies the detector ids it believes the
// readings follow; any mismatch with the canonical layout is an error.
inline Observation encode_state(const std::vector<DetectorReading>& readings,
                                const std::vector<DetectorId>& order, const RoadNetwork& net,
                                bool normalize = true, double window_s = 600.0) {
    if (order.size() != net.detectors.size())
        throw ContractViolation("encode_state: expected one id per detector");
    for (std::size_t i = 0; i < order.size(); ++i)
        if (order[i].label() != net.detectors[i].id.label())
            throw ContractViolation("encode_state: readings not in canonical detector order");
    return encode_state(readings, net, normalize, window_s);
}

// Lane-averaged station aggregates over the five mainline stations.
inline std::array<double, 5> station_speeds(const std::vector<DetectorReading>& readings) {
    if (readings.size() != 22) throw ContractViolation("station_speeds: expected 22 readings");
    std::array<double, 5> out{};
    for (int s = 0; s < 5; ++s) {
        double v = 0.0;
        for (int l = 0; l < 4; ++l) v += readings[static_cast<std::size_t>(4 * s + l)].mean_speed;
        out[static_cast<std::size_t>(s)] = v / 4.0;
    }
    return out;
}

inline std::array<double, 5> station_counts(const std::vector<DetectorReading>& readings) {
    if (readings.size() != 22) throw ContractViolation("station_counts: expected 22 readings");
    std::array<double, 5> out{};
    for (int s = 0; s < 5; ++s) {
        double c = 0.0;
        for (int l = 0; l < 4; ++l) c += readings[static_cast<std::size_t>(4 * s + l)].count;
        out[static_cast<std::size_t>(s)] = c / 4.0;
    }
    return out;
}

// Speed reward: mean over the entrance station, the station just past exit-1
// and the last station.
inline double reward_speed(const std::vector<DetectorReading>& readings) {
    const auto v = station_speeds(readings);
    return (v[0] + v[1] + v[4]) / 3.0;
}

// Count reward: through-route vehicles past the final station this interval.
inline double reward_count(const std::vector<DetectorReading>& readings,
                           const std::array<double, kRouteCount>& final_station_flow) {
    if (readings.size() != 22) throw ContractViolation("reward_count: expected 22 readings");
    return final_station_flow[kRouteMain];
}

// Position-independent local view around one exit: (count, speed) for the
// station just upstream, the station just downstream, up to two stations
// further downstream (zero-padded past the network end), and the ramp loop.
inline Observation local_observation(int exit_no, const std::vector<DetectorReading>& readings,
                                     const RoadNetwork& net, bool normalize = true,
                                     double window_s = 600.0) {
    if (exit_no != 1 && exit_no != 2) throw ContractViolation("local_observation: exit must be 1 or 2");
    if (readings.size() != 22) throw ContractViolation("local_observation: expected 22 readings");

    auto station_pair = [&](int s) {  // lane-averaged (count, speed)
        double c = 0.0, v = 0.0;
        for (int l = 0; l < 4; ++l) {
            c += readings[static_cast<std::size_t>(4 * s + l)].count;
            v += readings[static_cast<std::size_t>(4 * s + l)].mean_speed;
        }
        return std::pair<double, double>{c / 4.0, v / 4.0};
    };

    // Station indices per exit: upstream, downstream, then further downstream.
    const std::array<int, 4> order = exit_no == 1 ? std::array<int, 4>{0, 1, 2, 3}
                                                  : std::array<int, 4>{3, 4, -1, -1};
    const std::size_t ramp_idx = exit_no == 1 ? 20 : 21;

    Observation out;
    out.reserve(10);
    const double cap_norm =
        net.cell(net.detectors[0].host_cell).fd.capacity() * window_s / kSecondsPerHour;
    const double vf_main = net.cell(net.detectors[0].host_cell).fd.free_flow_speed;
    for (int s : order) {
        if (s < 0) {
            out.push_back(0.0);
            out.push_back(0.0);
            continue;
        }
        auto [c, v] = station_pair(s);
        out.push_back(normalize ? c / cap_norm : c);
        out.push_back(normalize ? v / vf_main : v);
    }
    const Cell& ramp_host = net.cell(net.detectors[ramp_idx].host_cell);
    double rc = readings[ramp_idx].count;
    double rv = readings[ramp_idx].mean_speed;
    if (normalize) {
        rc /= ramp_host.fd.capacity() * window_s / kSecondsPerHour;
        rv /= ramp_host.fd.free_flow_speed;
    }
    out.push_back(rc);
    out.push_back(rv);
    return out;
}

enum class RewardKind { Speed, Count };
enum class ObsMode { Global, LocalExit1 };

struct EpisodeConfig {
    InjectionProfile profile;
    ProfileJitter jitter;      // amplitudes; per-episode seed set at reset
    bool jitter_enabled = true;
    std::optional<IncidentEvent> incident;
    double compliance = 1.0;   // HC in (0,1]
    RewardKind reward_kind = RewardKind::Speed;
    int rl_step = 600;         // simulator steps per control interval
    int horizon = 36;          // control intervals per episode
    bool normalize = true;
    double natural_exit = 0.05;
    std::array<bool, 2> exits_enabled{true, true};
    ObsMode obs_mode = ObsMode::Global;

    void validate(const RoadNetwork& net) const {
        profile.validate();
        if (!(compliance > 0.0 && compliance <= 1.0))
            throw ConfigError("episode: compliance must be in (0,1]");
        if (rl_step <= 0 || horizon <= 0) throw ConfigError("episode: bad rl_step/horizon");
        const double span = static_cast<double>(rl_step) * horizon * net.sim_dt_s;
        if (std::abs(span - p_horizon()) > 1e-6)
            throw ConfigError("episode: rl_step * horizon must equal the profile window");
        if (incident) incident->validate(net);
    }
    double p_horizon() const { return profile.horizon; }
};

struct EnvStepResult {
    Observation state;
    double reward = 0.0;
    bool done = false;
    double reward_speed = 0.0;
    double reward_count = 0.0;
    std::array<double, 5> station_speeds{};
    std::array<double, 5> station_counts{};
    std::array<double, kRouteCount> final_station_flow{};
    ActionTuple action;
    int action_index = 0;
    std::vector<DetectorReading> readings;  // the interval's 22 loop readings
};

// One decision process instance. Instances are independent; run one per
// thread for parallel rollouts.
class Env {
  public:
    Env(std::shared_ptr<const RoadNetwork> net, EpisodeConfig cfg)
        : net_(std::move(net)), cfg_(std::move(cfg)) {
        cfg_.validate(*net_);
    }

    int observation_size() const { return cfg_.obs_mode == ObsMode::Global ? 44 : 10; }
    int action_count() const { return cfg_.obs_mode == ObsMode::Global ? kActionCount : 4; }
    const RoadNetwork& network() const { return *net_; }
    const EpisodeConfig& config() const { return cfg_; }
    const InjectionProfile& episode_profile() const { return profile_; }
    int steps_taken() const { return rl_index_; }

    // Start an episode. The seed fixes both the demand jitter and the
    // compliance draws, so identical seeds give identical episodes.
    Observation reset(std::uint64_t episode_seed) {
        profile_ = cfg_.profile;
        if (cfg_.jitter_enabled) {
            ProfileJitter j = cfg_.jitter;
            j.seed = episode_seed;
            profile_ = randomize(cfg_.profile, j);
        }
        state_ = SimState::make(*net_, episode_seed);
        rl_index_ = 0;
        finished_ = false;
        return observe(quiet_readings(*net_));
    }

    EnvStepResult step_env(int action_index) {
        if (finished_) throw ContractViolation("env: episode already finished");

        ActionTuple action = cfg_.obs_mode == ObsMode::Global
                                 ? decode_action(action_index)
                                 : ActionTuple{kDutyGrid[check_local_action(action_index)], 0.0};
        if (!cfg_.exits_enabled[0]) action.f1 = 0.0;
        if (!cfg_.exits_enabled[1]) action.f2 = 0.0;

        SplitSchedule sched =
            actuate(action, cfg_.compliance, state_.rng_stream, cfg_.rl_step, cfg_.natural_exit);
        const IncidentEvent* inc = cfg_.incident ? &*cfg_.incident : nullptr;

        for (int t = 0; t < cfg_.rl_step; ++t) {
            const double rate = injection_rate(profile_, profile_.t0 + state_.clock);
            inject(state_, *net_, rate, {1.0, 0.0, 0.0}, net_->sim_dt_s);
            step(state_, *net_, sched.splits[static_cast<std::size_t>(t)], net_->sim_dt_s, inc,
                 trajectory_);
        }

        const double window = cfg_.rl_step * net_->sim_dt_s;
        auto readings = read_detectors(state_, *net_, window);
        EnvStepResult res;
        res.final_station_flow = take_final_station_flow(state_);
        res.reward_speed = reward_speed(readings);
        res.reward_count = reward_count(readings, res.final_station_flow);
        res.reward = cfg_.reward_kind == RewardKind::Speed ? res.reward_speed : res.reward_count;
        res.station_speeds = station_speeds(readings);
        res.station_counts = station_counts(readings);
        res.state = observe(readings);
        res.action = action;
        res.action_index = action_index;
        res.readings = std::move(readings);
        ++rl_index_;
        finished_ = rl_index_ >= cfg_.horizon;
        res.done = finished_;

        if (log_) {
            auto& os = *log_;
            os << rl_index_ << ',' << action_index << ',' << action.f1 << ',' << action.f2 << ','
               << res.reward_speed << ',' << res.reward_count;
            for (double v : res.station_speeds) os << ',' << v;
            os << '\n';
        }
        return res;
    }

    // Episode log CSV sink (one row per control interval).
    void set_log(std::ostream* os) { log_ = os; }
    static void write_log_header(std::ostream& os) {
        os << "schema=episode-log,v=1\n";
        os << "rl_step,action,f1,f2,r_speed,r_count,v_s1,v_s2,v_s3,v_s4,v_s5\n";
    }
    void set_trajectory(std::ostream* os) { trajectory_ = os; }

  private:
    static std::size_t check_local_action(int a) {
        if (a < 0 || a >= 4) throw ContractViolation("env: local action outside [0,4)");
        return static_cast<std::size_t>(a);
    }

    Observation observe(const std::vector<DetectorReading>& readings) const {
        const double window = cfg_.rl_step * net_->sim_dt_s;
        if (cfg_.obs_mode == ObsMode::Global)
            return encode_state(readings, *net_, cfg_.normalize, window);
        return local_observation(1, readings, *net_, cfg_.normalize, window);
    }

    std::shared_ptr<const RoadNetwork> net_;
    EpisodeConfig cfg_;
    InjectionProfile profile_;
    SimState state_ = SimState{};
    int rl_index_ = 0;
    bool finished_ = true;
    std::ostream* log_ = nullptr;
    std::ostream* trajectory_ = nullptr;
};

}  // namespace detourlab
