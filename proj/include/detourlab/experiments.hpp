// Experiment orchestration: seeded, paired deployment evaluation against the
// no-action baseline, training/grid/transfer drivers, demand-profile dumps,
// and the flow-density sweep. Everything lands as versioned CSV plus an SVG
// rendering; reports are reproducible bit for bit from config + seeds.
#pragma once

#include <atomic>
#include <filesystem>
#include <thread>

#include "detourlab/agents.hpp"
#include "detourlab/config.hpp"
#include "detourlab/csv.hpp"
#include "detourlab/plot.hpp"

namespace detourlab {

struct ExperimentConfig {
    NetworkConfig network;
    InjectionProfile profile;
    ProfileJitter jitter;
    AgentConfig agent = a2c_preset();
    RewardKind reward = RewardKind::Speed;
    ObsMode obs_mode = ObsMode::Global;
    bool accident = false;
    double accident_start_s = 9600.0;  // 8:40 AM
    double accident_duration_s = 3600.0;
    int accident_lanes_closed = 1;
    double compliance = 1.0;
    int runs = 20;
    std::uint64_t deploy_seed_base = 1;
    std::uint64_t train_seed_base = 1000;
    std::string out_dir = "out";
    int grid_episodes = 60;  // per-cell training budget for the search
    int grid_eval_runs = 5;
    int threads = 2;

    std::shared_ptr<const RoadNetwork> build_net() const {
        return std::make_shared<const RoadNetwork>(build_default_network(network));
    }

    EpisodeConfig episode(const RoadNetwork& net, bool with_accident) const {
        EpisodeConfig e;
        e.profile = profile;
        e.jitter = jitter;
        e.reward_kind = reward;
        e.compliance = compliance;
        e.obs_mode = obs_mode;
        if (obs_mode == ObsMode::LocalExit1) e.exits_enabled = {true, false};
        if (with_accident)
            e.incident = IncidentEvent{net.accident_cell, accident_start_s, accident_duration_s,
                                       accident_lanes_closed};
        return e;
    }

    std::vector<std::uint64_t> deploy_seeds() const {
        std::vector<std::uint64_t> s(static_cast<std::size_t>(runs));
        for (int i = 0; i < runs; ++i) s[static_cast<std::size_t>(i)] = deploy_seed_base + static_cast<std::uint64_t>(i);
        return s;
    }

    static ExperimentConfig from_config(const ConfigFile& f) {
        ExperimentConfig c;
        auto& n = c.network;
        n.cell_length_m = f.get_double("network", "cell_length_m", n.cell_length_m);
        n.mainline_length_mi = f.get_double("network", "mainline_length_mi", n.mainline_length_mi);
        n.mainline_lanes = static_cast<int>(f.get_int("network", "mainline_lanes", n.mainline_lanes));
        n.fd_mainline.free_flow_speed = f.get_double("network", "free_flow_speed_mph", 60.0);
        n.fd_mainline.critical_density = f.get_double("network", "critical_density_vpmpl", 40.0);
        n.fd_mainline.jam_density = f.get_double("network", "jam_density_vpmpl", 200.0);
        n.fd_arterial.free_flow_speed = f.get_double("network", "arterial_speed_mph", 30.0);
        n.fd_arterial.critical_density = f.get_double("network", "arterial_critical_density_vpmpl", 48.0);
        n.fd_arterial.jam_density = f.get_double("network", "arterial_jam_density_vpmpl", 200.0);
        n.exit1_pos_m = f.get_double("network", "exit1_pos_m", n.exit1_pos_m);
        n.exit2_pos_m = f.get_double("network", "exit2_pos_m", n.exit2_pos_m);
        n.reentry1_pos_m = f.get_double("network", "reentry1_pos_m", n.reentry1_pos_m);
        n.reentry2_pos_m = f.get_double("network", "reentry2_pos_m", n.reentry2_pos_m);
        n.detour_length_factor = f.get_double("network", "detour_length_factor", n.detour_length_factor);
        n.offramp_capacity_vph = f.get_double("network", "offramp_capacity_vph", n.offramp_capacity_vph);
        n.weave_pos_m = f.get_double("network", "weave_pos_m", n.weave_pos_m);
        n.weave_capacity_scale = f.get_double("network", "weave_capacity_scale", n.weave_capacity_scale);
        n.weave_penalty = f.get_double("network", "weave_penalty", n.weave_penalty);
        n.merge_arterial_share = f.get_double("network", "merge_arterial_share", n.merge_arterial_share);
        n.capacity_drop = f.get_double("network", "capacity_drop", n.capacity_drop);
        n.accident_pos_m = f.get_double("network", "accident_pos_m", n.accident_pos_m);
        n.endpoint_capacity_vph = f.get_double("network", "endpoint_capacity_vph", n.endpoint_capacity_vph);

        c.profile.q0 = f.get_double("profile", "q0", c.profile.q0);
        c.profile.q1 = f.get_double("profile", "q1", c.profile.q1);
        c.profile.alpha = f.get_double("profile", "alpha", c.profile.alpha);
        c.profile.beta_p = f.get_double("profile", "beta", c.profile.beta_p);
        c.profile.horizon = f.get_double("profile", "horizon_s", c.profile.horizon);

        const double amp = f.get_double("jitter", "amplitude", 0.03);
        c.jitter.q0_amp = c.jitter.q1_amp = c.jitter.alpha_amp = c.jitter.beta_amp = amp;

        const std::string kind = f.get_string("agent", "kind", "a2c");
        c.agent = kind == "dqn" ? dqn_preset() : a2c_preset();
        c.agent.gamma = f.get_double("agent", "gamma", c.agent.gamma);
        c.agent.epsilon_steps = static_cast<int>(f.get_int("agent", "epsilon_steps", c.agent.epsilon_steps));
        c.agent.learning_rate = f.get_double("agent", "learning_rate", c.agent.learning_rate);
        c.agent.entropy_coeff = f.get_double("agent", "entropy_coeff", c.agent.entropy_coeff);
        c.agent.episodes = static_cast<int>(f.get_int("agent", "episodes", c.agent.episodes));
        c.agent.early_stop = f.get_bool("agent", "early_stop", c.agent.early_stop);
        c.agent.seed = static_cast<std::uint64_t>(f.get_int("agent", "seed", static_cast<long long>(c.agent.seed)));

        c.reward = f.get_string("experiment", "reward", "speed") == "count" ? RewardKind::Count
                                                                            : RewardKind::Speed;
        c.obs_mode = f.get_string("experiment", "observation", "global") == "local_exit1"
                         ? ObsMode::LocalExit1
                         : ObsMode::Global;
        c.accident = f.get_string("experiment", "scenario", "no-accident") == "accident";
        c.compliance = f.get_double("experiment", "compliance", c.compliance);
        c.runs = static_cast<int>(f.get_int("experiment", "runs", c.runs));
        c.deploy_seed_base = static_cast<std::uint64_t>(f.get_int("experiment", "seed", 1));
        c.threads = static_cast<int>(f.get_int("experiment", "threads", c.threads));
        return c;
    }
};

// One deployed episode, per control interval.
struct RunSeries {
    std::array<std::array<double, 5>, 36> station_speed{};
    std::array<double, 36> mean_speed{};
    std::array<double, 36> through_count{};
    double f1_mean = 0.0;
    double f2_mean = 0.0;
};

inline RunSeries run_episode(std::shared_ptr<const RoadNetwork> net, const EpisodeConfig& cfg,
                             std::uint64_t seed, const Policy& policy) {
    Env env(net, cfg);
    env.reset(seed);
    RunSeries out;
    std::vector<DetectorReading> readings = quiet_readings(*net);
    Rng policy_rng(seed ^ 0x5bf0a8b1u);  // per-episode stream for stochastic policies
    const int horizon = cfg.horizon;
    for (int i = 0; i < horizon; ++i) {
        const PolicyDecision d = policy(readings, policy_rng);
        const EnvStepResult res = env.step_env(d.action);
        readings = res.readings;
        out.station_speed[static_cast<std::size_t>(i)] = res.station_speeds;
        double m = 0.0;
        for (double v : res.station_speeds) m += v;
        out.mean_speed[static_cast<std::size_t>(i)] = m / 5.0;
        out.through_count[static_cast<std::size_t>(i)] = res.reward_count;
        // Duty-ratio bookkeeping uses the policy's expected fractions, so the
        // reported ratios are free of action-sampling noise.
        out.f1_mean += d.expected_f1 / horizon;
        out.f2_mean += d.expected_f2 / horizon;
    }
    return out;
}

inline Policy no_action_policy() {
    return [](const std::vector<DetectorReading>&, Rng&) { return PolicyDecision{0, 0.0, 0.0}; };
}

// Run the same seeds through a policy, a few episodes per thread.
inline std::vector<RunSeries> run_set(std::shared_ptr<const RoadNetwork> net,
                                      const EpisodeConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds, const Policy& policy,
                                      int threads) {
    std::vector<RunSeries> out(seeds.size());
    const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < nthreads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1))
                out[i] = run_episode(net, cfg, seeds[i], policy);
        });
    for (auto& t : pool) t.join();
    return out;
}

struct DeploymentReport {
    int runs = 0;
    std::array<double, 36> baseline_mean{}, baseline_se{};
    std::array<double, 36> agent_mean{}, agent_se{};
    std::array<std::array<double, 5>, 36> baseline_station{}, agent_station{};
    std::array<double, 36> baseline_count{}, agent_count{};
    int window_lo = -1, window_hi = -1;
    double baseline_window_speed = 0.0;
    double agent_window_speed = 0.0;
    double baseline_episode_speed = 0.0;  // mean over all 36 intervals
    double agent_episode_speed = 0.0;
    double improvement_pct = 0.0;
    std::array<double, 5> station_improvement_pct{};
    double mean_f1 = 0.0, mean_f2 = 0.0;
    double congestion_threshold = 42.0;

    bool window_found() const { return window_lo >= 0; }
};

inline DeploymentReport aggregate_deployment(const std::vector<RunSeries>& baseline,
                                             const std::vector<RunSeries>& agent,
                                             double free_flow_speed) {
    if (baseline.size() != agent.size() || baseline.empty())
        throw ContractViolation("deployment: baseline and treatment must pair up");
    DeploymentReport r;
    r.runs = static_cast<int>(baseline.size());
    r.congestion_threshold = 0.7 * free_flow_speed;
    const double n = static_cast<double>(r.runs);
    for (int i = 0; i < 36; ++i) {
        double bs = 0, bss = 0, as = 0, ass = 0;
        for (std::size_t k = 0; k < baseline.size(); ++k) {
            const double b = baseline[k].mean_speed[static_cast<std::size_t>(i)];
            const double a = agent[k].mean_speed[static_cast<std::size_t>(i)];
            bs += b;
            bss += b * b;
            as += a;
            ass += a * a;
            r.baseline_count[static_cast<std::size_t>(i)] += baseline[k].through_count[static_cast<std::size_t>(i)] / n;
            r.agent_count[static_cast<std::size_t>(i)] += agent[k].through_count[static_cast<std::size_t>(i)] / n;
            for (int s = 0; s < 5; ++s) {
                r.baseline_station[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] +=
                    baseline[k].station_speed[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] / n;
                r.agent_station[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] +=
                    agent[k].station_speed[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] / n;
            }
        }
        r.baseline_mean[static_cast<std::size_t>(i)] = bs / n;
        r.agent_mean[static_cast<std::size_t>(i)] = as / n;
        const double bvar = std::max(0.0, bss / n - (bs / n) * (bs / n));
        const double avar = std::max(0.0, ass / n - (as / n) * (as / n));
        r.baseline_se[static_cast<std::size_t>(i)] = std::sqrt(bvar / n);
        r.agent_se[static_cast<std::size_t>(i)] = std::sqrt(avar / n);
    }
    for (const RunSeries& s : agent) {
        r.mean_f1 += s.f1_mean / n;
        r.mean_f2 += s.f2_mean / n;
    }

    // Congested window: contiguous span of intervals whose pooled baseline
    // mean is below 0.7 x free-flow.
    for (int i = 0; i < 36; ++i)
        if (r.baseline_mean[static_cast<std::size_t>(i)] < r.congestion_threshold) {
            if (r.window_lo < 0) r.window_lo = i;
            r.window_hi = i;
        }
    const int lo = r.window_found() ? r.window_lo : 0;
    const int hi = r.window_found() ? r.window_hi : 35;
    double bw = 0, aw = 0;
    std::array<double, 5> bst{}, ast{};
    for (int i = lo; i <= hi; ++i) {
        bw += r.baseline_mean[static_cast<std::size_t>(i)];
        aw += r.agent_mean[static_cast<std::size_t>(i)];
        for (int s = 0; s < 5; ++s) {
            bst[static_cast<std::size_t>(s)] += r.baseline_station[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
            ast[static_cast<std::size_t>(s)] += r.agent_station[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
        }
    }
    const double m = hi - lo + 1;
    r.baseline_window_speed = bw / m;
    r.agent_window_speed = aw / m;
    for (int i = 0; i < 36; ++i) {
        r.baseline_episode_speed += r.baseline_mean[static_cast<std::size_t>(i)] / 36.0;
        r.agent_episode_speed += r.agent_mean[static_cast<std::size_t>(i)] / 36.0;
    }
    r.improvement_pct = (r.agent_window_speed - r.baseline_window_speed) /
                        r.baseline_window_speed * 100.0;
    for (int s = 0; s < 5; ++s)
        r.station_improvement_pct[static_cast<std::size_t>(s)] =
            (ast[static_cast<std::size_t>(s)] - bst[static_cast<std::size_t>(s)]) / bst[static_cast<std::size_t>(s)] * 100.0;
    return r;
}

inline void write_deployment_report(const DeploymentReport& r, const std::string& dir,
                                    const std::string& prefix) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir + "/" + prefix + "_intervals.csv");
        CsvWriter csv(os, "deploy-intervals", 1,
                      {"interval", "baseline_speed", "baseline_se", "agent_speed", "agent_se",
                       "baseline_count", "agent_count",
                       "b_s1", "b_s2", "b_s3", "b_s4", "b_s5",
                       "a_s1", "a_s2", "a_s3", "a_s4", "a_s5"});
        for (int i = 0; i < 36; ++i) {
            const auto& bs = r.baseline_station[static_cast<std::size_t>(i)];
            const auto& as = r.agent_station[static_cast<std::size_t>(i)];
            csv.row(i, r.baseline_mean[static_cast<std::size_t>(i)], r.baseline_se[static_cast<std::size_t>(i)],
                    r.agent_mean[static_cast<std::size_t>(i)], r.agent_se[static_cast<std::size_t>(i)],
                    r.baseline_count[static_cast<std::size_t>(i)], r.agent_count[static_cast<std::size_t>(i)],
                    bs[0], bs[1], bs[2], bs[3], bs[4], as[0], as[1], as[2], as[3], as[4]);
        }
    }
    {
        std::ofstream os(dir + "/" + prefix + "_summary.csv");
        CsvWriter csv(os, "deploy-summary", 1,
                      {"runs", "window_lo", "window_hi", "baseline_window_speed",
                       "agent_window_speed", "improvement_pct", "baseline_episode_speed",
                       "agent_episode_speed", "s1_improvement_pct",
                       "s2_improvement_pct", "s3_improvement_pct", "s4_improvement_pct",
                       "s5_improvement_pct", "mean_f1", "mean_f2"});
        csv.row(r.runs, r.window_lo, r.window_hi, r.baseline_window_speed, r.agent_window_speed,
                r.improvement_pct, r.baseline_episode_speed, r.agent_episode_speed,
                r.station_improvement_pct[0], r.station_improvement_pct[1],
                r.station_improvement_pct[2], r.station_improvement_pct[3],
                r.station_improvement_pct[4], r.mean_f1, r.mean_f2);
    }
    {
        SvgPlot plot(prefix + ": mean station speed per interval", "10-minute interval",
                     "speed (mi/h)");
        PlotSeries base{"no action", "#d62728", {}, {}, false};
        PlotSeries agent{"agent", "#1f77b4", {}, {}, false};
        for (int i = 0; i < 36; ++i) {
            base.x.push_back(i);
            base.y.push_back(r.baseline_mean[static_cast<std::size_t>(i)]);
            agent.x.push_back(i);
            agent.y.push_back(r.agent_mean[static_cast<std::size_t>(i)]);
        }
        plot.add(base);
        plot.add(agent);
        plot.write(dir + "/" + prefix + "_speeds.svg");
    }
    {
        SvgPlot plot(prefix + ": through vehicles per interval", "10-minute interval",
                     "vehicles / interval");
        PlotSeries base{"no action", "#d62728", {}, {}, false};
        PlotSeries agent{"agent", "#1f77b4", {}, {}, false};
        for (int i = 0; i < 36; ++i) {
            base.x.push_back(i);
            base.y.push_back(r.baseline_count[static_cast<std::size_t>(i)]);
            agent.x.push_back(i);
            agent.y.push_back(r.agent_count[static_cast<std::size_t>(i)]);
        }
        plot.add(base);
        plot.add(agent);
        plot.write(dir + "/" + prefix + "_counts.svg");
    }
}

// --- commands ---------------------------------------------------------------

// Train the configured agent and write checkpoint + training log.
inline TrainedAgent cmd_train(const ExperimentConfig& cfg, const std::string& tag = "") {
    auto net = cfg.build_net();
    EpisodeConfig ep = cfg.episode(*net, cfg.accident);
    Env env(net, ep);
    AgentConfig acfg = cfg.agent;
    acfg.reward_scale = default_reward_scale(cfg.reward, *net);
    const TrainedAgent agent = train(cfg.agent.kind, env, acfg, cfg.train_seed_base);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string name = tag.empty()
                                 ? std::string(agent_kind_name(agent.kind)) + "_" +
                                       reward_kind_name(agent.reward_kind) + "_" +
                                       (cfg.accident ? "accident" : "no-accident")
                                 : tag;
    save_agent_file(cfg.out_dir + "/" + name + ".ckpt", agent);
    std::ofstream log(cfg.out_dir + "/" + name + "_train_log.csv");
    write_train_log_csv(log, agent.log);
    return agent;
}

// Deploy a greedy policy against the paired no-action baseline.
inline DeploymentReport cmd_deploy(const ExperimentConfig& cfg, const TrainedAgent& agent,
                                   const std::string& prefix = "deploy") {
    auto net = cfg.build_net();
    EpisodeConfig ep = cfg.episode(*net, cfg.accident);
    ep.obs_mode = ObsMode::Global;  // deployment always drives the full network
    ep.exits_enabled = {true, true};
    const auto seeds = cfg.deploy_seeds();
    const Policy policy = reuse_policy(agent, net);
    const auto base_runs = run_set(net, ep, seeds, no_action_policy(), cfg.threads);
    const auto agent_runs = run_set(net, ep, seeds, policy, cfg.threads);
    DeploymentReport r =
        aggregate_deployment(base_runs, agent_runs, net->config.fd_mainline.free_flow_speed);
    write_deployment_report(r, cfg.out_dir, prefix);
    return r;
}

struct GridResult {
    int epsilon_steps = 0;
    double gamma = 0.0;
    double learning_rate = 0.0;
    double score = 0.0;  // mean deployment reward on held-out seeds
};

// Small hyperparameter search over the three tuned parameters.
inline std::vector<GridResult> cmd_grid(const ExperimentConfig& cfg,
                                        const std::vector<int>& eps_steps,
                                        const std::vector<double>& gammas,
                                        const std::vector<double>& lrs) {
    if (eps_steps.empty() || gammas.empty() || lrs.empty())
        throw ContractViolation("grid: empty grid");
    auto net = cfg.build_net();
    std::vector<GridResult> results;
    for (int es : eps_steps)
        for (double g : gammas)
            for (double lr : lrs) {
                ExperimentConfig c = cfg;
                c.agent.epsilon_steps = es;
                c.agent.gamma = g;
                c.agent.learning_rate = lr;
                c.agent.episodes = cfg.grid_episodes;
                EpisodeConfig ep = c.episode(*net, c.accident);
                Env env(net, ep);
                AgentConfig acfg = c.agent;
                acfg.reward_scale = default_reward_scale(c.reward, *net);
                const TrainedAgent agent = train(c.agent.kind, env, acfg, c.train_seed_base);

                // Held-out evaluation seeds, greedy policy.
                std::vector<std::uint64_t> eval_seeds;
                for (int i = 0; i < cfg.grid_eval_runs; ++i)
                    eval_seeds.push_back(cfg.deploy_seed_base + 50000 + static_cast<std::uint64_t>(i));
                const Policy policy = reuse_policy(agent, net);
                EpisodeConfig eval_ep = c.episode(*net, c.accident);
                const auto runs = run_set(net, eval_ep, eval_seeds, policy, cfg.threads);
                double score = 0.0;
                for (const RunSeries& r : runs) {
                    if (cfg.reward == RewardKind::Speed) {
                        // deployment reward: mean corridor speed over the episode
                        double s = 0.0;
                        for (double v : r.mean_speed) s += v;
                        score += s / 36.0 / runs.size();
                    } else {
                        double s = 0.0;
                        for (double v : r.through_count) s += v;
                        score += s / runs.size();
                    }
                }
                results.push_back(GridResult{es, g, lr, score});
            }
    std::stable_sort(results.begin(), results.end(),
                     [](const GridResult& a, const GridResult& b) { return a.score > b.score; });

    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/grid.csv");
    CsvWriter csv(os, "grid-results", 1, {"rank", "epsilon_steps", "gamma", "learning_rate", "score"});
    for (std::size_t i = 0; i < results.size(); ++i)
        csv.row(i + 1, results[i].epsilon_steps, results[i].gamma, results[i].learning_rate,
                results[i].score);
    return results;
}

struct MfdSample {
    double rate = 0.0;
    int cell = 0;
    double density = 0.0;  // veh/mi/lane
    double flow = 0.0;     // veh/h/lane
    double speed = 0.0;    // mi/h
};

// Flow-density sweep: ramp each target injection rate up over 40 minutes and
// sample the interior mainline cells; the entrance cell doubles as the
// injection buffer and is excluded.
inline std::vector<MfdSample> cmd_mfd(const ExperimentConfig& cfg,
                                      const std::vector<double>& rates,
                                      int run_seconds = 5400) {
    if (rates.empty()) throw ContractViolation("mfd: empty sweep");
    auto net = cfg.build_net();
    std::vector<MfdSample> samples;
    std::vector<double> before;
    for (double rate : rates) {
        if (rate < 0.0) throw ContractViolation("mfd: negative rate");
        SimState st = SimState::make(*net, 1);
        for (int t = 0; t < run_seconds; ++t) {
            inject(st, *net, rate * std::min(1.0, t / 2400.0));
            // Snapshot the occupancies the step will act on, so each sample's
            // density and flow describe the same instant.
            const bool sampling = t >= 120 && t % 30 == 0;
            if (sampling) {
                before.assign(net->cells.size(), 0.0);
                for (std::size_t i = 0; i < net->cells.size(); ++i)
                    for (double v : st.occupancy[i]) before[i] += v;
            }
            step(st, *net, StepSplits{});
            if (sampling) {
                for (std::size_t k = 1; k < net->mainline.size(); ++k) {
                    const int id = net->mainline[k];
                    const Cell& c = net->cell(id);
                    MfdSample s;
                    s.rate = rate;
                    s.cell = id;
                    s.density = before[static_cast<std::size_t>(id)] / (c.lanes * c.length_mi());
                    s.flow = st.last_outflow[static_cast<std::size_t>(id)] * kSecondsPerHour / c.lanes;
                    s.speed = s.density > 1e-9 ? s.flow / s.density : c.fd.free_flow_speed;
                    samples.push_back(s);
                }
            }
        }
    }

    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream os(cfg.out_dir + "/mfd_samples.csv");
        CsvWriter csv(os, "mfd-samples", 1, {"rate", "cell", "density", "flow", "speed"});
        for (const MfdSample& s : samples) csv.row(s.rate, s.cell, s.density, s.flow, s.speed);
    }
    {
        std::ofstream os(cfg.out_dir + "/mfd_envelope.csv");
        CsvWriter csv(os, "mfd-envelope", 1, {"density", "flow", "speed"});
        const FundamentalDiagram& fd = net->config.fd_mainline;
        for (double d = 0.0; d <= fd.jam_density; d += 2.0)
            csv.row(d, triangular_flow(d, fd), speed_from_density(d, fd));
    }
    {
        SvgPlot plot("flow-density samples", "density (veh/mi/lane)", "flow (veh/h/lane)");
        PlotSeries sc{"samples", "#1f77b4", {}, {}, true};
        for (const MfdSample& s : samples) {
            sc.x.push_back(s.density);
            sc.y.push_back(s.flow);
        }
        PlotSeries env{"triangular envelope", "#d62728", {}, {}, false};
        const FundamentalDiagram& fd = net->config.fd_mainline;
        for (double d = 0.0; d <= fd.jam_density; d += 2.0) {
            env.x.push_back(d);
            env.y.push_back(triangular_flow(d, fd));
        }
        plot.add(sc);
        plot.add(env);
        plot.write(cfg.out_dir + "/mfd_flow_density.svg");
    }
    {
        SvgPlot plot("speed-density samples", "density (veh/mi/lane)", "speed (mi/h)");
        PlotSeries sc{"samples", "#1f77b4", {}, {}, true};
        for (const MfdSample& s : samples) {
            sc.x.push_back(s.density);
            sc.y.push_back(s.speed);
        }
        plot.add(sc);
        plot.write(cfg.out_dir + "/mfd_speed_density.svg");
    }
    return samples;
}

// Deploy one checkpoint at several compliance levels with shared seeds.
inline std::vector<std::pair<double, DeploymentReport>> cmd_hc_sweep(
    const ExperimentConfig& cfg, const TrainedAgent& agent, const std::vector<double>& hc_values) {
    if (hc_values.empty()) throw ContractViolation("hc-sweep: empty list");
    std::vector<std::pair<double, DeploymentReport>> out;
    for (double hc : hc_values) {
        if (!(hc > 0.0 && hc <= 1.0)) throw ContractViolation("hc-sweep: HC must be in (0,1]");
        ExperimentConfig c = cfg;
        c.compliance = hc;
        char buf[32];
        std::snprintf(buf, sizeof buf, "hc_%02.0f", hc * 100.0);
        out.emplace_back(hc, cmd_deploy(c, agent, buf));
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/hc_sweep.csv");
    CsvWriter csv(os, "hc-sweep", 1,
                  {"hc", "baseline_window_speed", "agent_window_speed", "improvement_pct"});
    for (const auto& [hc, r] : out)
        csv.row(hc, r.baseline_window_speed, r.agent_window_speed, r.improvement_pct);
    SvgPlot plot("compliance sweep: mean speed per interval", "10-minute interval", "speed (mi/h)");
    const char* colors[] = {"#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"};
    int ci = 0;
    for (const auto& [hc, r] : out) {
        char label[32];
        std::snprintf(label, sizeof label, "HC=%.0f%%", hc * 100.0);
        PlotSeries s{label, colors[ci++ % 4], {}, {}, false};
        for (int i = 0; i < 36; ++i) {
            s.x.push_back(i);
            s.y.push_back(r.agent_mean[static_cast<std::size_t>(i)]);
        }
        plot.add(s);
    }
    plot.write(cfg.out_dir + "/hc_sweep.svg");
    return out;
}

struct TransferReport {
    DeploymentReport reference;  // agent trained for the target task
    DeploymentReport transferred;
    double gap_pct = 0.0;  // transferred vs reference window speed
    int intervals_within_band = 0;
};

// Policy-reuse comparison: deploy the transferred policy and the reference
// policy on the same accident episodes.
inline TransferReport cmd_transfer(const ExperimentConfig& cfg, const TrainedAgent& reference,
                                   const TrainedAgent& transferred, const std::string& prefix) {
    ExperimentConfig c = cfg;
    c.accident = true;
    TransferReport out;
    out.reference = cmd_deploy(c, reference, prefix + "_reference");
    out.transferred = cmd_deploy(c, transferred, prefix + "_transferred");
    // Gap on the episode-mean deployment speed across all 36 intervals.
    out.gap_pct = (out.transferred.agent_episode_speed - out.reference.agent_episode_speed) /
                  out.reference.agent_episode_speed * 100.0;
    for (int i = 0; i < 36; ++i) {
        const double band = 2.0 * out.reference.agent_se[static_cast<std::size_t>(i)] + 1.0;
        if (std::abs(out.transferred.agent_mean[static_cast<std::size_t>(i)] -
                     out.reference.agent_mean[static_cast<std::size_t>(i)]) <= band)
            ++out.intervals_within_band;
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/" + prefix + "_gap.csv");
    CsvWriter csv(os, "transfer-gap", 1,
                  {"interval", "reference_speed", "transferred_speed", "gap"});
    for (int i = 0; i < 36; ++i)
        csv.row(i, out.reference.agent_mean[static_cast<std::size_t>(i)],
                out.transferred.agent_mean[static_cast<std::size_t>(i)],
                out.transferred.agent_mean[static_cast<std::size_t>(i)] -
                    out.reference.agent_mean[static_cast<std::size_t>(i)]);
    return out;
}

// Demand profile CSV + plot (base profile and the first jittered variants).
inline void cmd_profile_gen(const ExperimentConfig& cfg, int variants = 5) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream os(cfg.out_dir + "/profiles.csv");
    CsvWriter csv(os, "demand-profiles", 1, {"variant", "t_s", "rate_vph"});
    SvgPlot plot("injected demand profiles", "time since 6:00 AM (s)", "rate (veh/h)");
    const char* colors[] = {"#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#d62728"};
    for (int v = 0; v <= variants; ++v) {
        InjectionProfile p = cfg.profile;
        if (v > 0) {
            ProfileJitter j = cfg.jitter;
            j.seed = cfg.deploy_seed_base + static_cast<std::uint64_t>(v) - 1;
            p = randomize(cfg.profile, j);
        }
        PlotSeries s{v == 0 ? "base" : "variant " + std::to_string(v), colors[v % 6], {}, {}, false};
        for (double t = 0.0; t <= p.horizon; t += 60.0) {
            const double rate = injection_rate(p, t);
            csv.row(v, t, rate);
            s.x.push_back(t);
            s.y.push_back(rate);
        }
        plot.add(s);
    }
    plot.write(cfg.out_dir + "/profiles.svg");
}

}  // namespace detourlab
