// Value-iteration (DQN) and policy-gradient (A2C) learners over the detour
// MDP, the shared linear exploration schedule, the training loop, and agent
// checkpoints for policy reuse.
#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <fstream>
#include <sstream>

#include "detourlab/env.hpp"
#include "detourlab/neuralnet.hpp"

namespace detourlab {

enum class AgentKind { Dqn, A2c };

inline const char* agent_kind_name(AgentKind k) { return k == AgentKind::Dqn ? "dqn" : "a2c"; }

struct AgentConfig {
    AgentKind kind = AgentKind::A2c;
    double gamma = 0.85;
    double epsilon_start = 0.98;
    double epsilon_final = 0.07;
    int epsilon_steps = 18000;   // decision steps from eps_start to eps_final
    double learning_rate = 0.001;
    int hidden = 256;
    std::size_t replay_capacity = 50000;
    int batch_size = 64;
    int target_sync_period = 200;
    double entropy_coeff = 0.01;
    double grad_clip = 20.0;
    double reward_scale = 1.0 / 60.0;  // set per reward kind by the trainer
    int episodes = 1200;
    bool early_stop = false;  // moving-average plateau test
    std::uint64_t seed = 1;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("agent: gamma must be in [0,1)");
        if (!(epsilon_final >= 0.0 && epsilon_final <= epsilon_start && epsilon_start <= 1.0))
            throw ConfigError("agent: need 0 <= eps_final <= eps_start <= 1");
        if (epsilon_steps <= 0) throw ConfigError("agent: epsilon_steps must be > 0");
        if (!(learning_rate > 0.0)) throw ConfigError("agent: learning_rate must be > 0");
        if (batch_size <= 0 || replay_capacity < static_cast<std::size_t>(batch_size))
            throw ConfigError("agent: bad replay sizing");
        if (episodes < 0) throw ConfigError("agent: negative episode count");
    }
};

// Best-found presets from the hyperparameter search.
inline AgentConfig dqn_preset() {
    AgentConfig c;
    c.kind = AgentKind::Dqn;
    c.epsilon_steps = 15000;
    c.gamma = 0.9;
    c.learning_rate = 0.001;
    return c;
}

inline AgentConfig a2c_preset() {
    AgentConfig c;
    c.kind = AgentKind::A2c;
    c.epsilon_steps = 18000;
    c.gamma = 0.85;
    c.learning_rate = 0.001;
    return c;
}

// Linear decay from eps_start to eps_final over epsilon_steps, flat after.
inline double epsilon_at(long long t, const AgentConfig& cfg) {
    if (t < 0) throw ContractViolation("epsilon_at: negative step");
    if (t >= cfg.epsilon_steps) return cfg.epsilon_final;
    const double frac = static_cast<double>(t) / cfg.epsilon_steps;
    return cfg.epsilon_start + (cfg.epsilon_final - cfg.epsilon_start) * frac;
}

struct Transition {
    Observation state;
    int action = 0;
    double reward = 0.0;
    Observation next_state;
    bool terminal = false;
};

// Fixed-capacity ring with uniform without-replacement batch sampling.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw ConfigError("replay: zero capacity");
    }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return data_.size(); }

    // Distinct indices within a batch (Floyd's algorithm).
    std::vector<const Transition*> sample(int batch, Rng& rng) const {
        if (batch <= 0 || static_cast<std::size_t>(batch) > data_.size())
            throw ContractViolation("replay: batch larger than buffer");
        const std::size_t n = data_.size();
        std::vector<std::size_t> picked;
        picked.reserve(static_cast<std::size_t>(batch));
        for (std::size_t j = n - static_cast<std::size_t>(batch); j < n; ++j) {
            std::size_t t = rng.below(j + 1);
            bool dup = false;
            for (std::size_t v : picked)
                if (v == t) dup = true;
            picked.push_back(dup ? j : t);
        }
        std::vector<const Transition*> out;
        out.reserve(picked.size());
        for (std::size_t i : picked) out.push_back(&data_[i]);
        return out;
    }

  private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
};

inline int argmax_lowest(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

// Epsilon-greedy over Q values; ties break toward the lowest action index.
inline int dqn_select(const MlpParams& q, const Observation& state, double eps, Rng& rng) {
    if (eps > 0.0 && rng.uniform01() < eps)
        return static_cast<int>(rng.below(static_cast<std::uint64_t>(q.output_size())));
    const auto qv = forward(q, state);
    return argmax_lowest(qv);
}

// One DQN step: targets y = r + gamma * max_a' Qt(s',a') (y = r at terminal),
// mean squared error over the batch, one SGD update, periodic target sync.
inline double dqn_update(MlpParams& q, MlpParams& target, std::span<const Transition* const> batch,
                         const AgentConfig& cfg, int& updates_done) {
    if (batch.empty()) throw ContractViolation("dqn_update: empty batch");
    MlpGrads grads = MlpGrads::zeros_like(q);
    double loss = 0.0;
    ForwardTrace trace;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const Transition* t : batch) {
        double y = t->reward;
        if (!t->terminal) {
            const auto qn = forward(target, t->next_state);
            y += cfg.gamma * *std::max_element(qn.begin(), qn.end());
        }
        const auto qv = forward_traced(q, t->state, trace);
        const double diff = qv[static_cast<std::size_t>(t->action)] - y;
        loss += 0.5 * diff * diff * inv;
        std::vector<double> dout(qv.size(), 0.0);
        dout[static_cast<std::size_t>(t->action)] = diff * inv;
        backward(q, trace, dout, grads);
    }
    if (!std::isfinite(loss)) throw ContractViolation("dqn_update: non-finite loss");
    sgd_step(q, grads, SgdConfig{cfg.learning_rate, cfg.grad_clip});
    ++updates_done;
    if (cfg.target_sync_period > 0 && updates_done % cfg.target_sync_period == 0) target = q;
    return loss;
}

// One A2C step over a rollout. Advantages use the discounted return to the
// end of the rollout with the critic's value as baseline,
//   A_t = sum_k gamma^(k-t) r_k + gamma^(T-t) V(s_T) - V(s_t),
// which reduces to A = r + gamma V(s') - V(s) for a single transition. The
// actor descends the advantage-weighted cross entropy plus an entropy bonus;
// the critic regresses V(s_t) onto the same returns. Gradients are summed
// over the rollout and applied as one SGD step per network.
inline void a2c_update(MlpParams& actor, MlpParams& critic,
                       std::span<const Transition> rollout, const AgentConfig& cfg) {
    if (rollout.empty()) throw ContractViolation("a2c_update: empty rollout");
    MlpGrads ga = MlpGrads::zeros_like(actor);
    MlpGrads gc = MlpGrads::zeros_like(critic);
    ForwardTrace trace;
    std::vector<double> dH;

    // Returns to go, bootstrapped with V only past the rollout's end.
    const Transition& last = rollout.back();
    double ret = last.terminal ? 0.0 : forward(critic, last.next_state)[0];
    std::vector<double> returns(rollout.size());
    for (std::size_t k = rollout.size(); k-- > 0;) {
        ret = rollout[k].reward + cfg.gamma * ret;
        returns[k] = ret;
    }

    for (std::size_t k = 0; k < rollout.size(); ++k) {
        const Transition& t = rollout[k];
        const double v = forward(critic, t.state)[0];
        const double advantage = returns[k] - v;
        if (!std::isfinite(advantage)) throw ContractViolation("a2c_update: non-finite advantage");

        const auto logits = forward_traced(actor, t.state, trace);
        auto ce = softmax_cross_entropy(logits, t.action, advantage);
        entropy_bonus_grad(logits, cfg.entropy_coeff, dH);
        for (std::size_t i = 0; i < ce.dlogits.size(); ++i) ce.dlogits[i] += dH[i];
        backward(actor, trace, ce.dlogits, ga);

        forward_traced(critic, t.state, trace);
        std::vector<double> dv{v - returns[k]};
        backward(critic, trace, dv, gc);
    }
    sgd_step(actor, ga, SgdConfig{cfg.learning_rate, cfg.grad_clip});
    sgd_step(critic, gc, SgdConfig{cfg.learning_rate, cfg.grad_clip});
}

// Sample from the softmax policy with an epsilon floor of uniform exploration.
inline int a2c_select(const MlpParams& actor, const Observation& state, double eps, Rng& rng) {
    if (eps > 0.0 && rng.uniform01() < eps)
        return static_cast<int>(rng.below(static_cast<std::uint64_t>(actor.output_size())));
    const auto p = softmax(forward(actor, state));
    double u = rng.uniform01();
    for (std::size_t i = 0; i < p.size(); ++i) {
        u -= p[i];
        if (u <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

struct TrainLogRow {
    int episode = 0;
    double sum_reward_speed = 0.0;
    double sum_reward_count = 0.0;
    double mean_epsilon = 0.0;
    double wall_ms = 0.0;
};

struct TrainedAgent {
    AgentKind kind = AgentKind::A2c;
    MlpParams primary;            // Q network or actor
    MlpParams secondary;          // target network or critic
    AgentConfig config;
    ObsMode obs_mode = ObsMode::Global;
    RewardKind reward_kind = RewardKind::Speed;
    std::vector<TrainLogRow> log;

    // Greedy action for deployment.
    int act_greedy(const Observation& obs) const {
        const auto v = forward(primary, obs);
        return argmax_lowest(v);
    }
};

inline void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
    os << "schema=train-log,v=1\n";
    os << "episode,sum_r_speed,sum_r_count,mean_epsilon,wall_ms\n";
    for (const TrainLogRow& r : log)
        os << r.episode << ',' << r.sum_reward_speed << ',' << r.sum_reward_count << ','
           << r.mean_epsilon << ',' << r.wall_ms << '\n';
}

// Train an agent on the given environment. Episode e is seeded with
// seed_base + e; the exploration clock runs across episodes.
inline TrainedAgent train(AgentKind kind, Env& env, const AgentConfig& cfg_in,
                          std::uint64_t seed_base = 1000) {
    AgentConfig cfg = cfg_in;
    cfg.kind = kind;
    cfg.validate();

    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + 12345);
    const int obs = env.observation_size();
    const int actions = env.action_count();
    const std::vector<int> shape{obs, cfg.hidden, cfg.hidden, actions};
    const std::vector<int> vshape{obs, cfg.hidden, cfg.hidden, 1};

    TrainedAgent agent;
    agent.kind = kind;
    agent.config = cfg;
    agent.obs_mode = env.config().obs_mode;
    agent.reward_kind = env.config().reward_kind;
    agent.primary = make_mlp(shape, rng);
    agent.secondary = kind == AgentKind::Dqn ? agent.primary : make_mlp(vshape, rng);

    ReplayBuffer replay(cfg.replay_capacity);
    long long global_step = 0;
    int updates_done = 0;
    std::deque<double> recent;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        Observation state = env.reset(seed_base + static_cast<std::uint64_t>(ep));
        std::vector<Transition> rollout;
        TrainLogRow row;
        row.episode = ep;
        double eps_sum = 0.0;
        int steps = 0;
        bool done = false;
        while (!done) {
            const double eps = epsilon_at(global_step, cfg);
            eps_sum += eps;
            ++steps;
            const int a = kind == AgentKind::Dqn ? dqn_select(agent.primary, state, eps, rng)
                                                 : a2c_select(agent.primary, state, eps, rng);
            const EnvStepResult res = env.step_env(a);
            Transition t{state, a, res.reward * cfg.reward_scale, res.state, res.done};
            state = res.state;
            done = res.done;
            row.sum_reward_speed += res.reward_speed;
            row.sum_reward_count += res.reward_count;
            ++global_step;
            if (kind == AgentKind::Dqn) {
                replay.push(std::move(t));
                if (replay.size() >= static_cast<std::size_t>(cfg.batch_size)) {
                    const auto batch = replay.sample(cfg.batch_size, rng);
                    dqn_update(agent.primary, agent.secondary, batch, cfg, updates_done);
                }
            } else {
                rollout.push_back(std::move(t));
            }
        }
        if (kind == AgentKind::A2c) a2c_update(agent.primary, agent.secondary, rollout, cfg);

        row.mean_epsilon = steps > 0 ? eps_sum / steps : 0.0;
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
        agent.log.push_back(row);

        if (cfg.early_stop) {
            const double objective = env.config().reward_kind == RewardKind::Speed
                                         ? row.sum_reward_speed
                                         : row.sum_reward_count;
            recent.push_back(objective);
            if (recent.size() > 100) recent.pop_front();
            if (ep >= 300 && ep % 50 == 0 && recent.size() == 100) {
                // Least-squares slope of the last 100 episode returns.
                double sx = 0, sy = 0, sxy = 0, sxx = 0;
                for (std::size_t i = 0; i < recent.size(); ++i) {
                    sx += static_cast<double>(i);
                    sy += recent[i];
                    sxy += static_cast<double>(i) * recent[i];
                    sxx += static_cast<double>(i) * i;
                }
                const double n = static_cast<double>(recent.size());
                const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
                const double mean = sy / n;
                if (std::abs(slope) * 100.0 < 0.005 * std::max(std::abs(mean), 1e-9)) break;
            }
        }
    }
    return agent;
}

// --- checkpointing and policy reuse ----------------------------------------

inline const char* obs_mode_name(ObsMode m) { return m == ObsMode::Global ? "global44" : "local10"; }
inline const char* reward_kind_name(RewardKind k) { return k == RewardKind::Speed ? "speed" : "count"; }

inline void save_agent(std::ostream& os, const TrainedAgent& agent) {
    os << "detourlab-agent v1\n";
    os << "kind " << agent_kind_name(agent.kind) << '\n';
    os << "obs " << obs_mode_name(agent.obs_mode) << '\n';
    os << "reward " << reward_kind_name(agent.reward_kind) << '\n';
    os << "gamma " << agent.config.gamma << '\n';
    os << "epsilon_steps " << agent.config.epsilon_steps << '\n';
    os << "learning_rate " << agent.config.learning_rate << '\n';
    os << "nets 2\n";
    save_mlp(os, agent.primary);
    save_mlp(os, agent.secondary);
}

inline void save_agent_file(const std::string& path, const TrainedAgent& agent) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write checkpoint: " + path);
    save_agent(os, agent);
}

inline TrainedAgent load_agent(std::istream& is) {
    std::string word, version;
    is >> word >> version;
    if (word != "detourlab-agent" || version != "v1")
        throw ConfigError("checkpoint: unknown container version");
    TrainedAgent agent;
    std::string kind, obs, reward;
    is >> word >> kind;
    if (word != "kind") throw ConfigError("checkpoint: missing agent kind");
    agent.kind = kind == "dqn" ? AgentKind::Dqn : AgentKind::A2c;
    is >> word >> obs;
    if (word != "obs") throw ConfigError("checkpoint: missing obs mode");
    if (obs != "global44" && obs != "local10") throw ConfigError("checkpoint: unknown obs mode");
    agent.obs_mode = obs == "global44" ? ObsMode::Global : ObsMode::LocalExit1;
    is >> word >> reward;
    agent.reward_kind = reward == "count" ? RewardKind::Count : RewardKind::Speed;
    is >> word >> agent.config.gamma;
    is >> word >> agent.config.epsilon_steps;
    is >> word >> agent.config.learning_rate;
    int nets = 0;
    is >> word >> nets;
    if (word != "nets" || nets != 2) throw ConfigError("checkpoint: bad net count");
    agent.primary = load_mlp(is);
    agent.secondary = load_mlp(is);
    agent.config.kind = agent.kind;
    return agent;
}

inline TrainedAgent load_agent_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read checkpoint: " + path);
    return load_agent(is);
}

// Deployment policies map the previous interval's loop readings to the next
// joint action, and report the expected duty fractions under the policy's
// action distribution (for a deterministic rule these equal the chosen
// action's fractions). The Rng carries the per-episode stream for policies
// that execute a stochastic decision rule; deterministic policies ignore it.
struct PolicyDecision {
    int action = 0;
    double expected_f1 = 0.0;
    double expected_f2 = 0.0;
};

using Policy = std::function<PolicyDecision(const std::vector<DetectorReading>&, Rng&)>;

inline PolicyDecision decision_for(int action) {
    const ActionTuple a = decode_action(action);
    return {action, a.f1, a.f2};
}

enum class DeployMode {
    Auto,    // the agent's own decision rule: sampled for A2C, greedy for DQN
    Greedy,  // argmax everywhere
};

// Deployable policy from a checkpoint, with no exploration mixed in. A global
// agent maps the 44-value state to one of 16 joint actions; an A2C agent
// executes its learned stochastic policy, a DQN agent its greedy one. A
// single-exit agent is replicated: each exit's 10-value local view picks that
// exit's duty fraction and the two choices combine into the joint action.
inline Policy reuse_policy(const TrainedAgent& agent, std::shared_ptr<const RoadNetwork> net,
                           DeployMode mode = DeployMode::Auto, bool normalize = true,
                           double window_s = 600.0) {
    if (agent.obs_mode == ObsMode::Global) {
        if (agent.primary.input_size() != 44 || agent.primary.output_size() != kActionCount)
            throw ConfigError("policy reuse: checkpoint does not match the 44-value state");
        MlpParams params = agent.primary;
        const bool sample = mode == DeployMode::Auto && agent.kind == AgentKind::A2c;
        return [params, net, normalize, window_s, sample](
                   const std::vector<DetectorReading>& readings, Rng& rng) {
            const Observation obs = encode_state(readings, *net, normalize, window_s);
            if (!sample) return decision_for(argmax_lowest(forward(params, obs)));
            PolicyDecision d;
            d.action = a2c_select(params, obs, 0.0, rng);
            const auto pi = softmax(forward(params, obs));
            for (int a = 0; a < kActionCount; ++a) {
                const ActionTuple t = decode_action(a);
                d.expected_f1 += pi[static_cast<std::size_t>(a)] * t.f1;
                d.expected_f2 += pi[static_cast<std::size_t>(a)] * t.f2;
            }
            return d;
        };
    }
    if (agent.primary.input_size() != 10 || agent.primary.output_size() != 4)
        throw ConfigError("policy reuse: checkpoint does not match the 10-value local view");
    MlpParams params = agent.primary;
    return [params, net, normalize, window_s](const std::vector<DetectorReading>& readings, Rng&) {
        const Observation o1 = local_observation(1, readings, *net, normalize, window_s);
        const Observation o2 = local_observation(2, readings, *net, normalize, window_s);
        const int f1 = argmax_lowest(forward(params, o1));
        const int f2 = argmax_lowest(forward(params, o2));
        return decision_for(f1 * 4 + f2);  // joint 16-way action
    };
}

inline double default_reward_scale(RewardKind kind, const RoadNetwork& net) {
    if (kind == RewardKind::Speed) return 1.0 / net.config.fd_mainline.free_flow_speed;
    // Count scale: through capacity over one control interval.
    const double cap = net.config.fd_mainline.capacity() * net.config.mainline_lanes / 6.0;
    return 1.0 / cap;
}

}  // namespace detourlab
