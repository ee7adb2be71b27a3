// Command-line front end: train, grid, deploy, mfd, hc-sweep, transfer and
// profile-gen subcommands over a shared experiment config.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.
#include <CLI11.hpp>

#include <iostream>

#include "detourlab/experiments.hpp"

using namespace detourlab;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int runs = 20;
};

ExperimentConfig load_experiment(const GlobalArgs& g) {
    ExperimentConfig cfg;
    if (!g.config_path.empty())
        cfg = ExperimentConfig::from_config(ConfigFile::parse_file(g.config_path));
    cfg.out_dir = g.out_dir;
    cfg.deploy_seed_base = g.seed;
    cfg.agent.seed = g.seed;
    cfg.runs = g.runs;
    return cfg;
}

std::vector<double> parse_doubles(const std::vector<std::string>& in) {
    std::vector<double> out;
    for (const std::string& s : in) out.push_back(std::stod(s));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"detourlab: freeway detour control testbed"};
    app.require_subcommand(1);
    app.fallthrough(true);  // accept global flags after the subcommand

    GlobalArgs g;
    app.add_option("--config", g.config_path, "experiment config file");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--seed", g.seed, "base seed for deployments / training");
    app.add_option("--runs", g.runs, "number of deployment runs");

    // train
    auto* train_cmd = app.add_subcommand("train", "train an agent and write a checkpoint");
    std::string agent_kind = "a2c", reward = "speed", scenario = "no-accident", observation = "global";
    int episodes = -1;
    bool early_stop = false;
    train_cmd->add_option("--agent", agent_kind, "a2c | dqn");
    train_cmd->add_option("--reward", reward, "speed | count");
    train_cmd->add_option("--scenario", scenario, "no-accident | accident");
    train_cmd->add_option("--observation", observation, "global | local_exit1");
    train_cmd->add_option("--episodes", episodes, "training episodes (default 600)");
    train_cmd->add_flag("--early-stop", early_stop, "stop on reward plateau");

    // grid
    auto* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
    std::vector<std::string> grid_eps{"12000", "15000", "18000"};
    std::vector<std::string> grid_gamma{"0.85", "0.9"};
    std::vector<std::string> grid_lr{"0.001"};
    int grid_episodes = 60;
    grid_cmd->add_option("--epsilon-steps", grid_eps, "exploration horizon candidates");
    grid_cmd->add_option("--gamma", grid_gamma, "discount candidates");
    grid_cmd->add_option("--lr", grid_lr, "learning-rate candidates");
    grid_cmd->add_option("--episodes", grid_episodes, "training episodes per grid cell");
    grid_cmd->add_option("--agent", agent_kind, "a2c | dqn");
    grid_cmd->add_option("--scenario", scenario, "no-accident | accident");

    // deploy
    auto* deploy_cmd = app.add_subcommand("deploy", "evaluate a checkpoint against no action");
    std::string checkpoint;
    deploy_cmd->add_option("checkpoint", checkpoint, "agent checkpoint")->required();
    deploy_cmd->add_option("--scenario", scenario, "no-accident | accident");
    std::string hc = "1.0";
    deploy_cmd->add_option("--compliance", hc, "driver compliance in (0,1]");

    // mfd
    auto* mfd_cmd = app.add_subcommand("mfd", "flow-density sweep of the network");
    std::vector<std::string> sweep_rates;
    mfd_cmd->add_option("--rates", sweep_rates, "injection rates (veh/h)");

    // hc-sweep
    auto* hc_cmd = app.add_subcommand("hc-sweep", "deploy at several compliance levels");
    std::vector<std::string> hc_values{"1.0", "0.8", "0.6"};
    hc_cmd->add_option("checkpoint", checkpoint, "agent checkpoint")->required();
    hc_cmd->add_option("--hc", hc_values, "compliance levels");
    hc_cmd->add_option("--scenario", scenario, "no-accident | accident");

    // transfer
    auto* transfer_cmd = app.add_subcommand("transfer", "policy-reuse comparison");
    int transfer_scenario = 1;
    std::string source_ckpt, reference_ckpt;
    transfer_cmd->add_option("--mode", transfer_scenario, "1 = cross-scenario reuse, 2 = per-exit replication")
        ->check(CLI::Range(1, 2));
    transfer_cmd->add_option("--source", source_ckpt, "transferred checkpoint")->required();
    transfer_cmd->add_option("--reference", reference_ckpt, "reference checkpoint")->required();

    // profile-gen
    auto* prof_cmd = app.add_subcommand("profile-gen", "emit demand profile CSV for plotting");
    int variants = 5;
    prof_cmd->add_option("--variants", variants, "number of jittered variants");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg = load_experiment(g);
        cfg.accident = scenario == "accident";
        cfg.reward = reward == "count" ? RewardKind::Count : RewardKind::Speed;
        cfg.obs_mode = observation == "local_exit1" ? ObsMode::LocalExit1 : ObsMode::Global;
        if (agent_kind == "dqn") {
            const AgentConfig keep = cfg.agent;
            cfg.agent = dqn_preset();
            cfg.agent.episodes = keep.episodes;
            cfg.agent.seed = keep.seed;
        }

        if (*train_cmd) {
            if (agent_kind != "a2c" && agent_kind != "dqn") {
                std::cerr << "unknown agent kind: " << agent_kind << "\n";
                return 2;
            }
            if (scenario != "accident" && scenario != "no-accident") {
                std::cerr << "unknown scenario: " << scenario << "\n";
                return 2;
            }
            if (episodes >= 0) cfg.agent.episodes = episodes;
            cfg.agent.early_stop = early_stop;
            const TrainedAgent agent = cmd_train(cfg);
            std::cout << "trained " << agent_kind_name(agent.kind) << " for "
                      << agent.log.size() << " episodes; checkpoint written to " << cfg.out_dir
                      << "\n";
            return 0;
        }
        if (*grid_cmd) {
            cfg.grid_episodes = grid_episodes;
            std::vector<int> es;
            for (const std::string& s : grid_eps) es.push_back(std::stoi(s));
            const auto results = cmd_grid(cfg, es, parse_doubles(grid_gamma), parse_doubles(grid_lr));
            std::cout << "grid results (best first):\n";
            for (const GridResult& r : results)
                std::cout << "  eps_steps=" << r.epsilon_steps << " gamma=" << r.gamma
                          << " lr=" << r.learning_rate << " score=" << r.score << "\n";
            return 0;
        }
        if (*deploy_cmd) {
            cfg.compliance = std::stod(hc);
            const TrainedAgent agent = load_agent_file(checkpoint);
            const DeploymentReport r = cmd_deploy(cfg, agent);
            std::cout << "runs=" << r.runs << " window=[" << r.window_lo << "," << r.window_hi
                      << "] baseline=" << r.baseline_window_speed
                      << " agent=" << r.agent_window_speed << " improvement=" << r.improvement_pct
                      << "%\n";
            return 0;
        }
        if (*mfd_cmd) {
            if (sweep_rates.empty()) {
                std::cerr << "mfd: provide at least one --rates value\n";
                return 2;
            }
            const auto samples = cmd_mfd(cfg, parse_doubles(sweep_rates));
            std::cout << "sampled " << samples.size() << " (density, flow, speed) points into "
                      << cfg.out_dir << "\n";
            return 0;
        }
        if (*hc_cmd) {
            const TrainedAgent agent = load_agent_file(checkpoint);
            const auto reports = cmd_hc_sweep(cfg, agent, parse_doubles(hc_values));
            for (const auto& [h, r] : reports)
                std::cout << "HC=" << h << " window speed " << r.agent_window_speed << " (baseline "
                          << r.baseline_window_speed << ")\n";
            return 0;
        }
        if (*transfer_cmd) {
            const TrainedAgent reference = load_agent_file(reference_ckpt);
            const TrainedAgent source = load_agent_file(source_ckpt);
            const std::string prefix = transfer_scenario == 1 ? "transfer1" : "transfer2";
            const TransferReport r = cmd_transfer(cfg, reference, source, prefix);
            std::cout << "reference window speed " << r.reference.agent_window_speed
                      << ", transferred " << r.transferred.agent_window_speed << " (gap "
                      << r.gap_pct << "%), intervals within band: " << r.intervals_within_band
                      << "/36\n";
            return 0;
        }
        if (*prof_cmd) {
            cmd_profile_gen(cfg, variants);
            std::cout << "profiles written to " << cfg.out_dir << "\n";
            return 0;
        }
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const ContractViolation& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
