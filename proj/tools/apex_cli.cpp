#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "apex/harness/config.hpp"
#include "apex/harness/orchestrator.hpp"
#include "apex/harness/plotdata.hpp"
#include "apex/replay/snapshot_io.hpp"

using namespace apex;
using namespace apex::harness;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct ConfigArgs {
    std::string file;
    std::string preset;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", file, "key=value config file");
        app->add_option("-p,--preset", preset, "named preset");
        app->add_option("-s,--set", sets, "override, key=value (repeatable)");
    }
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::pair<std::string, std::string>> overrides(const ConfigArgs& a) {
    std::vector<std::pair<std::string, std::string>> out;
    if (!a.file.empty()) out = parse_kv_text(read_text(a.file));
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
}

void apply(RunConfig& c, const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) {
        if (k == "profile") {
            apply_profile(c, v);
        } else {
            c.set(k, v);
        }
    }
}

std::vector<Variant> variants(const ConfigArgs& a) {
    const auto kv = overrides(a);
    std::vector<Variant> out;
    if (a.preset.empty()) {
        out.push_back({"run", build_config(kv)});
    } else {
        out = experiment_preset(a.preset);
    }
    for (auto& v : out) {
        if (!a.preset.empty()) apply(v.config, kv);
        apply_env_overrides(v.config);
        v.config.validate();
    }
    return out;
}

RunConfig single(const ConfigArgs& a) {
    auto v = variants(a);
    if (v.size() != 1) throw ConfigError("preset '" + a.preset + "' has several variants; use `run`");
    return v.front().config;
}

void wait_for_signal() {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int cmd_run(const ConfigArgs& a, int seeds, const std::string& table_out, bool quiet) {
    std::vector<RunResult> results;
    for (const auto& v : variants(a)) {
        for (int s = 0; s < seeds && !g_stop; ++s) {
            auto c = v.config;
            c.seed = v.config.seed + static_cast<std::uint64_t>(s);
            RunHooks hooks;
            hooks.stop = &g_stop;
            hooks.log = quiet ? nullptr : &std::cerr;
            hooks.label = v.label;
            std::cerr << "== " << v.label << " seed " << c.seed << " run_id " << c.run_id() << "\n";
            auto r = run_local(c, hooks);
            std::cerr << "   updates " << r.learner.updates << " (" << r.learner.updates_per_sec << "/s), env steps "
                      << r.env_steps << ", solved " << (r.solved ? "yes at update " + std::to_string(r.updates_to_solve) : "no")
                      << (r.learner.halted ? ", halted: " + r.learner.halt_reason : "") << "\n";
            results.push_back(std::move(r));
        }
    }
    const auto table = comparison_table(results);
    std::cout << table;
    if (!table_out.empty()) {
        std::ofstream(table_out) << table;
    }
    for (const auto& r : results) {
        if (r.learner.halted) return 3;
    }
    return 0;
}

int cmd_replay_server(const ConfigArgs& a, std::string listen) {
    auto c = single(a);
    if (listen.empty()) listen = c.replay_endpoint;
    const fs::path ckpt = c.checkpoint_dir.empty() ? fs::path() : fs::path(c.checkpoint_dir) / c.run_id() / "replay.ckpt";
    std::shared_ptr<replay::ReplayMemory> memory;
    if (c.resume && !ckpt.empty() && fs::exists(ckpt)) {
        memory = replay::load_snapshot_file(ckpt, c.replay_config());
        std::cerr << "loaded " << memory->size() << " transitions from " << ckpt << "\n";
    } else {
        memory = std::make_shared<replay::ReplayMemory>(c.replay_config());
    }
    const auto instance = static_cast<std::uint64_t>(std::chrono::system_clock::now().time_since_epoch().count());
    auto service = std::make_shared<transport::ReplayService>(memory, instance);
    transport::TcpServer server(transport::Endpoint::parse(listen), transport::make_handler(service));
    server.start();
    std::cerr << "replay serving on " << server.endpoint().to_string() << "\n";
    wait_for_signal();
    server.stop();
    if (!ckpt.empty()) {
        fs::create_directories(ckpt.parent_path());
        replay::save_snapshot_file(*memory, ckpt);
    }
    const auto s = memory->stats();
    std::cerr << "replay stopped: size " << s.size << ", added " << s.total_added << ", removed " << s.total_removed
              << "\n";
    return 0;
}

int cmd_learner(const ConfigArgs& a, std::string replay_ep, std::string params_ep) {
    auto c = single(a);
    if (replay_ep.empty()) replay_ep = c.replay_endpoint;
    if (params_ep.empty()) params_ep = c.params_endpoint;
    auto params = std::make_shared<transport::ParamService>();
    transport::TcpServer server(transport::Endpoint::parse(params_ep), transport::make_handler(params));
    server.start();
    const auto peer = transport::Endpoint::parse(replay_ep);
    runtime::Learner learner(c.agent_spec(), c.learner_config(),
                             [peer] { return std::make_shared<transport::TcpChannel>(peer); }, params);
    const fs::path dir = c.checkpoint_dir.empty() ? fs::path() : fs::path(c.checkpoint_dir) / c.run_id();
    if (c.resume && !dir.empty() && fs::exists(dir / "learner.ckpt")) {
        learner.core().restore(runtime::read_file((dir / "learner.ckpt").string()));
        params->publish(learner.core().snapshot());
        std::cerr << "resumed at update " << learner.core().updates() << "\n";
    }
    if (c.checkpoint_period) learner.set_checkpointing((dir / "learner.ckpt").string(), c.checkpoint_period);
    std::unique_ptr<MetricsSink> sink;
    if (!c.metrics_dir.empty()) {
        sink = std::make_unique<MetricsSink>((fs::path(c.metrics_dir) / c.run_id() / "learner.csv").string(), "learner",
                                             c.run_id(), runtime::Learner::metrics_columns());
        learner.set_metrics(sink.get());
    }
    Evaluator evaluator(c);
    learner.set_eval_hook(c.eval_period, [&](const runtime::LearnerCore& core) {
        const auto p = evaluator.evaluate(core.networks(), core.params());
        std::cerr << "update " << core.updates() << " return " << p.mean_return << " discounted "
                  << p.discounted_return << "\n";
        return p.solved && c.stop_on_solve;
    });
    std::cerr << "learner serving parameters on " << server.endpoint().to_string() << ", replay at " << replay_ep
              << "\n";
    const auto r = learner.run(g_stop);
    server.stop();
    std::cerr << "learner done: " << r.updates << " updates, " << r.transitions_processed << " transitions, "
              << r.publishes << " publishes" << (r.halted ? ", halted: " + r.halt_reason : "") << "\n";
    return r.halted ? 3 : 0;
}

int cmd_actor(const ConfigArgs& a, std::uint32_t id, std::string replay_ep, std::string params_ep,
              std::uint64_t steps) {
    auto c = single(a);
    if (replay_ep.empty()) replay_ep = c.replay_endpoint;
    if (params_ep.empty()) params_ep = c.params_endpoint;
    auto ac = c.actor_config(id);
    ac.max_steps = steps;
    ac.validate();
    const auto rp = transport::Endpoint::parse(replay_ep);
    const auto pp = transport::Endpoint::parse(params_ep);
    runtime::Actor actor(c.agent_spec(), ac, [rp] { return std::make_shared<transport::TcpChannel>(rp); },
                         [pp] { return std::make_shared<transport::TcpChannel>(pp); });
    std::unique_ptr<MetricsSink> sink;
    if (!c.metrics_dir.empty()) {
        sink = std::make_unique<MetricsSink>(
            (fs::path(c.metrics_dir) / c.run_id() / ("actor-" + std::to_string(id) + ".csv")).string(), "actor",
            c.run_id(), runtime::Actor::metrics_columns());
        actor.set_metrics(sink.get());
    }
    const auto r = actor.run(g_stop);
    std::cerr << "actor " << id << " (epsilon " << r.epsilon << "): " << r.steps << " steps, " << r.episodes
              << " episodes, " << r.transitions_sent << " transitions sent, " << r.param_fetches << " fetches\n";
    return 0;
}

int cmd_eval(const ConfigArgs& a, std::string params_ep, const std::string& checkpoint, int episodes, double epsilon) {
    auto c = single(a);
    const auto spec = c.agent_spec();
    runtime::AgentNetworks nets(spec);
    std::vector<double> weights;
    if (!checkpoint.empty()) {
        runtime::LearnerCore core(spec, c.learner_config());
        core.restore(runtime::read_file(checkpoint));
        weights = core.params();
    } else {
        if (params_ep.empty()) params_ep = c.params_endpoint;
        transport::ParamsClient client(std::make_shared<transport::TcpChannel>(transport::Endpoint::parse(params_ep)));
        auto snap = client.fetch();
        if (!snap) {
            std::cerr << "no parameters published yet\n";
            return 2;
        }
        weights = snap->weights;
    }
    if (weights.size() != spec.parameter_count()) {
        std::cerr << "parameter count " << weights.size() << " does not match the configured network ("
                  << spec.parameter_count() << ")\n";
        return 2;
    }
    auto env = envs::make_env(c.env_id, c.episode_cap);
    const auto r = runtime::evaluate_policy(nets, weights, *env, episodes, epsilon, c.seed + 1000003, c.gamma);
    std::cout << "episodes " << episodes << " mean_return " << r.mean_return << " mean_discounted_return "
              << r.mean_discounted_return << " mean_length " << r.mean_length;
    if (!env->spec().actions.is_discrete()) std::cout << " mean_final_distance " << r.mean_final_distance;
    std::cout << "\n";
    return 0;
}

int cmd_plotdata(const std::vector<std::string>& inputs, const std::string& column, double step,
                 const std::string& out) {
    std::vector<Curve> curves;
    for (const auto& in : inputs) curves.push_back(read_curve(in, column));
    const auto table = aligned_table(curves, step, column);
    if (out.empty()) {
        std::cout << table;
    } else {
        std::ofstream(out) << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed prioritized replay: actors, replay server and learner"};
    app.require_subcommand(1);

    ConfigArgs run_args, replay_args, learner_args, actor_args, eval_args;
    int seeds = 1;
    std::string table_out;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "run every role in this process");
    run_args.attach(run);
    run->add_option("--seeds", seeds, "seeds per variant, counting up from the configured seed")->check(CLI::PositiveNumber);
    run->add_option("--table", table_out, "write the comparison table here");
    run->add_flag("-q,--quiet", quiet, "no per-evaluation log lines");
    std::uint32_t actors = 0;
    run->add_option("--actors", actors, "shorthand for --set actors=N");
    std::uint64_t updates = 0;
    run->add_option("--updates", updates, "shorthand for --set total_updates=N");

    std::string listen;
    auto* replay_cmd = app.add_subcommand("replay-server", "serve a replay memory over TCP");
    replay_args.attach(replay_cmd);
    replay_cmd->add_option("--listen", listen, "host:port (default replay_endpoint)");

    std::string replay_ep, params_ep;
    auto* learner_cmd = app.add_subcommand("learner", "train from a remote replay and serve parameters");
    learner_args.attach(learner_cmd);
    learner_cmd->add_option("--replay", replay_ep, "replay host:port");
    learner_cmd->add_option("--params-listen", params_ep, "parameter service host:port");

    std::uint32_t actor_id = 0;
    std::uint64_t steps = 0;
    auto* actor_cmd = app.add_subcommand("actor", "run one actor against remote replay and parameters");
    actor_args.attach(actor_cmd);
    actor_cmd->add_option("--id", actor_id, "actor index in [0, actors)");
    actor_cmd->add_option("--replay", replay_ep, "replay host:port");
    actor_cmd->add_option("--params", params_ep, "parameter service host:port");
    actor_cmd->add_option("--steps", steps, "stop after this many environment steps (0 = until signalled)");

    std::string checkpoint;
    int episodes = 10;
    double epsilon = 0.0;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate published or checkpointed parameters without writing");
    eval_args.attach(eval_cmd);
    eval_cmd->add_option("--params", params_ep, "parameter service host:port");
    eval_cmd->add_option("--checkpoint", checkpoint, "learner checkpoint file instead of a live service");
    eval_cmd->add_option("--episodes", episodes, "episodes to average")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--epsilon", epsilon, "exploration during evaluation")->check(CLI::Range(0.0, 1.0));

    std::vector<std::string> inputs;
    std::string column = "mean_return", out;
    double step = 1.0;
    auto* plot_cmd = app.add_subcommand("plotdata", "align eval curves from several runs by wall clock");
    plot_cmd->add_option("inputs", inputs, "run metric directories or eval CSVs")->required();
    plot_cmd->add_option("--column", column, "eval column to tabulate");
    plot_cmd->add_option("--step", step, "wall-clock resolution in seconds")->check(CLI::PositiveNumber);
    plot_cmd->add_option("-o,--out", out, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);

    try {
        if (*run) {
            if (run->count("--actors")) run_args.sets.push_back("actors=" + std::to_string(actors));
            if (run->count("--updates")) run_args.sets.push_back("total_updates=" + std::to_string(updates));
            return cmd_run(run_args, seeds, table_out, quiet);
        }
        if (*replay_cmd) return cmd_replay_server(replay_args, listen);
        if (*learner_cmd) return cmd_learner(learner_args, replay_ep, params_ep);
        if (*actor_cmd) return cmd_actor(actor_args, actor_id, replay_ep, params_ep, steps);
        if (*eval_cmd) return cmd_eval(eval_args, params_ep, checkpoint, episodes, epsilon);
        if (*plot_cmd) return cmd_plotdata(inputs, column, step, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
