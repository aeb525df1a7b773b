#include "apex/harness/orchestrator.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "apex/replay/snapshot_io.hpp"

namespace apex::harness {

namespace fs = std::filesystem;

Evaluator::Evaluator(const RunConfig& config)
    : config_(config),
      env_(envs::make_env(config.env_id, config.episode_cap)),
      optimum_(std::numeric_limits<double>::quiet_NaN()) {
    if (const auto* tab = dynamic_cast<const envs::TabularEnvironment*>(env_.get())) {
        q_star_ = envs::optimal_q_values(*tab, config.gamma);
        optimum_ = envs::optimal_start_value(*tab, config.gamma);
        episodes_ = config.eval_episodes > 0 ? config.eval_episodes : 1;  // deterministic
    } else {
        episodes_ = config.eval_episodes > 0 ? config.eval_episodes : 10;
    }
}

EvalPoint Evaluator::evaluate(const runtime::AgentNetworks& nets, std::span<const double> params) const {
    EvalPoint p;
    const auto r = runtime::evaluate_policy(nets, params, *env_, episodes_, 0.0, 1000003, config_.gamma);
    p.mean_return = r.mean_return;
    p.discounted_return = r.mean_discounted_return;
    p.final_distance = r.mean_final_distance;
    if (const auto* tab = dynamic_cast<const envs::TabularEnvironment*>(env_.get())) {
        for (int s = 0; s < tab->state_count(); ++s) {
            if (tab->is_terminal_index(s)) continue;
            const auto& row = q_star_[static_cast<std::size_t>(s)];
            const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            const auto q = nets.q_values(params, tab->observation_of(s));
            p.q_error = std::max(p.q_error, std::abs(static_cast<double>(q[best]) - row[best]));
        }
        p.solved = p.discounted_return >= config_.solve_fraction * optimum_;
    } else {
        p.solved = p.final_distance < config_.solve_distance;
    }
    return p;
}

// ---------------------------------------------------------------- services

LocalServices::LocalServices(const RunConfig& config, std::shared_ptr<replay::ReplayMemory> memory)
    : config_(config), params_(std::make_shared<transport::ParamService>()) {
    if (config_.transport == TransportKind::kInProc) {
        replay_ep_ = std::make_shared<transport::InProcEndpoint>();
        params_ep_ = std::make_shared<transport::InProcEndpoint>();
        params_ep_->bind(transport::make_handler(params_));
    } else {
        params_server_ = std::make_unique<transport::TcpServer>(transport::Endpoint{"127.0.0.1", 0},
                                                                transport::make_handler(params_));
        params_server_->start();
    }
    serve_replay(std::move(memory));
}

LocalServices::~LocalServices() {
    if (replay_server_) replay_server_->stop();
    if (params_server_) params_server_->stop();
}

void LocalServices::serve_replay(std::shared_ptr<replay::ReplayMemory> memory) {
    auto service = std::make_shared<transport::ReplayService>(std::move(memory), next_instance_++);
    {
        std::lock_guard lock(mu_);
        replay_ = service;
    }
    if (replay_ep_) {
        replay_ep_->bind(transport::make_handler(service));
    } else {
        replay_server_ = std::make_unique<transport::TcpServer>(transport::Endpoint{"127.0.0.1", replay_port_},
                                                                transport::make_handler(service));
        replay_server_->start();
        replay_port_ = replay_server_->port();
    }
}

std::shared_ptr<replay::ReplayMemory> LocalServices::memory() const {
    std::lock_guard lock(mu_);
    return replay_->memory_ptr();
}

void LocalServices::restart_replay(int downtime_ms) {
    if (replay_ep_) {
        replay_ep_->unbind();
    } else {
        replay_server_->stop();
        replay_server_.reset();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(downtime_ms));
    serve_replay(std::make_shared<replay::ReplayMemory>(config_.replay_config()));
}

runtime::ChannelFactory LocalServices::replay_channels() const {
    if (replay_ep_) {
        return [ep = replay_ep_] { return std::make_shared<transport::InProcChannel>(ep); };
    }
    return [port = replay_port_] {
        return std::make_shared<transport::TcpChannel>(transport::Endpoint{"127.0.0.1", port});
    };
}

runtime::ChannelFactory LocalServices::param_channels() const {
    if (params_ep_) {
        return [ep = params_ep_] { return std::make_shared<transport::InProcChannel>(ep); };
    }
    return [port = params_server_->port()] {
        return std::make_shared<transport::TcpChannel>(transport::Endpoint{"127.0.0.1", port});
    };
}

// ---------------------------------------------------------------- runs

namespace {

std::vector<std::string> eval_columns() {
    return {"update", "frames", "mean_return", "discounted_return", "final_distance", "q_error", "solved"};
}

}  // namespace

RunResult run_local(const RunConfig& config, const RunHooks& hooks) {
    config.validate();
    RunResult result;
    result.run_id = config.run_id();
    result.label = hooks.label;
    const auto spec = config.agent_spec();
    const auto epoch = std::chrono::steady_clock::now();

    const fs::path ckpt_dir = config.checkpoint_dir.empty() ? fs::path() : fs::path(config.checkpoint_dir) / result.run_id;
    std::shared_ptr<replay::ReplayMemory> memory;
    if (config.resume && !ckpt_dir.empty() && fs::exists(ckpt_dir / "replay.ckpt")) {
        memory = replay::load_snapshot_file(ckpt_dir / "replay.ckpt", config.replay_config());
    } else {
        memory = std::make_shared<replay::ReplayMemory>(config.replay_config());
    }
    LocalServices services(config, memory);

    runtime::Learner learner(spec, config.learner_config(), services.replay_channels(), services.params());
    if (config.resume && !ckpt_dir.empty() && fs::exists(ckpt_dir / "learner.ckpt")) {
        learner.core().restore(runtime::read_file((ckpt_dir / "learner.ckpt").string()));
        services.params()->publish(learner.core().snapshot());
    }
    if (config.checkpoint_period) learner.set_checkpointing((ckpt_dir / "learner.ckpt").string(), config.checkpoint_period);

    std::unique_ptr<MetricsSink> learner_sink, eval_sink;
    std::vector<std::unique_ptr<MetricsSink>> actor_sinks;
    const fs::path metrics_dir = config.metrics_dir.empty() ? fs::path() : fs::path(config.metrics_dir) / result.run_id;
    if (!metrics_dir.empty()) {
        fs::create_directories(metrics_dir);
        std::ofstream(metrics_dir / "config.txt") << config.to_text();
        learner_sink = std::make_unique<MetricsSink>((metrics_dir / "learner.csv").string(), "learner", result.run_id,
                                                     runtime::Learner::metrics_columns(), epoch);
        eval_sink = std::make_unique<MetricsSink>((metrics_dir / "eval.csv").string(), "eval", result.run_id,
                                                  eval_columns(), epoch);
        learner.set_metrics(learner_sink.get());
    }

    std::vector<std::unique_ptr<runtime::Actor>> actors;
    for (std::uint32_t i = 0; i < config.actors; ++i) {
        actors.push_back(std::make_unique<runtime::Actor>(spec, config.actor_config(i), services.replay_channels(),
                                                          services.param_channels()));
        if (!metrics_dir.empty()) {
            actor_sinks.push_back(std::make_unique<MetricsSink>(
                (metrics_dir / ("actor-" + std::to_string(i) + ".csv")).string(), "actor", result.run_id,
                runtime::Actor::metrics_columns(), epoch));
            actors.back()->set_metrics(actor_sinks.back().get());
        }
    }
    auto frames = [&] {
        std::uint64_t f = 0;
        for (const auto& a : actors) f += a->live_steps();
        return f;
    };

    Evaluator evaluator(config);
    result.optimum = evaluator.optimum();
    std::thread restarter;
    bool restarted = false;
    learner.set_eval_hook(1, [&](const runtime::LearnerCore& core) {
        const auto n = core.updates();
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
        if (config.replay_restart_at && n == config.replay_restart_at && !restarted) {
            restarted = true;
            ++result.replay_restarts;
            if (hooks.log) *hooks.log << "[" << result.run_id << "] restarting replay at update " << n << "\n";
            restarter = std::thread([&] { services.restart_replay(config.replay_downtime_ms); });
        }
        bool stop = config.max_seconds > 0 && wall >= config.max_seconds;
        if (n % config.eval_period == 0) {
            auto p = evaluator.evaluate(core.networks(), core.params());
            p.update = n;
            p.wall_s = wall;
            p.frames = frames();
            result.evals.push_back(p);
            if (eval_sink) {
                eval_sink->write({static_cast<double>(n), static_cast<double>(p.frames), p.mean_return,
                                  p.discounted_return, p.final_distance, p.q_error, p.solved ? 1.0 : 0.0});
            }
            if (hooks.log) {
                *hooks.log << "[" << result.run_id << (hooks.label.empty() ? "" : " " + hooks.label) << "] update " << n
                           << " frames " << p.frames << " return " << p.mean_return << " discounted "
                           << p.discounted_return << " q_err " << p.q_error << " dist " << p.final_distance << "\n";
            }
            // With a scripted restart, only a solve after the restart counts.
            if (config.replay_restart_at && n <= config.replay_restart_at) p.solved = false;
            if (p.solved && !result.solved) {
                result.solved = true;
                result.updates_to_solve = n;
                result.seconds_to_solve = wall;
            }
            stop = stop || (p.solved && config.stop_on_solve);
        }
        return stop;
    });

    std::atomic<bool> stop_learner{false}, stop_actors{false}, learner_done{false};
    std::vector<runtime::ActorReport> actor_reports(actors.size());
    std::vector<std::thread> actor_threads;
    for (std::size_t i = 0; i < actors.size(); ++i) {
        actor_threads.emplace_back([&, i] { actor_reports[i] = actors[i]->run(stop_actors); });
    }
    std::thread learner_thread([&] {
        result.learner = learner.run(stop_learner);
        learner_done = true;
    });
    while (!learner_done) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
        if ((hooks.stop && *hooks.stop) || (config.max_seconds > 0 && wall >= config.max_seconds)) stop_learner = true;
    }
    learner_thread.join();
    stop_actors = true;
    for (auto& t : actor_threads) t.join();
    if (restarter.joinable()) restarter.join();

    result.actors = std::move(actor_reports);
    result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
    for (const auto& a : result.actors) {
        result.env_steps += a.steps;
        result.actor_steps_per_sec += a.steps_per_sec;
    }
    if (!ckpt_dir.empty()) {
        fs::create_directories(ckpt_dir);
        runtime::write_file_atomic((ckpt_dir / "learner.ckpt").string(), learner.core().checkpoint());
        replay::save_snapshot_file(*services.memory(), ckpt_dir / "replay.ckpt");
    }
    return result;
}

ThroughputResult measure_actor_throughput(const RunConfig& config, double seconds) {
    config.validate();
    const auto spec = config.agent_spec();
    LocalServices services(config, std::make_shared<replay::ReplayMemory>(config.replay_config()));
    std::mt19937_64 rng(config.seed);
    services.params()->publish(nn::make_snapshot(1, runtime::AgentNetworks(spec).init_params(rng)));

    std::vector<std::unique_ptr<runtime::Actor>> actors;
    for (std::uint32_t i = 0; i < config.actors; ++i) {
        auto ac = config.actor_config(i);
        ac.nice = 0;
        actors.push_back(std::make_unique<runtime::Actor>(spec, ac, services.replay_channels(), services.param_channels()));
    }
    std::atomic<bool> stop{false};
    std::vector<runtime::ActorReport> reports(actors.size());
    std::vector<std::thread> threads;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < actors.size(); ++i) {
        threads.emplace_back([&, i] { reports[i] = actors[i]->run(stop); });
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    stop = true;
    for (auto& t : threads) t.join();
    ThroughputResult r;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::uint64_t steps = 0;
    for (const auto& rep : reports) {
        r.transitions += rep.transitions_sent;
        steps += rep.steps;
    }
    r.transitions_per_sec = static_cast<double>(r.transitions) / r.seconds;
    r.steps_per_sec = static_cast<double>(steps) / r.seconds;
    return r;
}

std::string comparison_table(const std::vector<RunResult>& runs) {
    std::ostringstream o;
    o << "label,run_id,solved,updates_to_solve,seconds_to_solve,updates,final_return,final_discounted_return,"
         "updates_per_s,actor_steps_per_s,env_steps\n";
    o << std::setprecision(6);
    for (const auto& r : runs) {
        const auto* e = r.last_eval();
        o << r.label << "," << r.run_id << "," << (r.solved ? 1 : 0) << "," << r.updates_to_solve << ","
          << r.seconds_to_solve << "," << r.learner.updates << "," << (e ? e->mean_return : 0.0) << ","
          << (e ? e->discounted_return : 0.0) << "," << r.learner.updates_per_sec << "," << r.actor_steps_per_sec << ","
          << r.env_steps << "\n";
    }
    return o.str();
}

}  // namespace apex::harness
