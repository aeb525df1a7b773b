#pragma once

#include <atomic>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "apex/harness/config.hpp"
#include "apex/runtime/actor.hpp"
#include "apex/runtime/learner.hpp"
#include "apex/transport/channel.hpp"
#include "apex/transport/services.hpp"
#include "apex/transport/tcp.hpp"

namespace apex::harness {

struct EvalPoint {
    std::uint64_t update = 0;
    double wall_s = 0.0;
    std::uint64_t frames = 0;
    double mean_return = 0.0;
    double discounted_return = 0.0;
    double final_distance = 0.0;  ///< point mass only
    double q_error = 0.0;         ///< tabular only: max |Q(s, a*) - Q*(s, a*)| over live states
    bool solved = false;
};

/// Greedy evaluation of the learner's current parameters. Never touches replay.
class Evaluator {
public:
    explicit Evaluator(const RunConfig& config);

    EvalPoint evaluate(const runtime::AgentNetworks& nets, std::span<const double> params) const;

    /// Discounted optimum from the start state for tabular environments, NaN otherwise.
    double optimum() const { return optimum_; }

private:
    RunConfig config_;
    std::unique_ptr<envs::Environment> env_;
    std::vector<std::vector<double>> q_star_;
    double optimum_;
    int episodes_;
};

struct RunResult {
    std::string run_id;
    std::string label;
    runtime::LearnerReport learner;
    std::vector<runtime::ActorReport> actors;
    std::vector<EvalPoint> evals;
    bool solved = false;
    std::uint64_t updates_to_solve = 0;
    double seconds_to_solve = 0.0;
    double optimum = 0.0;
    double wall_s = 0.0;
    std::uint64_t env_steps = 0;
    double actor_steps_per_sec = 0.0;  ///< aggregate over actors
    std::uint64_t replay_restarts = 0;

    const EvalPoint* last_eval() const { return evals.empty() ? nullptr : &evals.back(); }
};

/// Replay and parameter services for one run, reachable in-process or over loopback TCP.
class LocalServices {
public:
    LocalServices(const RunConfig& config, std::shared_ptr<replay::ReplayMemory> memory);
    ~LocalServices();

    runtime::ChannelFactory replay_channels() const;
    runtime::ChannelFactory param_channels() const;
    const std::shared_ptr<transport::ParamService>& params() const { return params_; }
    std::shared_ptr<replay::ReplayMemory> memory() const;

    /// Takes the replay role down for `downtime_ms` and brings it back empty under a new
    /// instance id.
    void restart_replay(int downtime_ms);

private:
    void serve_replay(std::shared_ptr<replay::ReplayMemory> memory);

    RunConfig config_;
    std::uint64_t next_instance_ = 1;
    mutable std::mutex mu_;
    std::shared_ptr<transport::ReplayService> replay_;
    std::shared_ptr<transport::ParamService> params_;
    std::shared_ptr<transport::InProcEndpoint> replay_ep_, params_ep_;
    std::unique_ptr<transport::TcpServer> replay_server_, params_server_;
    std::uint16_t replay_port_ = 0;
};

struct RunHooks {
    const std::atomic<bool>* stop = nullptr;  ///< external stop request
    std::ostream* log = nullptr;
    std::string label;
};

/// Launches every role of `config` inside this process and runs until the update budget,
/// the wall-clock budget, a solve (if stop_on_solve) or an external stop.
RunResult run_local(const RunConfig& config, const RunHooks& hooks = {});

struct ThroughputResult {
    double transitions_per_sec = 0.0;
    double steps_per_sec = 0.0;
    std::uint64_t transitions = 0;
    double seconds = 0.0;
};

/// Actors only, against a live replay and a fixed parameter snapshot.
ThroughputResult measure_actor_throughput(const RunConfig& config, double seconds);

/// CSV comparison of labelled runs.
std::string comparison_table(const std::vector<RunResult>& runs);

}  // namespace apex::harness
