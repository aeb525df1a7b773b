#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "apex/common/metrics.hpp"
#include "apex/envs/env.hpp"
#include "apex/nstep/send_buffer.hpp"
#include "apex/runtime/agent.hpp"
#include "apex/runtime/prefetcher.hpp"

namespace apex::runtime {

struct ActorConfig {
    std::uint32_t actor_id = 0;
    std::uint32_t actor_count = 1;
    double eps_base = 0.4;
    double eps_alpha = 7.0;
    std::vector<double> eps_set;  ///< when non-empty, actor i uses eps_set[i mod size]
    double eps_override = -1.0;   ///< >= 0 replaces both (evaluation actors)
    std::uint64_t param_sync_period = 400;
    std::size_t flush_size = 50;
    std::size_t max_buffered = 100;
    nstep::OverflowPolicy overflow = nstep::OverflowPolicy::kBlock;
    int n = 3;
    double gamma = 0.99;
    int duplication = 1;
    std::string env_id = "chain-5";
    int episode_cap = 0;  ///< 0 keeps the environment default
    std::uint64_t seed = 0;
    std::uint64_t max_steps = 0;  ///< 0 runs until stopped
    double sigma = 0.3;           ///< DPG exploration noise
    bool write_to_replay = true;
    int nice = 0;  ///< scheduling niceness applied to the actor's threads
    int backoff_ms = 10;
    int max_backoff_ms = 1000;
    std::uint64_t metrics_period = 1000;

    void validate() const;
};

/// eps_set[i mod |set|] if a set is given, else the per-actor ladder.
double actor_epsilon(const ActorConfig& c);

/// Uniform random action with probability epsilon, else the lowest-index argmax.
int select_action(std::span<const float> q_values, double epsilon, std::mt19937_64& rng);

struct ActorReport {
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    std::uint64_t unique_transitions = 0;  ///< emitted by the n-step accumulator
    std::uint64_t transitions_sent = 0;    ///< acknowledged by replay, duplicates included
    std::uint64_t batches_sent = 0;
    std::uint64_t min_batch_sent = 0;      ///< smallest AddBatch before the shutdown flush
    std::uint64_t param_fetches = 0;
    std::uint64_t send_failures = 0;
    std::uint64_t fetch_failures = 0;
    std::uint64_t dropped = 0;
    std::uint64_t params_version = 0;
    std::size_t accumulator_remainder = 0;
    double epsilon = 0.0;
    double mean_return = 0.0;  ///< over the last 100 finished episodes
    double elapsed_s = 0.0;
    double steps_per_sec = 0.0;
};

/// One exploring worker: acts in its own environment, builds n-step transitions, ships
/// them to replay from a background thread and refreshes parameters every
/// param_sync_period steps without stalling the environment loop.
class Actor {
public:
    Actor(AgentSpec spec, ActorConfig config, ChannelFactory replay_channels, ChannelFactory param_channels);

    void set_metrics(MetricsSink* sink) { metrics_ = sink; }
    ActorReport run(const std::atomic<bool>& stop);

    static std::vector<std::string> metrics_columns();

    /// Environment steps so far, readable while run() is in progress.
    std::uint64_t live_steps() const { return live_steps_.load(std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> live_steps_{0};
    AgentNetworks nets_;
    ActorConfig config_;
    ChannelFactory replay_channels_;
    ChannelFactory param_channels_;
    MetricsSink* metrics_ = nullptr;
};

struct EvalResult {
    double mean_return = 0.0;
    double mean_discounted_return = 0.0;
    double mean_length = 0.0;
    double mean_final_distance = 0.0;  ///< point mass only: |x_T - goal|
    std::vector<double> returns;
};

/// Runs greedy episodes (epsilon-greedy for DQN if epsilon > 0; no noise for DPG) without
/// writing anything anywhere.
EvalResult evaluate_policy(const AgentNetworks& nets, std::span<const double> params, const envs::Environment& env,
                           int episodes, double epsilon, std::uint64_t seed, double gamma = 0.99);

/// Lowers the calling thread's scheduling priority. Returns false if the OS refused.
bool set_thread_nice(int nice);

}  // namespace apex::runtime
