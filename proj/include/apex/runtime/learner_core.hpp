#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "apex/nn/optimizer.hpp"
#include "apex/nn/parameter_snapshot.hpp"
#include "apex/replay/replay_memory.hpp"
#include "apex/runtime/agent.hpp"

namespace apex::runtime {

struct LearnerConfig {
    std::size_t batch_size = 512;
    std::size_t prefetch_depth = 16;
    std::size_t prefetch_threads = 1;
    std::uint64_t min_fill = 50000;
    std::uint64_t target_sync_period = 2500;
    std::uint64_t remove_to_fit_period = 100;
    nn::OptimizerConfig optimizer = nn::OptimizerConfig::centered_rmsprop();  ///< q-network or critic
    nn::OptimizerConfig actor_optimizer = nn::OptimizerConfig::adam();       ///< DPG policy
    double beta = 0.4;
    double max_grad_norm = 40.0;
    std::uint64_t total_updates = 0;  ///< 0 runs until stopped
    std::uint64_t publish_period = 1;
    std::uint64_t metrics_period = 100;
    std::uint64_t seed = 0;
    int idle_backoff_ms = 20;
    int max_backoff_ms = 1000;

    void validate() const;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The learner's halt reason when a loss, TD error or gradient stops being finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct UpdateStats {
    double loss = 0.0;
    double mean_abs_td = 0.0;
    double grad_norm = 0.0;        ///< pre-clip norm; DQN net or DPG critic
    double actor_grad_norm = 0.0;  ///< DPG only
    bool target_synced = false;
    std::vector<std::uint64_t> keys;
    std::vector<double> priorities;  ///< |delta| under the pre-update parameters
};

/// Weights, targets and optimizer state plus the update rule. Transport-free, so a batch
/// can be replayed against a restored copy.
class LearnerCore {
public:
    LearnerCore(AgentSpec spec, LearnerConfig config);

    UpdateStats update(std::span<const replay::SampledTransition> batch);

    /// Parameters in the published layout (see AgentSpec).
    std::vector<double> params() const;
    nn::SnapshotPtr snapshot() const;
    const nn::SnapshotPtr& target() const { return targets_.target(); }

    std::uint64_t updates() const { return updates_; }
    std::uint64_t target_copies() const { return targets_.copies(); }
    const AgentNetworks& networks() const { return nets_; }
    const AgentSpec& spec() const { return nets_.spec(); }
    const LearnerConfig& config() const { return config_; }

    /// "APXL", format version, state, checksum. restore() validates everything before
    /// replacing any state.
    std::vector<std::uint8_t> checkpoint() const;
    void restore(std::span<const std::uint8_t> blob);

private:
    UpdateStats update_dqn(std::span<const replay::SampledTransition> batch);
    UpdateStats update_dpg(std::span<const replay::SampledTransition> batch);

    AgentNetworks nets_;
    LearnerConfig config_;
    std::vector<double> online_;  ///< DQN q-network, or DPG policy
    std::vector<double> critic_;  ///< DPG only
    nn::Optimizer optimizer_;        ///< q-network / critic
    nn::Optimizer actor_optimizer_;  ///< DPG policy
    nn::TargetTracker targets_;
    std::mt19937_64 rng_;
    std::uint64_t updates_ = 0;
};

}  // namespace apex::runtime
