#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "apex/replay/replay_memory.hpp"
#include "apex/runtime/actor.hpp"
#include "apex/runtime/learner_core.hpp"

namespace apex::harness {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class TransportKind { kInProc, kTcp };

/// Everything needed to launch a run. Serialised as flat key=value text.
struct RunConfig {
    std::string profile = "toy";
    runtime::Algorithm mode = runtime::Algorithm::kDqn;
    std::string env_id = "grid-10x10";
    int episode_cap = 0;
    std::uint32_t actors = 4;

    // replay
    std::size_t replay_capacity = 100000;
    double alpha = 0.6;
    double beta = 0.4;
    double alpha_evict = -0.4;
    replay::EvictionMode eviction = replay::EvictionMode::kFifo;

    // learner
    std::size_t batch_size = 64;
    std::size_t prefetch_depth = 16;
    std::uint64_t min_fill = 1000;
    std::uint64_t target_sync_period = 500;
    std::uint64_t remove_to_fit_period = 100;
    std::string optimizer = "rmsprop";  ///< rmsprop | adam, for the q-network or critic
    double lr = 2.5e-4;
    double actor_lr = 1e-4;
    double max_grad_norm = 40.0;
    std::vector<int> hidden{64};
    std::vector<int> critic_hidden{64, 64};
    bool dueling = true;
    nn::Activation activation = nn::Activation::kRelu;

    // actors
    int n = 3;
    double gamma = 0.99;
    double eps_base = 0.4;
    double eps_alpha = 7.0;
    std::vector<double> eps_set;
    std::uint64_t param_sync_period = 400;
    std::size_t flush_size = 50;
    std::size_t max_buffered = 100;
    int duplication = 1;
    double sigma = 0.3;
    int actor_nice = 19;

    // run
    TransportKind transport = TransportKind::kInProc;
    std::string replay_endpoint = "127.0.0.1:7401";
    std::string params_endpoint = "127.0.0.1:7402";
    std::uint64_t seed = 0;
    std::uint64_t total_updates = 50000;
    double max_seconds = 0;  ///< 0 means no wall-clock limit
    std::uint64_t eval_period = 500;
    int eval_episodes = 0;  ///< 0 picks per environment
    double solve_fraction = 0.95;
    double solve_distance = 0.05;
    bool stop_on_solve = true;
    std::string metrics_dir;
    std::string checkpoint_dir;
    std::uint64_t checkpoint_period = 0;
    bool resume = false;
    std::uint64_t replay_restart_at = 0;  ///< scripted replay failure at this update, 0 = never
    int replay_downtime_ms = 300;

    void validate() const;

    /// Applies one key=value assignment. Unknown keys and bad values throw ConfigError.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    /// Canonical key=value text, one per line in key order.
    std::string to_text() const;
    std::uint64_t hash() const;
    /// "s<seed>-<16 hex digits of the config hash>"
    std::string run_id() const;

    runtime::AgentSpec agent_spec() const;
    runtime::LearnerConfig learner_config() const;
    runtime::ActorConfig actor_config(std::uint32_t actor_id) const;
    replay::ReplayConfig replay_config() const;
};

/// Sets the profile defaults (`toy`, `control-like`, `atari-like`) for the current mode.
void apply_profile(RunConfig& c, const std::string& profile);

/// key=value lines; '#' starts a comment; blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);

/// Builds a config from defaults, then profile and mode, then the remaining assignments in
/// order. `profile` and `mode` may appear anywhere among the assignments.
RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& assignments);

struct Variant {
    std::string label;
    RunConfig config;
};

/// Single-run presets: toy-grid, toy-chain, toy-pointmass.
RunConfig preset(const std::string& name);

/// Analysis presets return the compared variants; single-run presets return one entry.
std::vector<Variant> experiment_preset(const std::string& name);
const std::vector<std::string>& preset_names();

/// Applies APEX_REPLAY_ENDPOINT and APEX_PARAMS_ENDPOINT when set.
void apply_env_overrides(RunConfig& c);

}  // namespace apex::harness
