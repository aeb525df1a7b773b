#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "apex/common/metrics.hpp"
#include "apex/runtime/learner_core.hpp"
#include "apex/runtime/prefetcher.hpp"
#include "apex/transport/services.hpp"

namespace apex::runtime {

struct LearnerReport {
    std::uint64_t updates = 0;
    std::uint64_t transitions_processed = 0;
    std::uint64_t priority_updates = 0;  ///< priorities accepted by the replay
    std::uint64_t priority_batches_dropped = 0;
    std::uint64_t publishes = 0;
    std::uint64_t target_copies = 0;
    std::uint64_t trims = 0;
    std::uint64_t max_size_after_trim = 0;
    std::uint64_t checkpoints = 0;
    double elapsed_s = 0.0;
    double updates_per_sec = 0.0;
    double first_update_s = 0.0;           ///< wall time until the first update
    double training_updates_per_sec = 0.0; ///< from the first update on
    double last_loss = 0.0;
    bool halted = false;  ///< divergence guard fired
    std::string halt_reason;
    bool stopped_by_eval = false;

    /// Per replay incarnation: updates trained on it and the smallest replay_size seen in
    /// those batches.
    struct InstanceUse {
        std::uint64_t first_update = 0;
        std::uint64_t updates = 0;
        std::uint64_t min_replay_size = 0;
    };
    std::map<std::uint64_t, InstanceUse> instances;
    PrefetchStats prefetch;
};

/// The learner loop: prefetched batches in, priorities and parameter snapshots out.
class Learner {
public:
    Learner(AgentSpec spec, LearnerConfig config, ChannelFactory replay_channels,
            std::shared_ptr<transport::ParamService> params);

    /// Called every `period` updates; returning true ends the run.
    using EvalHook = std::function<bool(const LearnerCore&)>;
    void set_eval_hook(std::uint64_t period, EvalHook hook);
    void set_checkpointing(std::string path, std::uint64_t period);
    void set_metrics(MetricsSink* sink) { metrics_ = sink; }

    LearnerReport run(const std::atomic<bool>& stop);

    LearnerCore& core() { return core_; }
    const LearnerCore& core() const { return core_; }

    static std::vector<std::string> metrics_columns();

private:
    LearnerCore core_;
    ChannelFactory channels_;
    std::shared_ptr<transport::ParamService> params_;
    MetricsSink* metrics_ = nullptr;
    std::uint64_t eval_period_ = 0;
    EvalHook eval_;
    std::string checkpoint_path_;
    std::uint64_t checkpoint_period_ = 0;
};

/// Writes `bytes` to `path` atomically (temporary file then rename).
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace apex::runtime
