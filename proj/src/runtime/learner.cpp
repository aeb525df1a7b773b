#include "apex/runtime/learner.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <thread>

namespace apex::runtime {

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

/// Ships priority updates off the training thread. Consecutive pending updates are merged
/// into one request.
class PriorityWriter {
public:
    explicit PriorityWriter(transport::ChannelPtr channel) : client_(std::move(channel)) {
        thread_ = std::thread([this] { loop(); });
    }
    ~PriorityWriter() { finish(); }

    void enqueue(std::vector<std::uint64_t> keys, std::vector<double> priorities, bool trim) {
        {
            std::lock_guard lock(mu_);
            pending_keys_.insert(pending_keys_.end(), keys.begin(), keys.end());
            pending_priorities_.insert(pending_priorities_.end(), priorities.begin(), priorities.end());
            pending_trim_ = pending_trim_ || trim;
        }
        cv_.notify_one();
    }

    void finish() {
        {
            std::lock_guard lock(mu_);
            if (done_) return;
            done_ = true;
        }
        cv_.notify_one();
        thread_.join();
    }

    std::uint64_t accepted = 0, dropped = 0, trims = 0, max_size_after_trim = 0;

private:
    void loop() {
        while (true) {
            std::vector<std::uint64_t> keys;
            std::vector<double> priorities;
            bool trim = false;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return done_ || !pending_keys_.empty() || pending_trim_; });
                if (pending_keys_.empty() && !pending_trim_) return;
                keys.swap(pending_keys_);
                priorities.swap(pending_priorities_);
                trim = pending_trim_;
                pending_trim_ = false;
            }
            try {
                const auto ack = client_.set_priorities(std::move(keys), std::move(priorities), trim);
                accepted += ack.affected;
                if (trim) {
                    ++trims;
                    max_size_after_trim = std::max(max_size_after_trim, ack.stats.size);
                }
            } catch (const std::exception&) {
                ++dropped;
            }
        }
    }

    transport::ReplayClient client_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::uint64_t> pending_keys_;
    std::vector<double> pending_priorities_;
    bool pending_trim_ = false;
    bool done_ = false;
    std::thread thread_;
};

}  // namespace

Learner::Learner(AgentSpec spec, LearnerConfig config, ChannelFactory replay_channels,
                 std::shared_ptr<transport::ParamService> params)
    : core_(std::move(spec), config), channels_(std::move(replay_channels)), params_(std::move(params)) {
    params_->publish(core_.snapshot());
}

void Learner::set_eval_hook(std::uint64_t period, EvalHook hook) {
    eval_period_ = period;
    eval_ = std::move(hook);
}

void Learner::set_checkpointing(std::string path, std::uint64_t period) {
    checkpoint_path_ = std::move(path);
    checkpoint_period_ = period;
}

std::vector<std::string> Learner::metrics_columns() {
    return {"update", "loss", "mean_abs_td", "grad_norm", "updates_per_s", "transitions_per_s", "replay_size"};
}

LearnerReport Learner::run(const std::atomic<bool>& stop) {
    const auto& cfg = core_.config();
    PrefetchConfig pc;
    pc.batch_size = cfg.batch_size;
    pc.beta = cfg.beta;
    pc.depth = cfg.prefetch_depth;
    pc.threads = cfg.prefetch_threads;
    pc.min_fill = cfg.min_fill;
    pc.backoff_ms = cfg.idle_backoff_ms;
    pc.max_backoff_ms = cfg.max_backoff_ms;
    Prefetcher prefetcher(channels_, pc);
    PriorityWriter writer(channels_());
    prefetcher.start();

    LearnerReport report;
    const auto start = std::chrono::steady_clock::now();
    auto window_start = start;
    std::uint64_t window_updates = 0;
    std::uint64_t replay_size = 0;
    const std::uint64_t first = core_.updates();
    auto first_update_at = start;

    while (!stop) {
        if (cfg.total_updates && core_.updates() - first >= cfg.total_updates) break;
        auto batch = prefetcher.next(std::chrono::milliseconds(100));
        if (!batch) continue;
        UpdateStats s;
        try {
            s = core_.update(batch->items);
        } catch (const DivergenceError& e) {
            report.halted = true;
            report.halt_reason = e.what();
            break;
        }
        const auto n = core_.updates();
        if (n == first + 1) first_update_at = std::chrono::steady_clock::now();
        replay_size = batch->replay_size;
        auto& use = report.instances[batch->instance_id];
        if (use.updates == 0) {
            use.first_update = n;
            use.min_replay_size = batch->replay_size;
        }
        ++use.updates;
        use.min_replay_size = std::min(use.min_replay_size, batch->replay_size);

        report.transitions_processed += batch->items.size();
        report.last_loss = s.loss;
        if (s.target_synced) ++report.target_copies;
        writer.enqueue(std::move(s.keys), std::move(s.priorities), n % cfg.remove_to_fit_period == 0);
        if (n % cfg.publish_period == 0) {
            params_->publish(core_.snapshot());
            ++report.publishes;
        }
        ++window_updates;
        if (metrics_ && n % cfg.metrics_period == 0) {
            const auto now = std::chrono::steady_clock::now();
            const double dt = std::chrono::duration<double>(now - window_start).count();
            const double ups = dt > 0 ? static_cast<double>(window_updates) / dt : 0.0;
            metrics_->write({static_cast<double>(n), s.loss, s.mean_abs_td, s.grad_norm, ups,
                             ups * static_cast<double>(cfg.batch_size), static_cast<double>(replay_size)});
            window_start = now;
            window_updates = 0;
        }
        if (checkpoint_period_ && n % checkpoint_period_ == 0) {
            write_file_atomic(checkpoint_path_, core_.checkpoint());
            ++report.checkpoints;
        }
        if (eval_period_ && eval_ && n % eval_period_ == 0 && eval_(core_)) {
            report.stopped_by_eval = true;
            break;
        }
    }
    prefetcher.stop();
    writer.finish();
    if (!report.halted) params_->publish(core_.snapshot());

    report.updates = core_.updates() - first;
    report.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.updates_per_sec = report.elapsed_s > 0 ? static_cast<double>(report.updates) / report.elapsed_s : 0.0;
    if (report.updates > 0) {
        const auto end = std::chrono::steady_clock::now();
        report.first_update_s = std::chrono::duration<double>(first_update_at - start).count();
        const double training = std::chrono::duration<double>(end - first_update_at).count();
        if (report.updates > 1 && training > 0) {
            report.training_updates_per_sec = static_cast<double>(report.updates - 1) / training;
        }
    }
    report.priority_updates = writer.accepted;
    report.priority_batches_dropped = writer.dropped;
    report.trims = writer.trims;
    report.max_size_after_trim = writer.max_size_after_trim;
    report.prefetch = prefetcher.stats();
    if (metrics_) metrics_->flush();
    return report;
}

}  // namespace apex::runtime
