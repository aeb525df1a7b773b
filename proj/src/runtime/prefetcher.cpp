#include "apex/runtime/prefetcher.hpp"

#include <algorithm>

#include "apex/transport/services.hpp"

namespace apex::runtime {

Prefetcher::Prefetcher(ChannelFactory channels, PrefetchConfig config)
    : channels_(std::move(channels)), config_(config) {
    if (config_.depth < 1 || config_.threads < 1) throw std::invalid_argument("prefetch depth and threads must be >= 1");
}

Prefetcher::~Prefetcher() { stop(); }

void Prefetcher::start() {
    stop_ = false;
    for (std::size_t i = 0; i < config_.threads; ++i) {
        threads_.emplace_back([this, ch = channels_()] { worker(ch); });
    }
}

void Prefetcher::stop() {
    stop_ = true;
    space_.notify_all();
    ready_.notify_all();
    for (auto& t : threads_) t.join();
    threads_.clear();
    std::lock_guard lock(mu_);
    queue_.clear();
}

void Prefetcher::discard_locked() {
    stats_.discarded += queue_.size();
    queue_.clear();
    space_.notify_all();
}

void Prefetcher::worker(transport::ChannelPtr channel) {
    transport::ReplayClient client(std::move(channel));
    int backoff = config_.backoff_ms;
    auto pause = [&] {
        const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(backoff);
        while (!stop_ && std::chrono::steady_clock::now() < until) {
            std::this_thread::sleep_for(std::chrono::milliseconds(std::min(backoff, 10)));
        }
        backoff = std::min(backoff * 2, config_.max_backoff_ms);
    };
    while (!stop_) {
        {
            std::unique_lock lock(mu_);
            space_.wait(lock, [&] { return stop_ || queue_.size() + in_flight_ < config_.depth; });
            if (stop_) return;
            ++in_flight_;
            stats_.max_outstanding = std::max(stats_.max_outstanding, queue_.size() + in_flight_);
        }
        std::optional<transport::SampleResponse> batch;
        bool failed = false;
        try {
            batch = client.sample(static_cast<std::uint32_t>(config_.batch_size), config_.beta);
        } catch (const transport::RemoteError& e) {
            failed = e.code() != transport::ErrorCode::kEmptyMemory;
        } catch (const std::exception&) {
            failed = true;
        }
        bool wait = true;
        {
            std::lock_guard lock(mu_);
            --in_flight_;
            if (failed) {
                ++stats_.failures;
                discard_locked();
            } else if (batch) {
                ++stats_.fetched;
                if (!have_instance_ || batch->instance_id != instance_) {
                    if (have_instance_) discard_locked();
                    instance_ = batch->instance_id;
                    have_instance_ = true;
                }
                if (batch->replay_size < config_.min_fill) {
                    ++stats_.underfilled;
                } else {
                    queue_.push_back(std::move(*batch));
                    wait = false;
                }
            }
            space_.notify_all();
        }
        if (wait) {
            pause();
        } else {
            backoff = config_.backoff_ms;
            ready_.notify_one();
        }
    }
}

std::optional<transport::SampleResponse> Prefetcher::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!ready_.wait_for(lock, timeout, [&] { return stop_ || !queue_.empty(); }) || queue_.empty()) {
        return std::nullopt;
    }
    auto b = std::move(queue_.front());
    queue_.pop_front();
    space_.notify_one();
    return b;
}

PrefetchStats Prefetcher::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::size_t Prefetcher::buffered() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

}  // namespace apex::runtime
