#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "apex/transport/channel.hpp"

namespace apex::runtime {

using ChannelFactory = std::function<transport::ChannelPtr()>;

struct PrefetchConfig {
    std::size_t batch_size = 512;
    double beta = 0.4;
    std::size_t depth = 16;
    std::size_t threads = 1;
    std::uint64_t min_fill = 0;
    int backoff_ms = 20;
    int max_backoff_ms = 1000;
};

struct PrefetchStats {
    std::uint64_t fetched = 0;
    std::uint64_t underfilled = 0;  ///< batches discarded because replay_size < min_fill
    std::uint64_t failures = 0;     ///< transport or remote errors
    std::uint64_t discarded = 0;    ///< buffered batches dropped after a failure or restart
    std::size_t max_outstanding = 0;
};

/// Keeps up to `depth` decoded batches (buffered plus in flight) ahead of the consumer.
///
/// Batches drawn while the replay holds fewer than min_fill transitions are dropped. A
/// transport failure or a change of replay instance discards everything buffered, so the
/// consumer never trains on data from a memory that is no longer there.
class Prefetcher {
public:
    Prefetcher(ChannelFactory channels, PrefetchConfig config);
    ~Prefetcher();

    void start();
    void stop();

    std::optional<transport::SampleResponse> next(std::chrono::milliseconds timeout);

    PrefetchStats stats() const;
    std::size_t buffered() const;

private:
    void worker(transport::ChannelPtr channel);
    void discard_locked();

    ChannelFactory channels_;
    PrefetchConfig config_;
    mutable std::mutex mu_;
    std::condition_variable ready_, space_;
    std::deque<transport::SampleResponse> queue_;
    std::size_t in_flight_ = 0;
    std::uint64_t instance_ = 0;
    bool have_instance_ = false;
    PrefetchStats stats_;
    std::atomic<bool> stop_{false};
    std::vector<std::thread> threads_;
};

}  // namespace apex::runtime
