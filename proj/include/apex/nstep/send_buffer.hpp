#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "apex/nstep/nstep_accumulator.hpp"

namespace apex::nstep {

enum class OverflowPolicy { kBlock, kDropOldest };

struct SendBufferConfig {
    std::size_t flush_size = 50;
    std::size_t max_buffered = 100;
    OverflowPolicy overflow = OverflowPolicy::kBlock;
    PriorityRule priority_rule = PriorityRule::kDoubleQ;
};

struct Flush {
    std::vector<Transition> transitions;
    std::vector<double> priorities;
};

/// Completed transitions waiting to be shipped to replay. The producer (actor loop) and a
/// background sender may use it concurrently.
class LocalSendBuffer {
public:
    explicit LocalSendBuffer(SendBufferConfig config = {});

    /// Appends one transition. With kBlock, waits while the buffer is full; returns false if
    /// the buffer was closed meanwhile. With kDropOldest, evicts the oldest pending entry.
    bool push(Transition t);
    bool push(std::vector<Transition> ts);

    /// Exactly flush_size transitions with their priorities, or nothing if fewer are pending.
    std::optional<Flush> flush_if_ready();

    /// Everything still pending, regardless of flush_size.
    std::optional<Flush> drain();

    /// Wakes blocked producers; later pushes are refused.
    void close();

    std::size_t pending() const;
    std::uint64_t dropped() const;
    const SendBufferConfig& config() const { return config_; }

private:
    Flush take(std::size_t n);

    SendBufferConfig config_;
    mutable std::mutex mu_;
    std::condition_variable space_;
    std::deque<Transition> pending_;
    std::uint64_t dropped_ = 0;
    bool closed_ = false;
};

}  // namespace apex::nstep
