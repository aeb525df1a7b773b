#include "apex/nstep/send_buffer.hpp"

#include <stdexcept>

namespace apex::nstep {

LocalSendBuffer::LocalSendBuffer(SendBufferConfig config) : config_(config) {
    if (config_.flush_size == 0) throw std::invalid_argument("flush_size must be positive");
    if (config_.max_buffered < config_.flush_size) {
        throw std::invalid_argument("max_buffered must be at least flush_size");
    }
}

bool LocalSendBuffer::push(Transition t) {
    std::unique_lock lock(mu_);
    if (config_.overflow == OverflowPolicy::kBlock) {
        space_.wait(lock, [&] { return closed_ || pending_.size() < config_.max_buffered; });
        if (closed_) return false;
    } else {
        if (closed_) return false;
        if (pending_.size() >= config_.max_buffered) {
            pending_.pop_front();
            ++dropped_;
        }
    }
    pending_.push_back(std::move(t));
    return true;
}

bool LocalSendBuffer::push(std::vector<Transition> ts) {
    for (auto& t : ts) {
        if (!push(std::move(t))) return false;
    }
    return true;
}

Flush LocalSendBuffer::take(std::size_t n) {
    Flush f;
    f.transitions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        f.transitions.push_back(std::move(pending_.front()));
        pending_.pop_front();
    }
    return f;
}

std::optional<Flush> LocalSendBuffer::flush_if_ready() {
    Flush f;
    {
        std::lock_guard lock(mu_);
        if (pending_.size() < config_.flush_size) return std::nullopt;
        f = take(config_.flush_size);
    }
    space_.notify_all();
    f.priorities.reserve(f.transitions.size());
    for (const auto& t : f.transitions) {
        f.priorities.push_back(compute_initial_priority(t, config_.priority_rule));
    }
    return f;
}

std::optional<Flush> LocalSendBuffer::drain() {
    Flush f;
    {
        std::lock_guard lock(mu_);
        if (pending_.empty()) return std::nullopt;
        f = take(pending_.size());
    }
    space_.notify_all();
    for (const auto& t : f.transitions) {
        f.priorities.push_back(compute_initial_priority(t, config_.priority_rule));
    }
    return f;
}

void LocalSendBuffer::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    space_.notify_all();
}

std::size_t LocalSendBuffer::pending() const {
    std::lock_guard lock(mu_);
    return pending_.size();
}

std::uint64_t LocalSendBuffer::dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
}

}  // namespace apex::nstep
