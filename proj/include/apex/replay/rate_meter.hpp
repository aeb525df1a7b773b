#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>

namespace apex::replay {

/// Events per second over a trailing window of one-second buckets.
class RateMeter {
public:
    using Clock = std::chrono::steady_clock;
    static constexpr int kBuckets = 5;

    RateMeter() : start_(Clock::now()) {}

    void record(std::uint64_t n, Clock::time_point now = Clock::now()) {
        roll(now);
        counts_[static_cast<std::size_t>(current_ % kBuckets)] += n;
    }

    double rate(Clock::time_point now = Clock::now()) {
        roll(now);
        const double age = std::chrono::duration<double>(now - start_).count();
        const double window = std::min<double>(age, kBuckets);
        if (window <= 0.0) return 0.0;
        std::uint64_t sum = 0;
        for (auto c : counts_) sum += c;
        return static_cast<double>(sum) / window;
    }

private:
    void roll(Clock::time_point now) {
        const auto sec = std::chrono::duration_cast<std::chrono::seconds>(now - start_).count();
        while (current_ < sec) {
            ++current_;
            counts_[static_cast<std::size_t>(current_ % kBuckets)] = 0;
            if (sec - current_ >= kBuckets) {
                counts_.fill(0);
                current_ = sec;
            }
        }
    }

    Clock::time_point start_;
    std::int64_t current_ = 0;
    std::array<std::uint64_t, kBuckets> counts_{};
};

}  // namespace apex::replay
