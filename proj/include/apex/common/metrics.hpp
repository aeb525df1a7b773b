#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

namespace apex {

/// Append-only CSV with a fixed header: role, run_id, wall_clock_s, then the role's own
/// columns. wall_clock_s is strictly increasing within one sink. Rows are flushed at least
/// every `flush_interval`.
class MetricsSink {
public:
    MetricsSink(const std::string& path, std::string role, std::string run_id,
                std::vector<std::string> columns,
                std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now(),
                std::chrono::milliseconds flush_interval = std::chrono::seconds(5));
    ~MetricsSink();

    void write(const std::vector<double>& values);
    void flush();

    const std::string& path() const { return path_; }
    std::uint64_t rows() const;
    double elapsed_s() const;

private:
    std::string path_;
    std::string role_;
    std::string run_id_;
    std::size_t width_;
    std::chrono::steady_clock::time_point epoch_;
    std::chrono::milliseconds flush_interval_;
    std::chrono::steady_clock::time_point last_flush_;
    double last_time_ = -1.0;
    std::uint64_t rows_ = 0;
    mutable std::mutex mu_;
    std::ofstream out_;
};

}  // namespace apex
