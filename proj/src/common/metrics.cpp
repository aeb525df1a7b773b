#include "apex/common/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace apex {

MetricsSink::MetricsSink(const std::string& path, std::string role, std::string run_id,
                         std::vector<std::string> columns, std::chrono::steady_clock::time_point epoch,
                         std::chrono::milliseconds flush_interval)
    : path_(path),
      role_(std::move(role)),
      run_id_(std::move(run_id)),
      width_(columns.size()),
      epoch_(epoch),
      flush_interval_(flush_interval),
      last_flush_(std::chrono::steady_clock::now()) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    out_.open(path, std::ios::out | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open metrics file " + path);
    out_ << "role,run_id,wall_clock_s";
    for (const auto& c : columns) out_ << ',' << c;
    out_ << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("cannot write metrics file " + path);
}

MetricsSink::~MetricsSink() { flush(); }

double MetricsSink::elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void MetricsSink::write(const std::vector<double>& values) {
    if (values.size() != width_) throw std::invalid_argument("metrics row has the wrong width");
    std::lock_guard lock(mu_);
    double t = elapsed_s();
    if (t <= last_time_) t = std::nextafter(last_time_, std::numeric_limits<double>::infinity());
    last_time_ = t;
    out_ << role_ << ',' << run_id_ << ',' << std::setprecision(9) << t;
    out_ << std::setprecision(10);
    for (double v : values) out_ << ',' << v;
    out_ << '\n';
    ++rows_;
    const auto now = std::chrono::steady_clock::now();
    if (now - last_flush_ >= flush_interval_) {
        out_.flush();
        last_flush_ = now;
    }
}

void MetricsSink::flush() {
    std::lock_guard lock(mu_);
    out_.flush();
    last_flush_ = std::chrono::steady_clock::now();
}

std::uint64_t MetricsSink::rows() const {
    std::lock_guard lock(mu_);
    return rows_;
}

}  // namespace apex
