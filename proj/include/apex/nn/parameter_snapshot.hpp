#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "apex/common/bytes.hpp"

namespace apex::nn {

/// Immutable, versioned flat weight vector. Shared between threads as
/// shared_ptr<const ParameterSnapshot>.
struct ParameterSnapshot {
    std::uint64_t version = 0;
    std::vector<double> weights;

    bool operator==(const ParameterSnapshot&) const = default;
};

using SnapshotPtr = std::shared_ptr<const ParameterSnapshot>;

inline SnapshotPtr make_snapshot(std::uint64_t version, std::vector<double> weights) {
    return std::make_shared<const ParameterSnapshot>(ParameterSnapshot{version, std::move(weights)});
}

/// Fingerprint of version and weight bits.
std::uint64_t fingerprint(const ParameterSnapshot& s);

/// version u64, count u64, weights as little-endian f32 (wire) or f64 (checkpoint).
void write_snapshot_f32(ByteWriter& out, const ParameterSnapshot& s);
void write_snapshot_f64(ByteWriter& out, const ParameterSnapshot& s);
ParameterSnapshot read_snapshot_f32(ByteReader& in);
ParameterSnapshot read_snapshot_f64(ByteReader& in);

/// Online/target pair with a copy cadence counted in training batches.
class TargetTracker {
public:
    explicit TargetTracker(std::uint64_t period) : period_(period) {}

    /// Counts one training batch; true on exact multiples of the period.
    bool tick() { return ++batches_ % period_ == 0; }

    /// Target becomes a bitwise copy of `online`, with its own bumped version.
    SnapshotPtr copy_to_target(const std::vector<double>& online) {
        target_ = make_snapshot(++copies_, online);
        return target_;
    }

    const SnapshotPtr& target() const { return target_; }
    std::uint64_t copies() const { return copies_; }
    std::uint64_t batches() const { return batches_; }
    std::uint64_t period() const { return period_; }

    void restore(std::uint64_t batches, std::uint64_t copies, SnapshotPtr target) {
        batches_ = batches;
        copies_ = copies;
        target_ = std::move(target);
    }

private:
    std::uint64_t period_;
    std::uint64_t batches_ = 0;
    std::uint64_t copies_ = 0;
    SnapshotPtr target_;
};

}  // namespace apex::nn
