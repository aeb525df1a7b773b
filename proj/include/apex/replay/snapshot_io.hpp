#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "apex/replay/replay_memory.hpp"

namespace apex::replay {

inline constexpr std::uint32_t kReplaySnapshotVersion = 1;

class SnapshotError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Header: magic "APXR", version u32, size u64, soft_capacity u64, alpha f64. Then one
/// record per transition in insertion order: key u64, priority f64, u32 payload length,
/// EncodedTransition payload.
std::vector<std::uint8_t> save_snapshot(const ReplayMemory& memory);

/// Rebuilds a memory from a snapshot. `config` supplies everything the header does not
/// carry; soft_capacity and alpha come from the header.
std::unique_ptr<ReplayMemory> load_snapshot(std::span<const std::uint8_t> bytes,
                                            ReplayConfig config);

void save_snapshot_file(const ReplayMemory& memory, const std::filesystem::path& path);
std::unique_ptr<ReplayMemory> load_snapshot_file(const std::filesystem::path& path,
                                                 ReplayConfig config);

}  // namespace apex::replay
