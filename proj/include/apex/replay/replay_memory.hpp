#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "apex/replay/rate_meter.hpp"
#include "apex/replay/sum_tree.hpp"
#include "apex/replay/transition.hpp"

namespace apex::replay {

class DuplicateKeyError : public std::invalid_argument {
public:
    explicit DuplicateKeyError(std::uint64_t key)
        : std::invalid_argument("duplicate transition key " + std::to_string(key)), key_(key) {}
    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
};

class EmptyMemoryError : public std::runtime_error {
public:
    EmptyMemoryError() : std::runtime_error("replay memory is empty") {}
};

enum class EvictionMode { kFifo, kProportional };

struct ReplayConfig {
    std::size_t soft_capacity = 2'000'000;
    double alpha = 0.6;         ///< sampling priority exponent
    double alpha_evict = -0.4;  ///< eviction exponent, proportional mode only
    EvictionMode eviction = EvictionMode::kFifo;
    double min_priority = 1e-6;
    std::uint64_t seed = 0;
};

struct SampledTransition {
    std::uint64_t key = 0;
    Transition transition;
    double probability = 0.0;
    double is_weight = 1.0;

    bool operator==(const SampledTransition&) const = default;
};

struct SampleResult {
    std::vector<SampledTransition> items;
    std::uint64_t replay_size = 0;  ///< memory size at sample time
};

struct SetPrioritiesResult {
    std::size_t updated = 0;
    std::size_t skipped = 0;   ///< keys no longer present
    std::size_t rejected = 0;  ///< non-finite or negative priorities
};

struct ReplayStats {
    std::uint64_t size = 0;
    double total_mass = 0.0;
    double max_priority = 0.0;
    double adds_per_sec = 0.0;
    double samples_per_sec = 0.0;
    std::uint64_t total_added = 0;
    std::uint64_t total_removed = 0;
    std::uint64_t stale_priority_updates = 0;
};

/**
 * Centralized prioritized replay: a keyed transition store, a sum tree over the live
 * keys and a FIFO insertion log.
 *
 * Every public operation holds one mutex for its whole duration, so each call is
 * linearizable with respect to concurrent callers.
 *
 * Adds are never refused for capacity. remove_to_fit() trims the memory back to
 * `soft_capacity`, oldest first (FIFO) or by sampling p^alpha_evict without
 * replacement (proportional).
 */
class ReplayMemory {
public:
    explicit ReplayMemory(ReplayConfig config);

    std::size_t add_batch(std::span<const Transition> transitions,
                          std::span<const double> priorities);

    SampleResult sample(std::size_t batch_size, double beta);

    SetPrioritiesResult set_priorities(std::span<const std::uint64_t> keys,
                                       std::span<const double> priorities);

    std::size_t remove_to_fit();

    ReplayStats stats() const;

    std::size_t size() const;
    bool contains(std::uint64_t key) const;
    const ReplayConfig& config() const { return config_; }

    /// Keys in insertion order, oldest first.
    std::vector<std::uint64_t> insertion_order() const;

    /// Raw (pre-exponent) priority of a live key.
    double priority_of(std::uint64_t key) const;

    /// Leaf mass of a live key, i.e. max(priority, min_priority)^alpha.
    double mass_of(std::uint64_t key) const;

    /// Key selected by a prefix-mass query on the tree. Exposed for oracle tests.
    std::uint64_t key_at_prefix_mass(double mass) const;

    /// Live (key, leaf mass) pairs in tree leaf order.
    std::vector<std::pair<std::uint64_t, double>> leaves() const;

    /// Everything needed to rebuild the memory: records in insertion order.
    struct Record {
        std::uint64_t key;
        double priority;
        Transition transition;
    };
    std::vector<Record> export_records() const;
    void import_records(std::vector<Record> records);

private:
    struct Slot {
        Transition transition;
        double priority = 0.0;
        std::uint64_t sequence = 0;
        bool live = false;
    };

    double mass_for(double priority) const;
    std::size_t allocate_slot();
    void remove_slot(std::size_t slot);
    std::size_t evict_fifo(std::size_t count);
    std::size_t evict_proportional(std::size_t count);
    std::size_t size_locked() const { return index_.size(); }

    ReplayConfig config_;
    mutable std::mutex mu_;
    SumTree tree_;
    std::vector<Slot> slots_;
    std::vector<std::size_t> free_slots_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::map<std::uint64_t, std::uint64_t> insertion_log_;  ///< sequence -> key
    std::uint64_t next_sequence_ = 0;
    std::mt19937_64 rng_;

    double max_priority_ = 0.0;
    std::uint64_t total_added_ = 0;
    std::uint64_t total_removed_ = 0;
    std::uint64_t stale_updates_ = 0;
    mutable RateMeter add_rate_;
    mutable RateMeter sample_rate_;
};

}  // namespace apex::replay
