#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace apex::replay {

/**
 * Complete binary tree of non-negative masses with O(log n) point update and
 * prefix-mass search.
 *
 * Stored flat: node 1 is the root, node i has children 2i and 2i+1, and leaf j lives at
 * index capacity + j. Capacity is always a power of two.
 *
 * Internal sums are kept in double precision. Every `kRebuildInterval` updates the
 * internal nodes are recomputed from the leaves to bound accumulated rounding drift.
 */
class SumTree {
public:
    static constexpr std::uint64_t kRebuildInterval = 1'000'000;

    explicit SumTree(std::size_t min_capacity);

    /// Sets leaf `leaf` to `mass` and repairs every ancestor.
    void update(std::size_t leaf, double mass);

    double get(std::size_t leaf) const { return nodes_[capacity_ + leaf]; }
    double total() const { return nodes_[1]; }
    std::size_t capacity() const { return capacity_; }

    /// Returns the leaf whose cumulative-mass interval contains `mass`.
    ///
    /// `mass` is clamped into [0, total). The descent never enters a zero-mass subtree,
    /// so the returned leaf always has positive mass whenever total() > 0.
    std::size_t find_prefix(double mass) const;

    /// Doubles capacity until it is at least `min_capacity`, keeping all leaf masses.
    void grow(std::size_t min_capacity);

    /// Recomputes every internal node from the leaves.
    void rebuild();

    std::uint64_t updates_since_rebuild() const { return updates_since_rebuild_; }

private:
    std::size_t capacity_;
    std::vector<double> nodes_;
    std::uint64_t updates_since_rebuild_ = 0;
};

std::size_t next_power_of_two(std::size_t n);

}  // namespace apex::replay
