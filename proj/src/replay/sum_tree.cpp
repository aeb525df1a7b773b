#include "apex/replay/sum_tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace apex::replay {

std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

SumTree::SumTree(std::size_t min_capacity)
    : capacity_(next_power_of_two(std::max<std::size_t>(min_capacity, 1))),
      nodes_(2 * capacity_, 0.0) {}

void SumTree::update(std::size_t leaf, double mass) {
    if (leaf >= capacity_) throw std::out_of_range("sum tree leaf out of range");
    if (!(mass >= 0.0) || !std::isfinite(mass)) {
        throw std::invalid_argument("sum tree mass must be finite and non-negative");
    }
    std::size_t i = capacity_ + leaf;
    nodes_[i] = mass;
    for (i >>= 1; i >= 1; i >>= 1) {
        nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
    }
    if (++updates_since_rebuild_ >= kRebuildInterval) rebuild();
}

std::size_t SumTree::find_prefix(double mass) const {
    const double total_mass = total();
    if (!(total_mass > 0.0)) throw std::logic_error("prefix search on an empty sum tree");
    mass = std::clamp(mass, 0.0, total_mass);

    std::size_t i = 1;
    while (i < capacity_) {
        const double left = nodes_[2 * i];
        const double right = nodes_[2 * i + 1];
        if (mass < left || right <= 0.0) {
            i = 2 * i;
            // Rounding can leave mass == left when the right subtree is empty.
            mass = std::min(mass, std::nextafter(left, 0.0));
        } else {
            mass -= left;
            i = 2 * i + 1;
            mass = std::min(mass, std::nextafter(right, 0.0));
        }
    }
    return i - capacity_;
}

void SumTree::grow(std::size_t min_capacity) {
    if (min_capacity <= capacity_) return;
    const std::size_t cap = next_power_of_two(min_capacity);
    std::vector<double> next(2 * cap, 0.0);
    std::copy(nodes_.begin() + static_cast<std::ptrdiff_t>(capacity_), nodes_.end(),
              next.begin() + static_cast<std::ptrdiff_t>(cap));
    capacity_ = cap;
    nodes_ = std::move(next);
    rebuild();
}

void SumTree::rebuild() {
    for (std::size_t i = capacity_ - 1; i >= 1; --i) {
        nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
    }
    updates_since_rebuild_ = 0;
}

}  // namespace apex::replay
