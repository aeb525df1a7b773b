#include "apex/replay/replay_memory.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace apex::replay {

namespace {

constexpr double kTreeHeadroom = 1.25;

bool valid_priority(double p) { return std::isfinite(p) && p >= 0.0; }

}  // namespace

ReplayMemory::ReplayMemory(ReplayConfig config)
    : config_(config),
      tree_(static_cast<std::size_t>(
          std::ceil(static_cast<double>(std::max<std::size_t>(config.soft_capacity, 1)) *
                    kTreeHeadroom))),
      rng_(config.seed) {
    if (config_.soft_capacity == 0) throw std::invalid_argument("soft_capacity must be positive");
    if (!(config_.alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    if (!(config_.min_priority > 0.0)) throw std::invalid_argument("min_priority must be positive");
}

double ReplayMemory::mass_for(double priority) const {
    return std::pow(std::max(priority, config_.min_priority), config_.alpha);
}

std::size_t ReplayMemory::allocate_slot() {
    if (!free_slots_.empty()) {
        const auto s = free_slots_.back();
        free_slots_.pop_back();
        return s;
    }
    slots_.emplace_back();
    const auto s = slots_.size() - 1;
    if (s >= tree_.capacity()) tree_.grow(s + 1);
    return s;
}

void ReplayMemory::remove_slot(std::size_t slot) {
    auto& s = slots_[slot];
    index_.erase(s.transition.key);
    insertion_log_.erase(s.sequence);
    tree_.update(slot, 0.0);
    s = Slot{};
    free_slots_.push_back(slot);
    ++total_removed_;
}

std::size_t ReplayMemory::add_batch(std::span<const Transition> transitions,
                                    std::span<const double> priorities) {
    if (transitions.size() != priorities.size()) {
        throw std::invalid_argument("add_batch: transitions and priorities differ in length");
    }
    std::lock_guard lock(mu_);

    std::unordered_set<std::uint64_t> batch_keys;
    batch_keys.reserve(transitions.size());
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        if (!valid_priority(priorities[i])) {
            throw std::invalid_argument("add_batch: priority for key " +
                                        std::to_string(transitions[i].key) +
                                        " is not a finite non-negative number");
        }
        const auto key = transitions[i].key;
        if (index_.contains(key) || !batch_keys.insert(key).second) throw DuplicateKeyError(key);
    }

    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const auto slot = allocate_slot();
        auto& s = slots_[slot];
        s.transition = transitions[i];
        s.priority = priorities[i];
        s.sequence = next_sequence_++;
        s.live = true;
        index_.emplace(s.transition.key, slot);
        insertion_log_.emplace(s.sequence, s.transition.key);
        tree_.update(slot, mass_for(s.priority));
        max_priority_ = std::max(max_priority_, s.priority);
    }
    total_added_ += transitions.size();
    add_rate_.record(transitions.size());
    return transitions.size();
}

SampleResult ReplayMemory::sample(std::size_t batch_size, double beta) {
    if (batch_size == 0) throw std::invalid_argument("sample: batch_size must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("sample: beta must be in [0,1]");
    std::lock_guard lock(mu_);
    if (index_.empty()) throw EmptyMemoryError();

    const double total = tree_.total();
    const double segment = total / static_cast<double>(batch_size);
    const double m = static_cast<double>(index_.size());
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SampleResult out;
    out.replay_size = index_.size();
    out.items.reserve(batch_size);
    double max_weight = 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) {
        const double u = (static_cast<double>(i) + unit(rng_)) * segment;
        const auto slot = tree_.find_prefix(u);
        const auto& s = slots_[slot];
        SampledTransition item;
        item.key = s.transition.key;
        item.transition = s.transition;
        item.probability = tree_.get(slot) / total;
        item.is_weight = std::pow(m * item.probability, -beta);
        max_weight = std::max(max_weight, item.is_weight);
        out.items.push_back(std::move(item));
    }
    for (auto& item : out.items) item.is_weight /= max_weight;
    sample_rate_.record(batch_size);
    return out;
}

SetPrioritiesResult ReplayMemory::set_priorities(std::span<const std::uint64_t> keys,
                                                 std::span<const double> priorities) {
    if (keys.size() != priorities.size()) {
        throw std::invalid_argument("set_priorities: keys and priorities differ in length");
    }
    std::lock_guard lock(mu_);
    SetPrioritiesResult result;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!valid_priority(priorities[i])) {
            ++result.rejected;
            continue;
        }
        const auto it = index_.find(keys[i]);
        if (it == index_.end()) {
            ++result.skipped;
            continue;
        }
        auto& s = slots_[it->second];
        s.priority = priorities[i];
        tree_.update(it->second, mass_for(s.priority));
        max_priority_ = std::max(max_priority_, s.priority);
        ++result.updated;
    }
    stale_updates_ += result.skipped;
    return result;
}

std::size_t ReplayMemory::remove_to_fit() {
    std::lock_guard lock(mu_);
    const auto n = size_locked();
    if (n <= config_.soft_capacity) return 0;
    const auto excess = n - config_.soft_capacity;
    return config_.eviction == EvictionMode::kFifo ? evict_fifo(excess)
                                                    : evict_proportional(excess);
}

std::size_t ReplayMemory::evict_fifo(std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        const auto key = insertion_log_.begin()->second;
        remove_slot(index_.at(key));
    }
    return count;
}

std::size_t ReplayMemory::evict_proportional(std::size_t count) {
    SumTree eviction(tree_.capacity());
    for (const auto& [key, slot] : index_) {
        eviction.update(slot, std::pow(std::max(slots_[slot].priority, config_.min_priority),
                                       config_.alpha_evict));
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        const auto slot = eviction.find_prefix(unit(rng_) * eviction.total());
        eviction.update(slot, 0.0);
        remove_slot(slot);
    }
    return count;
}

ReplayStats ReplayMemory::stats() const {
    std::lock_guard lock(mu_);
    ReplayStats s;
    s.size = index_.size();
    s.total_mass = tree_.total();
    s.max_priority = max_priority_;
    s.adds_per_sec = add_rate_.rate();
    s.samples_per_sec = sample_rate_.rate();
    s.total_added = total_added_;
    s.total_removed = total_removed_;
    s.stale_priority_updates = stale_updates_;
    return s;
}

std::size_t ReplayMemory::size() const {
    std::lock_guard lock(mu_);
    return index_.size();
}

bool ReplayMemory::contains(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    return index_.contains(key);
}

std::vector<std::uint64_t> ReplayMemory::insertion_order() const {
    std::lock_guard lock(mu_);
    std::vector<std::uint64_t> keys;
    keys.reserve(insertion_log_.size());
    for (const auto& [seq, key] : insertion_log_) keys.push_back(key);
    return keys;
}

double ReplayMemory::priority_of(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    return slots_[index_.at(key)].priority;
}

double ReplayMemory::mass_of(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    return tree_.get(index_.at(key));
}

std::uint64_t ReplayMemory::key_at_prefix_mass(double mass) const {
    std::lock_guard lock(mu_);
    if (index_.empty()) throw EmptyMemoryError();
    return slots_[tree_.find_prefix(mass)].transition.key;
}

std::vector<std::pair<std::uint64_t, double>> ReplayMemory::leaves() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::uint64_t, double>> out;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (slots_[i].live) out.emplace_back(slots_[i].transition.key, tree_.get(i));
    }
    return out;
}

std::vector<ReplayMemory::Record> ReplayMemory::export_records() const {
    std::lock_guard lock(mu_);
    std::vector<Record> out;
    out.reserve(index_.size());
    for (const auto& [seq, key] : insertion_log_) {
        const auto& s = slots_[index_.at(key)];
        out.push_back(Record{key, s.priority, s.transition});
    }
    return out;
}

void ReplayMemory::import_records(std::vector<Record> records) {
    std::vector<Transition> transitions;
    std::vector<double> priorities;
    transitions.reserve(records.size());
    priorities.reserve(records.size());
    for (auto& r : records) {
        r.transition.key = r.key;
        transitions.push_back(std::move(r.transition));
        priorities.push_back(r.priority);
    }
    add_batch(transitions, priorities);
}

}  // namespace apex::replay
