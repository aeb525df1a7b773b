#pragma once

#include <cstdint>
#include <variant>
#include <vector>

namespace apex {

using Observation = std::vector<float>;

/// Discrete action index or a real-valued action vector.
using Action = std::variant<int, std::vector<float>>;

inline bool is_discrete(const Action& a) { return std::holds_alternative<int>(a); }
inline int action_index(const Action& a) { return std::get<int>(a); }
inline const std::vector<float>& action_vector(const Action& a) {
    return std::get<std::vector<float>>(a);
}

/// Key layout: actor id in the top 16 bits, actor step in the next 44, duplicate index in
/// the low 4. Keys from different actors, steps or duplicates never collide.
namespace transition_key {
inline constexpr int kDupBits = 4;
inline constexpr int kStepBits = 44;
inline constexpr std::uint64_t kMaxDuplicates = 1ULL << kDupBits;
inline constexpr std::uint64_t kMaxActors = 1ULL << 16;
inline constexpr std::uint64_t kStepMask = (1ULL << kStepBits) - 1;

inline constexpr std::uint64_t make(std::uint64_t actor_id, std::uint64_t step,
                                    std::uint64_t dup = 0) {
    return (actor_id << (kStepBits + kDupBits)) | ((step & kStepMask) << kDupBits) |
           (dup & (kMaxDuplicates - 1));
}
inline constexpr std::uint64_t actor_of(std::uint64_t key) { return key >> (kStepBits + kDupBits); }
inline constexpr std::uint64_t step_of(std::uint64_t key) { return (key >> kDupBits) & kStepMask; }
inline constexpr std::uint64_t dup_of(std::uint64_t key) { return key & (kMaxDuplicates - 1); }
}  // namespace transition_key

/// One n-step experience record.
///
/// `discount_prod` is the product of per-step discounts over the window, zero when the
/// episode terminated inside it. `q_start`/`q_end` are the generating actor's cached value
/// estimates; the learner never reads them.
struct Transition {
    std::uint64_t key = 0;
    Observation s_start;
    Action action = 0;
    double reward_sum = 0.0;
    double discount_prod = 0.0;
    Observation s_end;
    std::vector<float> q_start;
    std::vector<float> q_end;

    bool operator==(const Transition&) const = default;
};

}  // namespace apex
