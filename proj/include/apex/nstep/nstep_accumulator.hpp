#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "apex/replay/transition.hpp"

namespace apex::nstep {

/// Builds n-step transitions incrementally from a stream of environment steps.
///
/// Each pushed step carries S_t, A_t, the reward R_t+1 and discount flag observed after
/// acting, and q(S_t, .). Once n steps are buffered the oldest one is completed by the next
/// push. Keys are derived from the actor id and the actor-local step counter.
class NStepAccumulator {
public:
    NStepAccumulator(int n, double gamma, std::uint64_t actor_id = 0);

    /// `discount_flag` is 0 exactly on the step that ended the episode; every buffered entry
    /// is then emitted with discount_prod 0 and the ring is cleared. `terminal_state` is
    /// stored as s_end of those transitions (the last start state is used if it is empty).
    std::vector<Transition> push_step(const Observation& state, const Action& action, double reward,
                                      double discount_flag, std::span<const float> q_values,
                                      const Observation& terminal_state = {});

    /// Ends an episode that was cut off without terminating (e.g. a step cap): every buffered
    /// entry is emitted bootstrapping from `final_state`.
    std::vector<Transition> flush_bootstrapped(const Observation& final_state,
                                               std::span<const float> final_q);

    /// Drops buffered entries without emitting them.
    void clear() { ring_.clear(); }

    std::size_t buffered() const { return ring_.size(); }
    int n() const { return n_; }
    double gamma() const { return gamma_; }
    std::uint64_t steps() const { return step_; }

    struct Entry {
        std::uint64_t step;
        Observation state;
        Action action;
        double partial_return;
        double partial_discount;
        std::vector<float> q;
    };
    const std::deque<Entry>& entries() const { return ring_; }

private:
    Transition complete(Entry&& e, const Observation& s_end, std::span<const float> q_end) const;

    int n_;
    double gamma_;
    std::uint64_t actor_id_;
    std::uint64_t step_ = 0;
    std::deque<Entry> ring_;
};

/// How an actor turns its cached q-values into an initial priority.
enum class PriorityRule {
    kDoubleQ,  ///< q_start / q_end are q(S, .) over discrete actions
    kDpg,      ///< q_start = [q(S, A), q(S, pi(S))]; q_end likewise at S_t+n
};

/// |G - q(S_t, A_t)| with G the learner's multi-step target computed from the actor's copy of
/// the values. `bootstrap_q` evaluates and `online_q` selects the bootstrap action.
double compute_initial_priority(const Transition& t, std::span<const double> bootstrap_q,
                                std::span<const double> online_q);

/// Same, taking both value vectors from the transition's cached q_end.
double compute_initial_priority(const Transition& t, PriorityRule rule = PriorityRule::kDoubleQ);

}  // namespace apex::nstep
