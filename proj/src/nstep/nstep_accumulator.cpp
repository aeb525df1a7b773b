#include "apex/nstep/nstep_accumulator.hpp"

#include <cmath>
#include <stdexcept>

#include "apex/rules/targets.hpp"

namespace apex::nstep {

NStepAccumulator::NStepAccumulator(int n, double gamma, std::uint64_t actor_id)
    : n_(n), gamma_(gamma), actor_id_(actor_id) {
    if (n < 1) throw std::invalid_argument("n must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (actor_id >= transition_key::kMaxActors) throw std::invalid_argument("actor id too large");
}

Transition NStepAccumulator::complete(Entry&& e, const Observation& s_end,
                                      std::span<const float> q_end) const {
    Transition t;
    t.key = transition_key::make(actor_id_, e.step);
    t.s_start = std::move(e.state);
    t.action = std::move(e.action);
    t.reward_sum = e.partial_return;
    t.discount_prod = e.partial_discount;
    t.s_end = s_end;
    t.q_start = std::move(e.q);
    t.q_end.assign(q_end.begin(), q_end.end());
    return t;
}

std::vector<Transition> NStepAccumulator::push_step(const Observation& state, const Action& action,
                                                    double reward, double discount_flag,
                                                    std::span<const float> q_values,
                                                    const Observation& terminal_state) {
    if (!std::isfinite(reward)) throw std::invalid_argument("non-finite reward");
    if (!(discount_flag >= 0.0 && discount_flag <= 1.0)) {
        throw std::invalid_argument("discount flag must lie in [0, 1]");
    }
    std::vector<Transition> out;
    if (ring_.size() == static_cast<std::size_t>(n_)) {
        Entry oldest = std::move(ring_.front());
        ring_.pop_front();
        out.push_back(complete(std::move(oldest), state, q_values));
    }
    ring_.push_back(Entry{step_++, state, action, 0.0, 1.0, {q_values.begin(), q_values.end()}});

    const double step_discount = gamma_ * discount_flag;
    for (auto& e : ring_) {
        e.partial_return += e.partial_discount * reward;
        e.partial_discount *= step_discount;
    }
    if (discount_flag == 0.0) {
        const Observation& s_end = terminal_state.empty() ? ring_.back().state : terminal_state;
        while (!ring_.empty()) {
            Entry e = std::move(ring_.front());
            ring_.pop_front();
            e.partial_discount = 0.0;
            out.push_back(complete(std::move(e), s_end, {}));
        }
    }
    return out;
}

std::vector<Transition> NStepAccumulator::flush_bootstrapped(const Observation& final_state,
                                                             std::span<const float> final_q) {
    std::vector<Transition> out;
    while (!ring_.empty()) {
        Entry e = std::move(ring_.front());
        ring_.pop_front();
        out.push_back(complete(std::move(e), final_state, final_q));
    }
    return out;
}

double compute_initial_priority(const Transition& t, std::span<const double> bootstrap_q,
                                std::span<const double> online_q) {
    if (t.q_start.empty()) throw std::invalid_argument("transition has no cached q-values");
    const int a = is_discrete(t.action) ? action_index(t.action) : 0;
    if (a < 0 || static_cast<std::size_t>(a) >= t.q_start.size()) {
        throw std::out_of_range("action outside cached q-values");
    }
    const double g = rules::double_q_target(t.reward_sum, t.discount_prod, online_q, bootstrap_q);
    return std::abs(g - static_cast<double>(t.q_start[static_cast<std::size_t>(a)]));
}

double compute_initial_priority(const Transition& t, PriorityRule rule) {
    if (t.q_start.empty()) throw std::invalid_argument("transition has no cached q-values");
    if (rule == PriorityRule::kDpg) {
        if (t.discount_prod != 0.0 && t.q_end.size() < 2) {
            throw std::invalid_argument("bootstrapped transition lacks q(S_t+n, pi(S_t+n))");
        }
        const double bootstrap = t.discount_prod == 0.0 ? 0.0 : static_cast<double>(t.q_end[1]);
        const double g = rules::dpg_critic_target(t.reward_sum, t.discount_prod, bootstrap);
        return std::abs(g - static_cast<double>(t.q_start[0]));
    }
    if (t.discount_prod == 0.0) {
        const std::vector<double> none;
        return compute_initial_priority(t, none, none);
    }
    const std::vector<double> q(t.q_end.begin(), t.q_end.end());
    return compute_initial_priority(t, q, q);
}

}  // namespace apex::nstep
