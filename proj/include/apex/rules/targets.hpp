#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apex/nn/mlp.hpp"
#include "apex/replay/transition.hpp"

namespace apex::rules {

using nn::Matrix;

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Multi-step double-Q return: reward_sum + discount_prod * q_target_end[argmax q_online_end].
/// With discount_prod == 0 the bootstrap term is dropped entirely.
double double_q_target(double reward_sum, double discount_prod, std::span<const double> q_online_end,
                       std::span<const double> q_target_end);

inline double double_q_target(const Transition& t, std::span<const double> q_online_end,
                              std::span<const double> q_target_end) {
    return double_q_target(t.reward_sum, t.discount_prod, q_online_end, q_target_end);
}

/// Multi-step DPG critic return: reward_sum + discount_prod * q_target_end, where
/// q_target_end is the target critic evaluated at the target policy's action.
double dpg_critic_target(double reward_sum, double discount_prod, double q_target_end);

inline double dpg_critic_target(const Transition& t, double q_target_end) {
    return dpg_critic_target(t.reward_sum, t.discount_prod, q_target_end);
}

class NonFiniteTdError : public std::runtime_error {
public:
    explicit NonFiniteTdError(std::uint64_t key)
        : std::runtime_error("non-finite TD error for transition " + std::to_string(key)), key_(key) {}
    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
};

/// Batch inputs for the double-Q loss. Row k of each matrix belongs to sample k.
struct QLearningBatch {
    std::vector<std::uint64_t> keys;
    std::vector<int> actions;
    std::vector<double> reward_sums;
    std::vector<double> discount_prods;
    Matrix q_online_start;  ///< q(S_t, ., theta)
    Matrix q_online_end;    ///< q(S_t+n, ., theta)
    Matrix q_target_end;    ///< q(S_t+n, ., theta-)
    std::vector<double> is_weights;
};

struct LossResult {
    double loss = 0.0;             ///< mean_k w_k * delta_k^2 / 2
    Matrix output_grads;           ///< d loss / d outputs; non-zero only at the taken action
    std::vector<double> priorities;  ///< |delta_k|, independent of the weights
    std::vector<double> td_errors;
};

LossResult q_loss_and_priorities(const QLearningBatch& batch);

/// Shared core: squared TD loss given each sample's prediction at the taken action and its
/// target. `outputs` fixes the width of the returned gradient matrix.
LossResult td_loss(std::span<const std::uint64_t> keys, std::span<const int> actions,
                   const Matrix& predictions, std::span<const double> targets,
                   std::span<const double> is_weights);

/// Ascent direction for the policy: mean over the batch of clip(dq/da, -1, 1) * dpi/dphi.
/// `action_grads` holds dq/da per sample (batch x action_dim).
std::vector<double> dpg_policy_gradient(const nn::Mlp& policy, std::span<const double> policy_weights,
                                        const Matrix& states, const Matrix& action_grads);

/// dq/da of the critic at (s, a) for each row; the critic input is [state, action].
Matrix critic_action_gradient(const nn::Mlp& critic, std::span<const double> critic_weights,
                              const Matrix& states, const Matrix& actions);

/// dpg_policy_gradient with action gradients taken from `critic` at a = pi(s).
std::vector<double> dpg_actor_gradient(const nn::Mlp& policy, std::span<const double> policy_weights,
                                       const nn::Mlp& critic, std::span<const double> critic_weights,
                                       const Matrix& states);

Matrix concat_columns(const Matrix& a, const Matrix& b);

/// eps_i = base^(1 + alpha * i / (N - 1)); base itself when N == 1.
double epsilon_for_actor(int actor_index, int actor_count, double eps_base = 0.4,
                         double eps_alpha = 7.0);

/// action + N(0, sigma^2 I), clamped to [low, high] per dimension.
std::vector<float> gaussian_exploration(std::span<const float> action, double sigma, double low,
                                        double high, std::mt19937_64& rng);

}  // namespace apex::rules
