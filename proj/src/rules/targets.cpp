#include "apex/rules/targets.hpp"

#include <algorithm>
#include <cmath>

namespace apex::rules {

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

double double_q_target(double reward_sum, double discount_prod, std::span<const double> q_online_end,
                       std::span<const double> q_target_end) {
    if (discount_prod == 0.0) return reward_sum;
    if (q_online_end.size() != q_target_end.size()) {
        throw std::invalid_argument("online and target q vectors differ in size");
    }
    return reward_sum + discount_prod * q_target_end[argmax(q_online_end)];
}

double dpg_critic_target(double reward_sum, double discount_prod, double q_target_end) {
    if (discount_prod == 0.0) return reward_sum;
    return reward_sum + discount_prod * q_target_end;
}

LossResult td_loss(std::span<const std::uint64_t> keys, std::span<const int> actions,
                   const Matrix& predictions, std::span<const double> targets,
                   std::span<const double> is_weights) {
    const auto n = static_cast<Eigen::Index>(targets.size());
    if (n == 0) throw std::invalid_argument("empty batch");
    if (predictions.rows() != n || static_cast<Eigen::Index>(actions.size()) != n ||
        static_cast<Eigen::Index>(is_weights.size()) != n ||
        static_cast<Eigen::Index>(keys.size()) != n) {
        throw std::invalid_argument("batch components differ in length");
    }
    LossResult r;
    r.output_grads = Matrix::Zero(predictions.rows(), predictions.cols());
    r.priorities.resize(targets.size());
    r.td_errors.resize(targets.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const int a = actions[i];
        if (a < 0 || a >= predictions.cols()) throw std::out_of_range("action index out of range");
        const double delta = targets[i] - predictions(k, a);
        if (!std::isfinite(delta)) throw NonFiniteTdError(keys[i]);
        r.td_errors[i] = delta;
        r.priorities[i] = std::abs(delta);
        r.loss += is_weights[i] * 0.5 * delta * delta * inv_n;
        r.output_grads(k, a) = -is_weights[i] * delta * inv_n;
    }
    return r;
}

LossResult q_loss_and_priorities(const QLearningBatch& b) {
    const auto n = b.reward_sums.size();
    if (static_cast<std::size_t>(b.q_online_end.rows()) != n ||
        static_cast<std::size_t>(b.q_target_end.rows()) != n || b.discount_prods.size() != n) {
        throw std::invalid_argument("q-learning batch components differ in length");
    }
    std::vector<double> targets(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        const Eigen::RowVectorXd online = b.q_online_end.row(row);
        const Eigen::RowVectorXd target = b.q_target_end.row(row);
        targets[k] = double_q_target(b.reward_sums[k], b.discount_prods[k],
                                     std::span(online.data(), static_cast<std::size_t>(online.size())),
                                     std::span(target.data(), static_cast<std::size_t>(target.size())));
    }
    return td_loss(b.keys, b.actions, b.q_online_start, targets, b.is_weights);
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw nn::ShapeError("row counts differ");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

std::vector<double> dpg_policy_gradient(const nn::Mlp& policy, std::span<const double> policy_weights,
                                        const Matrix& states, const Matrix& action_grads) {
    if (action_grads.rows() != states.rows() || action_grads.cols() != policy.output_dim()) {
        throw nn::ShapeError("action gradient shape does not match policy output");
    }
    const Matrix upstream =
        action_grads.cwiseMax(-1.0).cwiseMin(1.0) / static_cast<double>(states.rows());
    return policy.backward(policy_weights, states, upstream).weights;
}

Matrix critic_action_gradient(const nn::Mlp& critic, std::span<const double> critic_weights,
                              const Matrix& states, const Matrix& actions) {
    const Matrix input = concat_columns(states, actions);
    const Matrix ones = Matrix::Ones(states.rows(), 1);
    const auto g = critic.backward(critic_weights, input, ones);
    return g.inputs.rightCols(actions.cols());
}

std::vector<double> dpg_actor_gradient(const nn::Mlp& policy, std::span<const double> policy_weights,
                                       const nn::Mlp& critic, std::span<const double> critic_weights,
                                       const Matrix& states) {
    const Matrix actions = policy.forward(policy_weights, states);
    const Matrix dq_da = critic_action_gradient(critic, critic_weights, states, actions);
    return dpg_policy_gradient(policy, policy_weights, states, dq_da);
}

double epsilon_for_actor(int actor_index, int actor_count, double eps_base, double eps_alpha) {
    if (actor_count < 1 || actor_index < 0 || actor_index >= actor_count) {
        throw std::invalid_argument("actor index out of range");
    }
    if (actor_count == 1) return eps_base;
    const double exponent =
        1.0 + eps_alpha * static_cast<double>(actor_index) / static_cast<double>(actor_count - 1);
    return std::pow(eps_base, exponent);
}

std::vector<float> gaussian_exploration(std::span<const float> action, double sigma, double low,
                                        double high, std::mt19937_64& rng) {
    if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
    std::vector<float> out(action.begin(), action.end());
    if (sigma == 0.0) return out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& a : out) a = static_cast<float>(std::clamp(a + noise(rng), low, high));
    return out;
}

}  // namespace apex::rules
