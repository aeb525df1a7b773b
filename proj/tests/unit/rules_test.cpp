#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apex/replay/replay_memory.hpp"
#include "apex/rules/targets.hpp"

using namespace apex;
using namespace apex::rules;
using namespace apex::replay;

namespace {

// Independent evaluation: explicit sum over the reward sequence and an exhaustive search
// for the greedy online action.
double brute_force_double_q(const std::vector<double>& rewards, double gamma, bool terminal,
                            const std::vector<double>& online, const std::vector<double>& target) {
    double g = 0.0, disc = 1.0;
    for (double r : rewards) {
        g += disc * r;
        disc *= gamma;
    }
    if (terminal) return g;
    std::size_t best = 0;
    for (std::size_t a = 0; a < online.size(); ++a) {
        bool beats_all_lower = true;
        for (std::size_t b = 0; b < a; ++b) beats_all_lower &= online[a] > online[b];
        bool ties_or_beats_all_higher = true;
        for (std::size_t b = a + 1; b < online.size(); ++b) ties_or_beats_all_higher &= online[a] >= online[b];
        if (beats_all_lower && ties_or_beats_all_higher) {
            best = a;
            break;
        }
    }
    return g + disc * target[best];
}

}  // namespace

TEST(DoubleQTarget, SelectsWithOnlineEvaluatesWithTarget) {
    const std::vector<double> online{1, 5, 3}, target{2, 0, 7};
    EXPECT_NEAR(double_q_target(2.9602, 0.970299, online, target), 2.9602, 1e-12);
}

TEST(DoubleQTarget, TerminalIgnoresBootstrap) {
    const std::vector<double> online{1, 5, 3}, target{2, 1e9, 7};
    EXPECT_EQ(double_q_target(1.25, 0.0, online, target), 1.25);
}

TEST(DoubleQTarget, EqualNetworksReduceToMaxBackup) {
    const std::vector<double> q{0.5, 2.0, -1.0};
    EXPECT_DOUBLE_EQ(double_q_target(1.0, 0.9, q, q), 1.0 + 0.9 * 2.0);
}

TEST(DoubleQTarget, TiesGoToLowestIndex) {
    const std::vector<double> online{3, 3, 1}, target{10, 20, 30};
    EXPECT_DOUBLE_EQ(double_q_target(0.0, 1.0, online, target), 10.0);
    EXPECT_EQ(argmax(std::vector<double>{1, 4, 4, 4}), 1u);
}

TEST(DoubleQTarget, ArgmaxInvariantToConstantShift) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> q(6);
        for (auto& x : q) x = n(rng);
        const double c = 100.0 * n(rng);
        auto shifted = q;
        for (auto& x : shifted) x += c;
        EXPECT_EQ(argmax(q), argmax(shifted));
    }
}

TEST(DoubleQTarget, MatchesBruteForceOnRandomFragments) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2, 2);
    std::uniform_int_distribution<int> len(1, 5), acts(2, 5), coarse(0, 3);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = len(rng);
        const double gamma = std::uniform_real_distribution<double>(0.0, 0.999)(rng);
        std::vector<double> rewards(static_cast<std::size_t>(n));
        for (auto& r : rewards) r = u(rng);
        const bool terminal = trial % 4 == 0;
        const int na = acts(rng);
        std::vector<double> online(static_cast<std::size_t>(na)), target(online.size());
        // Coarse online values so ties are common.
        for (auto& q : online) q = coarse(rng);
        for (auto& q : target) q = u(rng);

        double reward_sum = 0, disc = 1;
        for (double r : rewards) {
            reward_sum += disc * r;
            disc *= gamma;
        }
        const double g = double_q_target(reward_sum, terminal ? 0.0 : disc, online, target);
        EXPECT_NEAR(g, brute_force_double_q(rewards, gamma, terminal, online, target), 1e-9);

        const std::size_t best = argmax(online);
        const double dpg = dpg_critic_target(reward_sum, terminal ? 0.0 : disc, target[best]);
        EXPECT_NEAR(dpg, terminal ? reward_sum : reward_sum + disc * target[best], 1e-9);
    }
}

TEST(DpgCriticTarget, Examples) {
    EXPECT_NEAR(dpg_critic_target(1.0, 0.9801, 2.0), 2.9602, 1e-12);
    EXPECT_EQ(dpg_critic_target(0.7, 0.0, 1e6), 0.7);
    EXPECT_EQ(dpg_critic_target(-1.5, 0.0, 3.0), -1.5);  // n = 1, gamma = 0
}

namespace {

QLearningBatch single_sample(double g, double q) {
    QLearningBatch b;
    b.keys = {42};
    b.actions = {1};
    b.reward_sums = {g};
    b.discount_prods = {0.0};
    b.q_online_start = Matrix::Zero(1, 3);
    b.q_online_start(0, 1) = q;
    b.q_online_end = Matrix::Zero(1, 3);
    b.q_target_end = Matrix::Zero(1, 3);
    b.is_weights = {1.0};
    return b;
}

}  // namespace

TEST(QLoss, SingleSampleExample) {
    const auto r = q_loss_and_priorities(single_sample(12.66319, 10.0));
    EXPECT_NEAR(r.td_errors[0], 2.66319, 1e-12);
    EXPECT_NEAR(r.loss, 3.54629048805, 1e-9);
    EXPECT_NEAR(r.priorities[0], 2.66319, 1e-12);
    EXPECT_NEAR(r.output_grads(0, 1), -2.66319, 1e-12);
    EXPECT_EQ(r.output_grads(0, 0), 0.0);
    EXPECT_EQ(r.output_grads(0, 2), 0.0);
}

TEST(QLoss, ZeroErrorGivesZeroLoss) {
    const auto r = q_loss_and_priorities(single_sample(4.0, 4.0));
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(r.output_grads.norm(), 0.0);
    EXPECT_EQ(r.priorities[0], 0.0);
}

TEST(QLoss, WeightsScaleLossNotPriorities) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    QLearningBatch b;
    const int batch = 8;
    b.q_online_start = Matrix(batch, 4);
    b.q_online_end = Matrix(batch, 4);
    b.q_target_end = Matrix(batch, 4);
    for (int k = 0; k < batch; ++k) {
        b.keys.push_back(static_cast<std::uint64_t>(k));
        b.actions.push_back(k % 4);
        b.reward_sums.push_back(n(rng));
        b.discount_prods.push_back(0.9);
        b.is_weights.push_back(std::uniform_real_distribution<double>(0.1, 1.0)(rng));
        for (int a = 0; a < 4; ++a) {
            b.q_online_start(k, a) = n(rng);
            b.q_online_end(k, a) = n(rng);
            b.q_target_end(k, a) = n(rng);
        }
    }
    const auto full = q_loss_and_priorities(b);
    auto halved = b;
    for (auto& w : halved.is_weights) w *= 0.5;
    const auto half = q_loss_and_priorities(halved);
    EXPECT_NEAR(half.loss, 0.5 * full.loss, 1e-12);
    EXPECT_LT((half.output_grads - 0.5 * full.output_grads).norm(), 1e-12);
    EXPECT_EQ(half.priorities, full.priorities);
    auto scaled = b;
    for (auto& w : scaled.is_weights) w *= 1e-3;
    EXPECT_EQ(q_loss_and_priorities(scaled).priorities, full.priorities);
}

TEST(QLoss, NonFiniteErrorNamesTheKey) {
    auto b = single_sample(std::nan(""), 1.0);
    try {
        q_loss_and_priorities(b);
        FAIL() << "expected NonFiniteTdError";
    } catch (const NonFiniteTdError& e) {
        EXPECT_EQ(e.key(), 42u);
    }
}

TEST(QLoss, GradientChainMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    nn::Mlp net(nn::MlpSpec{{3, 7, 4}, nn::Activation::kTanh, nn::Activation::kIdentity, true});
    const auto w = net.init_weights(rng);
    const int batch = 6;
    Matrix states(batch, 3), next_states(batch, 3);
    std::normal_distribution<double> n;
    for (int i = 0; i < states.size(); ++i) {
        states.data()[i] = n(rng);
        next_states.data()[i] = n(rng);
    }
    auto target_w = w;
    for (auto& x : target_w) x += 0.1 * n(rng);

    QLearningBatch b;
    for (int k = 0; k < batch; ++k) {
        b.keys.push_back(static_cast<std::uint64_t>(k));
        b.actions.push_back((k * 3) % 4);
        b.reward_sums.push_back(n(rng));
        b.discount_prods.push_back(k == 0 ? 0.0 : 0.97);
        b.is_weights.push_back(0.3 + 0.1 * k);
    }
    b.q_online_end = net.forward(w, next_states);
    b.q_target_end = net.forward(target_w, next_states);

    // Targets are held fixed: gradients flow only through q(S_t, A_t).
    auto loss_at = [&](const std::vector<double>& weights) {
        auto copy = b;
        copy.q_online_start = net.forward(weights, states);
        return q_loss_and_priorities(copy).loss;
    };
    b.q_online_start = net.forward(w, states);
    const auto r = q_loss_and_priorities(b);
    const auto analytic = net.backward(w, states, r.output_grads).weights;

    double diff = 0, norm = 0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double numeric = (loss_at(wp) - loss_at(wm)) / (2 * h);
        diff += (numeric - analytic[i]) * (numeric - analytic[i]);
        norm += numeric * numeric;
    }
    EXPECT_LT(std::sqrt(diff / norm), 1e-4);
}

// Tabular Q on a 5-state chain: action 1 moves right, action 0 returns to the start, and
// entering the last state pays 1 and ends the episode.
TEST(QLoss, TabularChainConvergesUnderPrioritizedReplay) {
    constexpr int kStates = 5, kActions = 2;
    constexpr double kGamma = 0.9;
    auto next_state = [](int s, int a) { return a == 1 ? s + 1 : 0; };

    double q_star[kStates - 1][kActions];
    for (int s = 0; s < kStates - 1; ++s) {
        q_star[s][1] = std::pow(kGamma, kStates - 2 - s);
        q_star[s][0] = kGamma * std::pow(kGamma, kStates - 2);
    }

    ReplayConfig cfg;
    cfg.soft_capacity = 64;
    cfg.seed = 3;
    ReplayMemory memory(cfg);
    std::vector<Transition> transitions;
    std::vector<double> priorities;
    for (int s = 0; s < kStates - 1; ++s) {
        for (int a = 0; a < kActions; ++a) {
            Transition t;
            t.key = static_cast<std::uint64_t>(s * kActions + a);
            t.action = a;
            const int s2 = next_state(s, a);
            t.s_start = {static_cast<float>(s)};
            t.s_end = {static_cast<float>(s2)};
            t.reward_sum = s2 == kStates - 1 ? 1.0 : 0.0;
            t.discount_prod = s2 == kStates - 1 ? 0.0 : kGamma;
            transitions.push_back(t);
            priorities.push_back(1.0);
        }
    }
    memory.add_batch(transitions, priorities);

    Matrix table = Matrix::Zero(kStates, kActions);
    Matrix target = table;
    const double lr = 0.5;
    const int batch = 4;
    for (int step = 0; step < 10000; ++step) {
        if (step % 20 == 0) target = table;
        const auto sample = memory.sample(batch, 0.4);
        QLearningBatch b;
        b.q_online_start = Matrix(batch, kActions);
        b.q_online_end = Matrix(batch, kActions);
        b.q_target_end = Matrix(batch, kActions);
        for (int k = 0; k < batch; ++k) {
            const auto& item = sample.items[static_cast<std::size_t>(k)];
            const auto& t = item.transition;
            const int s = static_cast<int>(t.s_start[0]);
            const int s2 = static_cast<int>(t.s_end[0]);
            b.keys.push_back(item.key);
            b.actions.push_back(action_index(t.action));
            b.reward_sums.push_back(t.reward_sum);
            b.discount_prods.push_back(t.discount_prod);
            b.is_weights.push_back(item.is_weight);
            b.q_online_start.row(k) = table.row(s);
            b.q_online_end.row(k) = table.row(s2);
            b.q_target_end.row(k) = target.row(s2);
        }
        const auto r = q_loss_and_priorities(b);
        std::vector<std::uint64_t> keys;
        for (int k = 0; k < batch; ++k) {
            const int s = static_cast<int>(sample.items[static_cast<std::size_t>(k)].transition.s_start[0]);
            table.row(s) -= lr * batch * r.output_grads.row(k);
            keys.push_back(b.keys[static_cast<std::size_t>(k)]);
        }
        memory.set_priorities(keys, r.priorities);
    }
    for (int s = 0; s < kStates - 1; ++s)
        for (int a = 0; a < kActions; ++a) EXPECT_NEAR(table(s, a), q_star[s][a], 0.01) << s << "," << a;
}

TEST(DpgPolicyGradient, ClipsActionGradientBeforeChainRule) {
    // Linear policy a = w2 * (w1 * s + b1) + b2 with w1 = b1 = 0 and w2 = 1, so a = b2 = phi.
    nn::Mlp policy(nn::MlpSpec{{1, 1, 1}, nn::Activation::kIdentity});
    std::vector<double> w{0.0, 0.0, 1.0, 0.0};
    const Matrix states = Matrix::Ones(1, 1);
    auto toy_critic_grad = [](double a) { return -2.0 * (a - 2.0); };  // d/da of -(a - 2)^2

    const double phi = 0.0;
    Matrix dq_da(1, 1);
    dq_da(0, 0) = toy_critic_grad(phi);
    EXPECT_DOUBLE_EQ(dq_da(0, 0), 4.0);
    const auto g = dpg_policy_gradient(policy, w, states, dq_da);
    EXPECT_DOUBLE_EQ(g[3], 1.0);

    // Ascent on phi moves toward the maximiser of the critic.
    w[3] += 0.1 * g[3];
    EXPECT_GT(-(w[3] - 2) * (w[3] - 2), -(phi - 2) * (phi - 2));

    dq_da(0, 0) = 0.5;
    EXPECT_DOUBLE_EQ(dpg_policy_gradient(policy, w, states, dq_da)[3], 0.5);
    dq_da(0, 0) = 0.0;
    for (double x : dpg_policy_gradient(policy, w, states, dq_da)) EXPECT_EQ(x, 0.0);
}

TEST(DpgPolicyGradient, MatchesFiniteDifferencesOfCriticThroughPolicy) {
    std::mt19937_64 rng(23);
    nn::Mlp policy(nn::MlpSpec{{3, 6, 2}, nn::Activation::kRelu, nn::Activation::kTanh});
    nn::Mlp critic(nn::MlpSpec{{5, 8, 1}, nn::Activation::kTanh});
    auto pw = policy.init_weights(rng);
    auto cw = critic.init_weights(rng);
    for (auto& x : pw) x += 0.05 * std::normal_distribution<double>()(rng);
    Matrix states(4, 3);
    for (int i = 0; i < states.size(); ++i) states.data()[i] = std::normal_distribution<double>()(rng);

    // Small critic weights keep |dq/da| < 1, so clipping is inactive and the result is the
    // plain gradient of mean_k q(s_k, pi(s_k)).
    for (auto& x : cw) x *= 0.3;
    const Matrix actions = policy.forward(pw, states);
    const Matrix dq_da = critic_action_gradient(critic, cw, states, actions);
    ASSERT_LT(dq_da.cwiseAbs().maxCoeff(), 1.0);

    auto objective = [&](const std::vector<double>& p) {
        const Matrix a = policy.forward(p, states);
        return critic.forward(cw, concat_columns(states, a)).mean();
    };
    const auto analytic = dpg_actor_gradient(policy, pw, critic, cw, states);
    const double h = 1e-5;
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < pw.size(); ++i) {
        auto up = pw, dn = pw;
        up[i] += h;
        dn[i] -= h;
        const double numeric = (objective(up) - objective(dn)) / (2 * h);
        diff += (numeric - analytic[i]) * (numeric - analytic[i]);
        norm += numeric * numeric;
    }
    EXPECT_LT(std::sqrt(diff / norm), 1e-4);
}

TEST(Exploration, EpsilonLadder) {
    EXPECT_DOUBLE_EQ(epsilon_for_actor(0, 8), 0.4);
    EXPECT_NEAR(epsilon_for_actor(7, 8), 6.5536e-4, 1e-15);
    EXPECT_NEAR(epsilon_for_actor(6, 8), 1.6384e-3, 1e-15);
    EXPECT_DOUBLE_EQ(epsilon_for_actor(0, 1), 0.4);
    for (int i = 1; i < 32; ++i) EXPECT_LT(epsilon_for_actor(i, 32), epsilon_for_actor(i - 1, 32));
    EXPECT_THROW(epsilon_for_actor(8, 8), std::invalid_argument);
}

TEST(Exploration, GaussianNoise) {
    std::mt19937_64 rng(9);
    const std::vector<float> a{0.25f, -0.5f};
    EXPECT_EQ(gaussian_exploration(a, 0.0, -1, 1, rng), a);

    const double sigma = 0.3;
    double sum = 0, sum_sq = 0;
    const int n = 100000;
    const std::vector<float> centre{0.0f};
    for (int i = 0; i < n; ++i) {
        const double x = gaussian_exploration(centre, sigma, -100, 100, rng)[0];
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum_sq / n - mean * mean);
    EXPECT_NEAR(sd, sigma, 0.02 * sigma);

    const std::vector<float> at_bound{1.0f};
    for (int i = 0; i < 200; ++i) EXPECT_LE(gaussian_exploration(at_bound, 0.3, -1, 1, rng)[0], 1.0f);
}
