#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <thread>

#include "apex/nstep/nstep_accumulator.hpp"
#include "apex/nstep/send_buffer.hpp"
#include "apex/rules/targets.hpp"

using namespace apex;
using namespace apex::nstep;

namespace {

Observation obs(int i) { return {static_cast<float>(i)}; }

const std::vector<float> kQ{0.0f, 0.0f};

struct Step {
    double reward;
    double flag;
};

// Recomputes every step's n-step return and discount directly from the raw sequence.
std::map<std::uint64_t, std::pair<double, double>> brute_force(const std::vector<Step>& episode, int n,
                                                               double gamma) {
    std::map<std::uint64_t, std::pair<double, double>> out;
    const int len = static_cast<int>(episode.size());
    for (int t = 0; t < len; ++t) {
        double g = 0, disc = 1;
        bool terminated = false;
        int j = t;
        for (; j < len && j < t + n; ++j) {
            g += disc * episode[static_cast<std::size_t>(j)].reward;
            disc *= gamma * episode[static_cast<std::size_t>(j)].flag;
            if (episode[static_cast<std::size_t>(j)].flag == 0.0) {
                terminated = true;
                ++j;
                break;
            }
        }
        // A full window is completed only by the push that supplies S_t+n.
        if (!terminated && t + n >= len) continue;
        out[static_cast<std::uint64_t>(t)] = {g, terminated ? 0.0 : disc};
    }
    return out;
}

}  // namespace

TEST(NStepAccumulator, ThreeStepExample) {
    NStepAccumulator acc(3, 0.99);
    EXPECT_TRUE(acc.push_step(obs(0), 0, 1.0, 1.0, kQ).empty());
    EXPECT_TRUE(acc.push_step(obs(1), 0, 0.0, 1.0, kQ).empty());
    EXPECT_TRUE(acc.push_step(obs(2), 0, 2.0, 1.0, kQ).empty());
    const auto out = acc.push_step(obs(3), 1, 5.0, 1.0, kQ);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(out[0].reward_sum, 2.9602, 1e-12);
    EXPECT_NEAR(out[0].discount_prod, 0.970299, 1e-12);
    EXPECT_EQ(out[0].s_start, obs(0));
    EXPECT_EQ(out[0].s_end, obs(3));
    EXPECT_EQ(transition_key::step_of(out[0].key), 0u);
}

TEST(NStepAccumulator, OneStepWindow) {
    NStepAccumulator acc(1, 0.9);
    EXPECT_TRUE(acc.push_step(obs(0), 0, 0.5, 1.0, kQ).empty());
    for (int i = 1; i < 10; ++i) {
        const auto out = acc.push_step(obs(i), 0, static_cast<double>(i), 1.0, kQ);
        ASSERT_EQ(out.size(), 1u);
        EXPECT_EQ(out[0].reward_sum, i == 1 ? 0.5 : static_cast<double>(i - 1));
        EXPECT_DOUBLE_EQ(out[0].discount_prod, 0.9);
    }
}

TEST(NStepAccumulator, TerminalTruncatesAndClears) {
    NStepAccumulator acc(3, 0.99);
    EXPECT_TRUE(acc.push_step(obs(0), 0, 0.0, 1.0, kQ).empty());
    const auto out = acc.push_step(obs(1), 1, 1.0, 0.0, kQ, obs(2));
    ASSERT_EQ(out.size(), 2u);
    for (const auto& t : out) {
        EXPECT_EQ(t.discount_prod, 0.0);
        EXPECT_EQ(t.s_end, obs(2));
    }
    EXPECT_NEAR(out[0].reward_sum, 0.99, 1e-12);
    EXPECT_EQ(out[1].reward_sum, 1.0);
    EXPECT_EQ(acc.buffered(), 0u);
}

TEST(NStepAccumulator, BootstrappedFlushKeepsPartialDiscount) {
    NStepAccumulator acc(4, 0.5);
    acc.push_step(obs(0), 0, 1.0, 1.0, kQ);
    acc.push_step(obs(1), 0, 1.0, 1.0, kQ);
    const std::vector<float> q_final{3.0f, 4.0f};
    const auto out = acc.flush_bootstrapped(obs(2), q_final);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out[0].reward_sum, 1.5);
    EXPECT_DOUBLE_EQ(out[0].discount_prod, 0.25);
    EXPECT_DOUBLE_EQ(out[1].discount_prod, 0.5);
    EXPECT_EQ(out[1].q_end, q_final);
}

TEST(NStepAccumulator, RejectsBadInput) {
    NStepAccumulator acc(2, 0.9);
    EXPECT_THROW(acc.push_step(obs(0), 0, std::nan(""), 1.0, kQ), std::invalid_argument);
    EXPECT_THROW(acc.push_step(obs(0), 0, INFINITY, 1.0, kQ), std::invalid_argument);
    EXPECT_THROW(NStepAccumulator(0, 0.9), std::invalid_argument);
    EXPECT_THROW(NStepAccumulator(3, 1.0), std::invalid_argument);
}

TEST(NStepAccumulator, MatchesBruteForceOnRandomEpisodes) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> r(-1, 1);
    std::uniform_int_distribution<int> lens(1, 200), ns(1, 6);
    for (int episode = 0; episode < 300; ++episode) {
        const int n = ns(rng);
        const double gamma = std::uniform_real_distribution<double>(0.0, 0.999)(rng);
        const int len = lens(rng);
        const bool terminates = episode % 2 == 0;
        std::vector<Step> steps;
        for (int t = 0; t < len; ++t) steps.push_back({r(rng), terminates && t == len - 1 ? 0.0 : 1.0});

        NStepAccumulator acc(n, gamma, 3);
        std::vector<Transition> emitted;
        for (int t = 0; t < len; ++t) {
            auto out = acc.push_step(obs(t), t % 2, steps[static_cast<std::size_t>(t)].reward,
                                     steps[static_cast<std::size_t>(t)].flag, kQ);
            emitted.insert(emitted.end(), out.begin(), out.end());
        }
        const auto expected = brute_force(steps, n, gamma);
        ASSERT_EQ(emitted.size(), expected.size());
        for (const auto& t : emitted) {
            const auto step = transition_key::step_of(t.key);
            EXPECT_EQ(transition_key::actor_of(t.key), 3u);
            const auto it = expected.find(step);
            ASSERT_NE(it, expected.end());
            EXPECT_NEAR(t.reward_sum, it->second.first, 1e-9);
            EXPECT_NEAR(t.discount_prod, it->second.second, 1e-9);
            EXPECT_EQ(t.s_start, obs(static_cast<int>(step)));
        }
        // Whatever is still buffered accounts for the remaining steps exactly once.
        EXPECT_EQ(emitted.size() + acc.buffered(), static_cast<std::size_t>(len));
    }
}

TEST(NStepAccumulator, EveryStepEmittedOnceAcrossEpisodes) {
    NStepAccumulator acc(3, 0.9);
    std::map<std::uint64_t, int> seen;
    int total_steps = 0;
    for (int episode = 0; episode < 20; ++episode) {
        const int len = 1 + episode % 7;
        for (int t = 0; t < len; ++t, ++total_steps) {
            for (const auto& tr : acc.push_step(obs(t), 0, 1.0, t == len - 1 ? 0.0 : 1.0, kQ)) {
                ++seen[tr.key];
            }
        }
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(total_steps));
    for (const auto& [key, count] : seen) EXPECT_EQ(count, 1) << key;
}

TEST(InitialPriority, Examples) {
    Transition t;
    t.action = 1;
    t.q_start = {0.0f, 10.0f};
    t.reward_sum = 12.66319;
    t.discount_prod = 0.0;
    EXPECT_NEAR(compute_initial_priority(t), 2.66319, 1e-5);

    t.reward_sum = 10.0;
    EXPECT_EQ(compute_initial_priority(t), 0.0);

    Transition terminal;
    terminal.action = 0;
    terminal.q_start = {0.0f, 7.0f};
    terminal.reward_sum = 1.0;
    terminal.discount_prod = 0.0;
    EXPECT_DOUBLE_EQ(compute_initial_priority(terminal), 1.0);
}

TEST(InitialPriority, DoubleQUsesSeparateSelectorAndEvaluator) {
    Transition t;
    t.action = 0;
    t.q_start = {1.0f, 0.0f, 0.0f};
    t.reward_sum = 2.9602;
    t.discount_prod = 0.970299;
    const std::vector<double> online{1, 5, 3}, target{2, 0, 7};
    EXPECT_NEAR(compute_initial_priority(t, target, online), 1.9602, 1e-12);
}

TEST(InitialPriority, DpgRule) {
    Transition t;
    t.action = std::vector<float>{0.1f};
    t.q_start = {1.5f, 2.0f};
    t.q_end = {0.0f, 2.0f};
    t.reward_sum = 1.0;
    t.discount_prod = 0.9801;
    EXPECT_NEAR(compute_initial_priority(t, PriorityRule::kDpg), 1.4602, 1e-6);
    t.discount_prod = 0.0;
    EXPECT_NEAR(compute_initial_priority(t, PriorityRule::kDpg), 0.5, 1e-12);
}

// Same weights on both sides: the actor's priority equals the learner's |delta|.
TEST(InitialPriority, AgreesWithLearnerLossPath) {
    std::mt19937_64 rng(8);
    nn::Mlp net(nn::MlpSpec{{4, 16, 3}, nn::Activation::kRelu, nn::Activation::kIdentity, true});
    const auto w = net.init_weights(rng);
    std::normal_distribution<double> nd;
    auto q_of = [&](const Observation& s) {
        nn::Matrix x(1, 4);
        for (int i = 0; i < 4; ++i) x(0, i) = s[static_cast<std::size_t>(i)];
        const nn::Matrix q = net.forward(w, x);
        std::vector<float> out(3);
        for (int a = 0; a < 3; ++a) out[static_cast<std::size_t>(a)] = static_cast<float>(q(0, a));
        return out;
    };
    NStepAccumulator acc(3, 0.97);
    LocalSendBuffer buffer({.flush_size = 20, .max_buffered = 100});
    Observation s(4);
    for (auto& x : s) x = static_cast<float>(nd(rng));
    for (int step = 0; step < 40; ++step) {
        Observation next(4);
        for (auto& x : next) x = static_cast<float>(nd(rng));
        const bool done = step % 13 == 12;
        buffer.push(acc.push_step(s, step % 3, nd(rng), done ? 0.0 : 1.0, q_of(s), next));
        s = next;
    }
    auto flush = buffer.flush_if_ready();
    ASSERT_TRUE(flush.has_value());

    rules::QLearningBatch b;
    const auto batch = static_cast<int>(flush->transitions.size());
    b.q_online_start = nn::Matrix(batch, 3);
    b.q_online_end = nn::Matrix(batch, 3);
    for (int k = 0; k < batch; ++k) {
        const auto& t = flush->transitions[static_cast<std::size_t>(k)];
        nn::Matrix x0(1, 4), x1(1, 4);
        for (int i = 0; i < 4; ++i) {
            x0(0, i) = t.s_start[static_cast<std::size_t>(i)];
            x1(0, i) = t.s_end[static_cast<std::size_t>(i)];
        }
        b.q_online_start.row(k) = net.forward(w, x0).cast<float>().cast<double>();
        b.q_online_end.row(k) = net.forward(w, x1).cast<float>().cast<double>();
        b.keys.push_back(t.key);
        b.actions.push_back(action_index(t.action));
        b.reward_sums.push_back(t.reward_sum);
        b.discount_prods.push_back(t.discount_prod);
        b.is_weights.push_back(1.0);
    }
    b.q_target_end = b.q_online_end;
    const auto learner = rules::q_loss_and_priorities(b);
    for (int k = 0; k < batch; ++k) {
        EXPECT_NEAR(flush->priorities[static_cast<std::size_t>(k)],
                    learner.priorities[static_cast<std::size_t>(k)], 1e-9);
    }
}

TEST(LocalSendBuffer, FlushArithmetic) {
    LocalSendBuffer buffer({.flush_size = 50, .max_buffered = 200});
    Transition t;
    t.q_start = {0.0f};
    for (int i = 0; i < 49; ++i) buffer.push(t);
    EXPECT_FALSE(buffer.flush_if_ready().has_value());
    buffer.push(t);
    auto f = buffer.flush_if_ready();
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->transitions.size(), 50u);
    EXPECT_EQ(f->priorities.size(), 50u);
    EXPECT_EQ(buffer.pending(), 0u);

    for (int i = 0; i < 120; ++i) buffer.push(t);
    EXPECT_EQ(buffer.flush_if_ready()->transitions.size(), 50u);
    EXPECT_EQ(buffer.pending(), 70u);
    EXPECT_EQ(buffer.flush_if_ready()->transitions.size(), 50u);
    EXPECT_EQ(buffer.pending(), 20u);
    EXPECT_FALSE(buffer.flush_if_ready().has_value());
    EXPECT_EQ(buffer.drain()->transitions.size(), 20u);
    EXPECT_FALSE(buffer.drain().has_value());
}

TEST(LocalSendBuffer, BlocksAtBoundUntilFlushed) {
    LocalSendBuffer buffer({.flush_size = 5, .max_buffered = 10});
    Transition t;
    t.q_start = {0.0f};
    std::atomic<int> pushed{0};
    std::atomic<std::size_t> max_seen{0};
    std::thread producer([&] {
        for (int i = 0; i < 40; ++i) {
            buffer.push(t);
            ++pushed;
        }
    });
    int flushed = 0;
    while (flushed < 40) {
        max_seen = std::max(max_seen.load(), buffer.pending());
        if (auto f = buffer.flush_if_ready()) flushed += static_cast<int>(f->transitions.size());
        std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    producer.join();
    EXPECT_EQ(pushed.load(), 40);
    EXPECT_LE(max_seen.load(), 10u);
}

TEST(LocalSendBuffer, CloseReleasesBlockedProducer) {
    LocalSendBuffer buffer({.flush_size = 1, .max_buffered = 1});
    Transition t;
    t.q_start = {0.0f};
    ASSERT_TRUE(buffer.push(t));
    std::atomic<bool> result{true};
    std::thread producer([&] { result = buffer.push(t); });
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    buffer.close();
    producer.join();
    EXPECT_FALSE(result.load());
}

TEST(LocalSendBuffer, DropOldestPolicy) {
    LocalSendBuffer buffer({.flush_size = 2, .max_buffered = 3, .overflow = OverflowPolicy::kDropOldest});
    for (std::uint64_t k = 0; k < 5; ++k) {
        Transition t;
        t.key = k;
        t.q_start = {0.0f};
        buffer.push(t);
    }
    EXPECT_EQ(buffer.pending(), 3u);
    EXPECT_EQ(buffer.dropped(), 2u);
    EXPECT_EQ(buffer.flush_if_ready()->transitions.front().key, 2u);
}
