#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apex/envs/env.hpp"

using namespace apex;
using namespace apex::envs;

TEST(ChainEnv, ResetAndStep) {
    ChainEnv env(5);
    const auto s0 = env.reset(1);
    EXPECT_EQ(env.state_index(s0), 0);
    EXPECT_FALSE(s0.terminal);

    const auto r = env.step(env.state_at(3), 1);
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_EQ(r.discount_flag, 0.0);
    EXPECT_TRUE(r.next.terminal);
    EXPECT_THROW(env.step(r.next, 0), EnvError);

    const auto back = env.step(env.state_at(2), 0);
    EXPECT_EQ(env.state_index(back.next), 0);
    EXPECT_EQ(back.reward, 0.0);
    EXPECT_THROW(env.step(s0, 2), EnvError);
}

TEST(ChainEnv, OptimalValues) {
    ChainEnv env(5);
    const auto q = optimal_q_values(env, 0.99);
    for (int cell = 0; cell < 4; ++cell) {
        const int d = 4 - cell;
        EXPECT_NEAR(q[static_cast<std::size_t>(cell)][1], std::pow(0.99, d - 1), 1e-10);
    }
    EXPECT_NEAR(q[1][1], 0.9801, 1e-10);  // three steps to go

    const auto q0 = optimal_q_values(env, 0.0);
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 2; ++a) {
            EXPECT_EQ(q0[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)], env.model(s, a).reward);
        }
}

TEST(GridEnv, WallsAndGoal) {
    GridEnv env(10, 10);
    const auto s0 = env.reset(0);
    EXPECT_EQ(env.state_index(s0), 0);
    const auto wall = env.step(s0, 0);
    EXPECT_EQ(env.state_index(wall.next), 0);
    EXPECT_EQ(wall.reward, 0.0);
    const auto left = env.step(s0, 3);
    EXPECT_EQ(env.state_index(left.next), 0);

    const auto goal = env.step(env.state_at(9, 8), 2);
    EXPECT_EQ(goal.reward, 1.0);
    EXPECT_EQ(goal.discount_flag, 0.0);
    EXPECT_TRUE(goal.next.terminal);
}

TEST(GridEnv, OptimalReturnFromStart) {
    for (auto [w, h] : {std::pair{10, 10}, std::pair{4, 7}, std::pair{2, 1}}) {
        GridEnv env(w, h);
        const int shortest = (w - 1) + (h - 1);
        EXPECT_NEAR(optimal_start_value(env, 0.99), std::pow(0.99, shortest - 1), 1e-9) << w << "x" << h;
    }
}

TEST(TabularEnv, ValueIterationIsBellmanFixedPoint) {
    for (double gamma : {0.5, 0.9, 0.99}) {
        GridEnv grid(6, 5);
        ChainEnv chain(8);
        for (const TabularEnvironment* env : {static_cast<const TabularEnvironment*>(&grid),
                                              static_cast<const TabularEnvironment*>(&chain)}) {
            const auto q = optimal_q_values(*env, gamma);
            for (int s = 0; s < env->state_count(); ++s) {
                if (env->is_terminal_index(s)) continue;
                for (int a = 0; a < env->action_count(); ++a) {
                    const auto o = env->model(s, a);
                    double v = 0;
                    if (!o.terminal) {
                        const auto& row = q[static_cast<std::size_t>(o.next)];
                        v = *std::max_element(row.begin(), row.end());
                    }
                    EXPECT_NEAR(q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)], o.reward + gamma * v, 1e-9);
                }
            }
        }
    }
}

TEST(Envs, RewardsOnlyOnTerminalSteps) {
    std::mt19937_64 rng(4);
    for (const char* id : {"chain-6", "grid-5x5"}) {
        auto env = make_env(id, 300);
        const int na = env->spec().actions.discrete_count;
        for (int episode = 0; episode < 50; ++episode) {
            auto s = env->reset(static_cast<std::uint64_t>(episode));
            while (true) {
                const auto r = env->step(s, std::uniform_int_distribution<int>(0, na - 1)(rng));
                if (r.reward != 0.0) {
                    EXPECT_TRUE(r.next.terminal);
                }
                if (r.next.terminal || r.truncated) break;
                s = r.next;
            }
        }
    }
}

TEST(Envs, EpisodeCapTruncates) {
    auto env = make_env("chain-5", 3);
    auto s = env->reset(0);
    for (int i = 0; i < 3; ++i) {
        const auto r = env->step(s, 0);
        EXPECT_EQ(r.truncated, i == 2);
        EXPECT_EQ(r.discount_flag, 1.0);
        s = r.next;
    }
    EXPECT_THROW(env->step(s, 0), EnvError);
}

TEST(PointMass, Dynamics) {
    PointMassEnv env;
    const auto r = env.step(env.state_at(0.0, 1.0), std::vector<float>{0.0f});
    EXPECT_DOUBLE_EQ(r.next.internal[0], 0.05);
    EXPECT_DOUBLE_EQ(r.next.internal[1], 1.0);
    EXPECT_DOUBLE_EQ(r.reward, -0.0025);

    const auto pushed = env.step(env.state_at(0.5, 0.0), std::vector<float>{5.0f});
    EXPECT_DOUBLE_EQ(pushed.next.internal[1], 0.05);  // action clamped to 1
    EXPECT_THROW(env.step(env.state_at(0, 0), 1), EnvError);
    EXPECT_EQ(env.spec().episode_cap, 200);
}

TEST(Envs, DeterministicGivenSeedAndActions) {
    for (const char* id : {"pointmass", "grid-10x10", "chain-5"}) {
        auto env = make_env(id);
        auto run = [&](std::uint64_t seed) {
            std::mt19937_64 rng(99);
            std::vector<Observation> trace;
            auto s = env->reset(seed);
            for (int i = 0; i < 50 && !s.terminal; ++i) {
                trace.push_back(s.observation);
                Action a = env->spec().actions.is_discrete()
                               ? Action(std::uniform_int_distribution<int>(0, env->spec().actions.discrete_count - 1)(rng))
                               : Action(std::vector<float>{static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng))});
                s = env->step(s, a).next;
            }
            return trace;
        };
        EXPECT_EQ(run(7), run(7)) << id;
    }
    PointMassEnv pm;
    EXPECT_EQ(pm.reset(3).observation, pm.reset(3).observation);
    EXPECT_NE(pm.reset(3).observation, pm.reset(4).observation);
}

TEST(Envs, Factory) {
    EXPECT_EQ(make_env("chain-7")->spec().observation_dim, 7);
    EXPECT_EQ(make_env("grid-3x4")->spec().observation_dim, 12);
    EXPECT_EQ(make_env("pointmass")->spec().actions.dim, 1);
    EXPECT_THROW(make_env("atari"), std::invalid_argument);
}

TEST(TabularEnv, ObservationOfMatchesVisitedStates) {
    GridEnv grid(4, 3);
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 3; ++y) {
            const auto s = grid.state_at(x, y);
            EXPECT_EQ(grid.observation_of(grid.state_index(s)), s.observation);
        }
    ChainEnv chain(6);
    for (int c = 0; c < 6; ++c) EXPECT_EQ(chain.observation_of(c), chain.state_at(c).observation);
}
