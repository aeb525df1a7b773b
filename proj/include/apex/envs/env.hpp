#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "apex/replay/transition.hpp"

namespace apex::envs {

struct ActionSpace {
    int discrete_count = 0;  ///< > 0 for discrete spaces
    int dim = 0;             ///< > 0 for box spaces
    double low = -1.0;
    double high = 1.0;

    bool is_discrete() const { return discrete_count > 0; }
};

struct EnvSpec {
    std::string id;
    int observation_dim = 0;
    ActionSpace actions;
    int episode_cap = 500;
};

struct EnvState {
    Observation observation;
    bool terminal = false;
    int step_index = 0;
    std::vector<double> internal;  ///< exact physical state where observations are lossy
};

struct StepResult {
    double reward = 0.0;
    double discount_flag = 1.0;  ///< 0 on the terminating step, else 1
    EnvState next;
    bool truncated = false;      ///< episode cap reached without terminating
};

class EnvError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual EnvState reset(std::uint64_t seed) const = 0;
    /// Throws EnvError when `state` has already ended or the action is outside the space.
    virtual StepResult step(const EnvState& state, const Action& action) const = 0;
};

/// Finite deterministic MDP view used by value iteration.
class TabularEnvironment : public Environment {
public:
    virtual int state_count() const = 0;
    virtual int state_index(const EnvState& s) const = 0;
    virtual bool is_terminal_index(int s) const = 0;
    struct Outcome {
        int next;
        double reward;
        bool terminal;
    };
    virtual Outcome model(int s, int a) const = 0;
    /// Observation emitted in state index s.
    virtual Observation observation_of(int s) const = 0;
    int action_count() const { return spec().actions.discrete_count; }
};

/// Cells 0..L-1 observed one-hot. Action 1 moves forward, action 0 returns to cell 0;
/// entering cell L-1 pays 1 and terminates.
class ChainEnv final : public TabularEnvironment {
public:
    explicit ChainEnv(int length, int episode_cap = 500);
    const EnvSpec& spec() const override { return spec_; }
    EnvState reset(std::uint64_t seed) const override;
    StepResult step(const EnvState& state, const Action& action) const override;
    int state_count() const override { return length_; }
    int state_index(const EnvState& s) const override;
    bool is_terminal_index(int s) const override { return s == length_ - 1; }
    Outcome model(int s, int a) const override;
    Observation observation_of(int s) const override;
    EnvState state_at(int cell) const;
    int length() const { return length_; }

private:
    int length_;
    EnvSpec spec_;
};

/// W x H cells observed one-hot, start (0, 0), goal (W-1, H-1). Actions 0..3 move
/// up/right/down/left; moves into the boundary leave the agent in place.
class GridEnv final : public TabularEnvironment {
public:
    GridEnv(int width, int height, int episode_cap = 500);
    const EnvSpec& spec() const override { return spec_; }
    EnvState reset(std::uint64_t seed) const override;
    StepResult step(const EnvState& state, const Action& action) const override;
    int state_count() const override { return width_ * height_; }
    int state_index(const EnvState& s) const override;
    bool is_terminal_index(int s) const override { return s == width_ * height_ - 1; }
    Outcome model(int s, int a) const override;
    Observation observation_of(int s) const override;
    EnvState state_at(int x, int y) const;
    int width() const { return width_; }
    int height() const { return height_; }

private:
    int width_, height_;
    EnvSpec spec_;
};

/// 1-D point mass: state (x, v), action a in [-1, 1], x' = x + 0.05 v, v' = v + 0.05 a,
/// reward -(x' - goal)^2. The start position is uniform in [-1, 1] given the seed.
class PointMassEnv final : public Environment {
public:
    static constexpr double kDt = 0.05;
    explicit PointMassEnv(int episode_cap = 200, double goal = 0.0);
    const EnvSpec& spec() const override { return spec_; }
    EnvState reset(std::uint64_t seed) const override;
    StepResult step(const EnvState& state, const Action& action) const override;
    EnvState state_at(double x, double v) const;
    double goal() const { return goal_; }

private:
    double goal_;
    EnvSpec spec_;
};

/// `chain-L`, `grid-WxH` or `pointmass`. A non-positive cap keeps the default.
std::unique_ptr<Environment> make_env(const std::string& id, int episode_cap = 0);

/// Q*(s, a) from value iteration, stopped when the largest Bellman residual is below `tol`.
/// Rows are state indices; terminal rows are zero.
std::vector<std::vector<double>> optimal_q_values(const TabularEnvironment& env, double gamma,
                                                  double tol = 1e-10);

/// max_a Q*(start, a).
double optimal_start_value(const TabularEnvironment& env, double gamma);

}  // namespace apex::envs
