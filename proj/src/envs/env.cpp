#include "apex/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

namespace apex::envs {

namespace {

Observation one_hot(int n, int i) {
    Observation o(static_cast<std::size_t>(n), 0.0f);
    o[static_cast<std::size_t>(i)] = 1.0f;
    return o;
}

int hot_index(const Observation& o) {
    const auto it = std::max_element(o.begin(), o.end());
    if (it == o.end() || *it != 1.0f) throw EnvError("observation is not one-hot");
    return static_cast<int>(it - o.begin());
}

void check_steppable(const EnvState& s, const EnvSpec& spec) {
    if (s.terminal) throw EnvError("step on a terminal state");
    if (s.step_index >= spec.episode_cap) throw EnvError("step past the episode cap");
}

int discrete_action(const Action& a, int count) {
    if (!is_discrete(a)) throw EnvError("discrete environment given a continuous action");
    const int i = action_index(a);
    if (i < 0 || i >= count) throw EnvError("action index out of range");
    return i;
}

StepResult finish(TabularEnvironment::Outcome o, const EnvState& from, EnvState next,
                  int episode_cap) {
    StepResult r;
    r.reward = o.reward;
    r.discount_flag = o.terminal ? 0.0 : 1.0;
    next.terminal = o.terminal;
    next.step_index = from.step_index + 1;
    r.truncated = !o.terminal && next.step_index >= episode_cap;
    r.next = std::move(next);
    return r;
}

}  // namespace

ChainEnv::ChainEnv(int length, int episode_cap) : length_(length) {
    if (length < 2) throw std::invalid_argument("chain needs at least 2 cells");
    if (episode_cap < 1) throw std::invalid_argument("episode cap must be positive");
    spec_ = EnvSpec{"chain-" + std::to_string(length), length, ActionSpace{2, 0, 0, 0}, episode_cap};
}

EnvState ChainEnv::state_at(int cell) const {
    return EnvState{one_hot(length_, cell), cell == length_ - 1, 0, {}};
}

Observation ChainEnv::observation_of(int s) const { return one_hot(length_, s); }

EnvState ChainEnv::reset(std::uint64_t) const { return state_at(0); }

int ChainEnv::state_index(const EnvState& s) const { return hot_index(s.observation); }

TabularEnvironment::Outcome ChainEnv::model(int s, int a) const {
    const int next = a == 1 ? s + 1 : 0;
    const bool terminal = next == length_ - 1;
    return {next, terminal ? 1.0 : 0.0, terminal};
}

StepResult ChainEnv::step(const EnvState& state, const Action& action) const {
    check_steppable(state, spec_);
    const auto o = model(state_index(state), discrete_action(action, 2));
    return finish(o, state, state_at(o.next), spec_.episode_cap);
}

GridEnv::GridEnv(int width, int height, int episode_cap) : width_(width), height_(height) {
    if (width < 1 || height < 1 || width * height < 2) throw std::invalid_argument("grid too small");
    if (episode_cap < 1) throw std::invalid_argument("episode cap must be positive");
    spec_ = EnvSpec{"grid-" + std::to_string(width) + "x" + std::to_string(height), width * height,
                    ActionSpace{4, 0, 0, 0}, episode_cap};
}

EnvState GridEnv::state_at(int x, int y) const {
    const int i = y * width_ + x;
    return EnvState{one_hot(width_ * height_, i), is_terminal_index(i), 0, {}};
}

Observation GridEnv::observation_of(int s) const { return one_hot(width_ * height_, s); }

EnvState GridEnv::reset(std::uint64_t) const { return state_at(0, 0); }

int GridEnv::state_index(const EnvState& s) const { return hot_index(s.observation); }

TabularEnvironment::Outcome GridEnv::model(int s, int a) const {
    int x = s % width_, y = s / width_;
    switch (a) {
        case 0: y = std::max(0, y - 1); break;
        case 1: x = std::min(width_ - 1, x + 1); break;
        case 2: y = std::min(height_ - 1, y + 1); break;
        default: x = std::max(0, x - 1); break;
    }
    const int next = y * width_ + x;
    const bool terminal = is_terminal_index(next);
    return {next, terminal ? 1.0 : 0.0, terminal};
}

StepResult GridEnv::step(const EnvState& state, const Action& action) const {
    check_steppable(state, spec_);
    const auto o = model(state_index(state), discrete_action(action, 4));
    return finish(o, state, state_at(o.next % width_, o.next / width_), spec_.episode_cap);
}

PointMassEnv::PointMassEnv(int episode_cap, double goal) : goal_(goal) {
    if (episode_cap < 1) throw std::invalid_argument("episode cap must be positive");
    spec_ = EnvSpec{"pointmass", 2, ActionSpace{0, 1, -1.0, 1.0}, episode_cap};
}

EnvState PointMassEnv::state_at(double x, double v) const {
    return EnvState{{static_cast<float>(x), static_cast<float>(v)}, false, 0, {x, v}};
}

EnvState PointMassEnv::reset(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    return state_at(std::uniform_real_distribution<double>(-1.0, 1.0)(rng), 0.0);
}

StepResult PointMassEnv::step(const EnvState& state, const Action& action) const {
    check_steppable(state, spec_);
    if (is_discrete(action) || action_vector(action).size() != 1) {
        throw EnvError("point mass takes a 1-dimensional action");
    }
    const double a = std::clamp(static_cast<double>(action_vector(action)[0]), -1.0, 1.0);
    if (!std::isfinite(a)) throw EnvError("non-finite action");
    const double x = state.internal.at(0), v = state.internal.at(1);
    const double x2 = x + kDt * v;
    const double v2 = v + kDt * a;
    StepResult r;
    r.reward = -(x2 - goal_) * (x2 - goal_);
    r.discount_flag = 1.0;
    r.next = state_at(x2, v2);
    r.next.step_index = state.step_index + 1;
    r.truncated = r.next.step_index >= spec_.episode_cap;
    return r;
}

std::unique_ptr<Environment> make_env(const std::string& id, int episode_cap) {
    static const std::regex chain(R"(chain-(\d+))"), grid(R"(grid-(\d+)x(\d+))");
    std::smatch m;
    if (std::regex_match(id, m, chain)) {
        return std::make_unique<ChainEnv>(std::stoi(m[1]), episode_cap > 0 ? episode_cap : 500);
    }
    if (std::regex_match(id, m, grid)) {
        return std::make_unique<GridEnv>(std::stoi(m[1]), std::stoi(m[2]),
                                         episode_cap > 0 ? episode_cap : 500);
    }
    if (id == "pointmass") return std::make_unique<PointMassEnv>(episode_cap > 0 ? episode_cap : 200);
    throw std::invalid_argument("unknown environment id: " + id);
}

std::vector<std::vector<double>> optimal_q_values(const TabularEnvironment& env, double gamma,
                                                  double tol) {
    const int ns = env.state_count(), na = env.action_count();
    std::vector<std::vector<double>> q(static_cast<std::size_t>(ns), std::vector<double>(static_cast<std::size_t>(na), 0.0));
    auto v = [&](int s) {
        if (env.is_terminal_index(s)) return 0.0;
        const auto& row = q[static_cast<std::size_t>(s)];
        return *std::max_element(row.begin(), row.end());
    };
    for (int sweep = 0; sweep < 1000000; ++sweep) {
        double residual = 0.0;
        for (int s = 0; s < ns; ++s) {
            if (env.is_terminal_index(s)) continue;
            for (int a = 0; a < na; ++a) {
                const auto o = env.model(s, a);
                const double backup = o.reward + (o.terminal ? 0.0 : gamma * v(o.next));
                auto& cell = q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                residual = std::max(residual, std::abs(backup - cell));
                cell = backup;
            }
        }
        if (residual < tol) break;
    }
    return q;
}

double optimal_start_value(const TabularEnvironment& env, double gamma) {
    const auto q = optimal_q_values(env, gamma);
    const auto& row = q[static_cast<std::size_t>(env.state_index(env.reset(0)))];
    return *std::max_element(row.begin(), row.end());
}

}  // namespace apex::envs
