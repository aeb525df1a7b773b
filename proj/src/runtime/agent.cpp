#include "apex/runtime/agent.hpp"

#include <stdexcept>

namespace apex::runtime {

Algorithm parse_algorithm(const std::string& name) {
    if (name == "dqn") return Algorithm::kDqn;
    if (name == "dpg") return Algorithm::kDpg;
    throw std::invalid_argument("unknown algorithm '" + name + "' (expected dqn or dpg)");
}

std::string to_string(Algorithm a) { return a == Algorithm::kDqn ? "dqn" : "dpg"; }

AgentSpec AgentSpec::for_env(const envs::EnvSpec& env, Algorithm algorithm) {
    AgentSpec s;
    s.algorithm = algorithm;
    s.observation_dim = env.observation_dim;
    if (algorithm == Algorithm::kDqn) {
        if (!env.actions.is_discrete()) throw std::invalid_argument(env.id + " has continuous actions; use dpg");
        s.action_count = env.actions.discrete_count;
    } else {
        if (env.actions.is_discrete()) throw std::invalid_argument(env.id + " has discrete actions; use dqn");
        if (env.actions.low != -1.0 || env.actions.high != 1.0) {
            throw std::invalid_argument("dpg expects actions bounded by [-1, 1]");
        }
        s.action_dim = env.actions.dim;
        s.dueling = false;
    }
    return s;
}

void AgentSpec::validate() const {
    if (observation_dim < 1) throw std::invalid_argument("observation_dim must be positive");
    if (hidden.empty()) throw std::invalid_argument("at least one hidden layer is required");
    if (algorithm == Algorithm::kDqn) {
        if (action_count < 1) throw std::invalid_argument("dqn needs a discrete action count");
    } else {
        if (action_dim < 1) throw std::invalid_argument("dpg needs an action dimension");
        if (dueling) throw std::invalid_argument("dueling heads apply to dqn only");
        if (critic_hidden.empty()) throw std::invalid_argument("critic needs a hidden layer");
    }
}

namespace {
std::vector<int> layers(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> l{in};
    l.insert(l.end(), hidden.begin(), hidden.end());
    l.push_back(out);
    return l;
}
}  // namespace

nn::MlpSpec AgentSpec::q_network() const {
    return {layers(observation_dim, hidden, std::max(action_count, 1)), activation, nn::Activation::kIdentity, dueling};
}

nn::MlpSpec AgentSpec::policy_network() const {
    return {layers(observation_dim, hidden, std::max(action_dim, 1)), activation, nn::Activation::kTanh, false};
}

nn::MlpSpec AgentSpec::critic_network() const {
    return {layers(observation_dim + std::max(action_dim, 1), critic_hidden, 1), activation,
            nn::Activation::kIdentity, false};
}

std::size_t AgentSpec::parameter_count() const {
    if (algorithm == Algorithm::kDqn) return q_network().parameter_count();
    return policy_network().parameter_count() + critic_network().parameter_count();
}

nn::Matrix to_matrix(std::span<const Observation> rows) {
    if (rows.empty()) return nn::Matrix(0, 0);
    const auto cols = static_cast<Eigen::Index>(rows.front().size());
    nn::Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != cols) throw nn::ShapeError("ragged observation batch");
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    return m;
}

nn::Matrix to_row(const Observation& obs) { return to_matrix(std::span(&obs, 1)); }

nn::Matrix to_action_matrix(std::span<const Action> actions, int dim) {
    nn::Matrix m(static_cast<Eigen::Index>(actions.size()), dim);
    for (std::size_t r = 0; r < actions.size(); ++r) {
        const auto& a = action_vector(actions[r]);
        if (static_cast<int>(a.size()) != dim) throw nn::ShapeError("action dimension mismatch");
        for (int c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = a[static_cast<std::size_t>(c)];
    }
    return m;
}

AgentNetworks::AgentNetworks(AgentSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      q_(spec_.q_network()),
      policy_(spec_.policy_network()),
      critic_(spec_.critic_network()) {}

std::vector<double> AgentNetworks::init_params(std::mt19937_64& rng) const {
    if (spec_.algorithm == Algorithm::kDqn) return q_.init_weights(rng);
    auto p = policy_.init_weights(rng);
    const auto c = critic_.init_weights(rng);
    p.insert(p.end(), c.begin(), c.end());
    return p;
}

namespace {
std::vector<float> row_floats(const nn::Matrix& m) {
    std::vector<float> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = static_cast<float>(m(0, c));
    return out;
}
}  // namespace

std::vector<float> AgentNetworks::q_values(std::span<const double> params, const Observation& s) const {
    return row_floats(q_.forward(params, to_row(s)));
}

std::span<const double> AgentNetworks::policy_part(std::span<const double> params) const {
    return params.first(policy_.parameter_count());
}

std::span<const double> AgentNetworks::critic_part(std::span<const double> params) const {
    return params.subspan(policy_.parameter_count(), critic_.parameter_count());
}

std::vector<float> AgentNetworks::policy_action(std::span<const double> params, const Observation& s) const {
    return row_floats(policy_.forward(policy_part(params), to_row(s)));
}

double AgentNetworks::critic_value(std::span<const double> params, const Observation& s,
                                   std::span<const float> action) const {
    nn::Matrix x(1, static_cast<Eigen::Index>(s.size() + action.size()));
    for (std::size_t i = 0; i < s.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = s[i];
    for (std::size_t i = 0; i < action.size(); ++i) x(0, static_cast<Eigen::Index>(s.size() + i)) = action[i];
    return critic_.forward(critic_part(params), x)(0, 0);
}

}  // namespace apex::runtime
