#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "apex/envs/env.hpp"
#include "apex/nn/mlp.hpp"

namespace apex::runtime {

enum class Algorithm { kDqn, kDpg };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

/// Network shapes shared by actors and the learner. The published parameter vector is the
/// online q-network for DQN, and the policy followed by the critic for DPG.
struct AgentSpec {
    Algorithm algorithm = Algorithm::kDqn;
    int observation_dim = 0;
    int action_count = 0;  ///< DQN
    int action_dim = 0;    ///< DPG; actions live in [-1, 1]
    std::vector<int> hidden{64};
    nn::Activation activation = nn::Activation::kRelu;
    bool dueling = true;   ///< DQN only
    std::vector<int> critic_hidden{64, 64};

    static AgentSpec for_env(const envs::EnvSpec& env, Algorithm algorithm);
    void validate() const;

    nn::MlpSpec q_network() const;
    nn::MlpSpec policy_network() const;
    nn::MlpSpec critic_network() const;  ///< input is [state, action]
    std::size_t parameter_count() const;
};

nn::Matrix to_matrix(std::span<const Observation> rows);
nn::Matrix to_row(const Observation& obs);
nn::Matrix to_action_matrix(std::span<const Action> actions, int dim);

/// Evaluates published parameters on single observations.
class AgentNetworks {
public:
    explicit AgentNetworks(AgentSpec spec);

    const AgentSpec& spec() const { return spec_; }
    std::vector<double> init_params(std::mt19937_64& rng) const;

    std::vector<float> q_values(std::span<const double> params, const Observation& s) const;
    std::vector<float> policy_action(std::span<const double> params, const Observation& s) const;
    double critic_value(std::span<const double> params, const Observation& s,
                        std::span<const float> action) const;

    std::span<const double> policy_part(std::span<const double> params) const;
    std::span<const double> critic_part(std::span<const double> params) const;

    const nn::Mlp& q_net() const { return q_; }
    const nn::Mlp& policy_net() const { return policy_; }
    const nn::Mlp& critic_net() const { return critic_; }

private:
    AgentSpec spec_;
    nn::Mlp q_, policy_, critic_;
};

}  // namespace apex::runtime
