#include "apex/runtime/learner_core.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "apex/rules/targets.hpp"

namespace apex::runtime {

void LearnerConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (prefetch_depth < 1) throw std::invalid_argument("prefetch_depth must be at least 1");
    if (prefetch_threads < 1) throw std::invalid_argument("prefetch_threads must be at least 1");
    if (target_sync_period < 1 || remove_to_fit_period < 1 || publish_period < 1 || metrics_period < 1) {
        throw std::invalid_argument("learner periods must be at least 1");
    }
    if (!(max_grad_norm > 0)) throw std::invalid_argument("max_grad_norm must be positive");
    if (!(beta >= 0)) throw std::invalid_argument("beta must be non-negative");
}

namespace {

std::size_t primary_size(const AgentNetworks& nets) {
    const auto& s = nets.spec();
    return s.algorithm == Algorithm::kDqn ? nets.q_net().parameter_count() : nets.policy_net().parameter_count();
}

}  // namespace

LearnerCore::LearnerCore(AgentSpec spec, LearnerConfig config)
    : nets_(std::move(spec)),
      config_((config.validate(), config)),
      optimizer_(config_.optimizer, nets_.spec().algorithm == Algorithm::kDqn ? nets_.q_net().parameter_count()
                                                                              : nets_.critic_net().parameter_count()),
      actor_optimizer_(config_.actor_optimizer,
                       nets_.spec().algorithm == Algorithm::kDqn ? 0 : nets_.policy_net().parameter_count()),
      targets_(config_.target_sync_period),
      rng_(config_.seed) {
    auto init = nets_.init_params(rng_);
    const auto n = primary_size(nets_);
    online_.assign(init.begin(), init.begin() + static_cast<std::ptrdiff_t>(n));
    critic_.assign(init.begin() + static_cast<std::ptrdiff_t>(n), init.end());
    targets_.restore(0, 0, nn::make_snapshot(0, params()));
}

std::vector<double> LearnerCore::params() const {
    std::vector<double> p = online_;
    p.insert(p.end(), critic_.begin(), critic_.end());
    return p;
}

nn::SnapshotPtr LearnerCore::snapshot() const { return nn::make_snapshot(updates_, params()); }

UpdateStats LearnerCore::update(std::span<const replay::SampledTransition> batch) {
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    UpdateStats s = spec().algorithm == Algorithm::kDqn ? update_dqn(batch) : update_dpg(batch);
    ++updates_;
    if (targets_.tick()) {
        targets_.copy_to_target(params());
        s.target_synced = true;
    }
    return s;
}

namespace {

struct Columns {
    std::vector<Observation> starts, ends;
    std::vector<Action> actions;
    std::vector<std::uint64_t> keys;
    std::vector<double> reward_sums, discount_prods, weights;
};

Columns split(std::span<const replay::SampledTransition> batch) {
    Columns c;
    for (const auto& item : batch) {
        const auto& t = item.transition;
        c.starts.push_back(t.s_start);
        c.ends.push_back(t.s_end);
        c.actions.push_back(t.action);
        c.keys.push_back(item.key);
        c.reward_sums.push_back(t.reward_sum);
        c.discount_prods.push_back(t.discount_prod);
        c.weights.push_back(item.is_weight);
    }
    return c;
}

void check_finite(double loss) {
    if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite");
}

double mean_abs(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += std::abs(x);
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

UpdateStats LearnerCore::update_dqn(std::span<const replay::SampledTransition> batch) {
    const auto c = split(batch);
    const auto& net = nets_.q_net();
    const nn::Matrix s0 = to_matrix(c.starts);
    const nn::Matrix s1 = to_matrix(c.ends);

    rules::QLearningBatch b;
    nn::Mlp::Cache cache;
    b.q_online_start = net.forward(online_, s0, &cache);
    b.q_online_end = net.forward(online_, s1);
    b.q_target_end = net.forward(targets_.target()->weights, s1);
    b.keys = c.keys;
    for (const auto& a : c.actions) b.actions.push_back(action_index(a));
    b.reward_sums = c.reward_sums;
    b.discount_prods = c.discount_prods;
    b.is_weights = c.weights;

    rules::LossResult r;
    try {
        r = rules::q_loss_and_priorities(b);
    } catch (const rules::NonFiniteTdError& e) {
        throw DivergenceError(e.what());
    }
    check_finite(r.loss);
    auto grad = net.backward(online_, cache, r.output_grads).weights;
    UpdateStats s;
    s.grad_norm = nn::clip_by_global_norm(grad, config_.max_grad_norm);
    try {
        optimizer_.step(online_, grad);
    } catch (const nn::NonFiniteGradient& e) {
        throw DivergenceError(e.what());
    }
    s.loss = r.loss;
    s.mean_abs_td = mean_abs(r.td_errors);
    s.keys = std::move(b.keys);
    s.priorities = std::move(r.priorities);
    return s;
}

UpdateStats LearnerCore::update_dpg(std::span<const replay::SampledTransition> batch) {
    const auto c = split(batch);
    const auto& policy = nets_.policy_net();
    const auto& critic = nets_.critic_net();
    const int adim = spec().action_dim;
    const nn::Matrix s0 = to_matrix(c.starts);
    const nn::Matrix s1 = to_matrix(c.ends);
    const nn::Matrix a0 = to_action_matrix(c.actions, adim);

    const auto& target = targets_.target()->weights;
    const auto target_policy = nets_.policy_part(target);
    const auto target_critic = nets_.critic_part(target);
    const nn::Matrix a1 = policy.forward(target_policy, s1);
    const nn::Matrix q1 = critic.forward(target_critic, rules::concat_columns(s1, a1));

    std::vector<double> targets(c.keys.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        targets[k] = rules::dpg_critic_target(c.reward_sums[k], c.discount_prods[k], q1(static_cast<Eigen::Index>(k), 0));
    }
    nn::Mlp::Cache cache;
    const nn::Matrix q0 = critic.forward(critic_, rules::concat_columns(s0, a0), &cache);
    const std::vector<int> column0(c.keys.size(), 0);
    rules::LossResult r;
    try {
        r = rules::td_loss(c.keys, column0, q0, targets, c.weights);
    } catch (const rules::NonFiniteTdError& e) {
        throw DivergenceError(e.what());
    }
    check_finite(r.loss);

    auto critic_grad = critic.backward(critic_, cache, r.output_grads).weights;
    // The actor follows the critic as it was before this step.
    auto actor_grad = rules::dpg_actor_gradient(policy, online_, critic, critic_, s0);
    for (auto& g : actor_grad) g = -g;

    UpdateStats s;
    s.grad_norm = nn::clip_by_global_norm(critic_grad, config_.max_grad_norm);
    s.actor_grad_norm = nn::clip_by_global_norm(actor_grad, config_.max_grad_norm);
    try {
        // Validate both before mutating either.
        for (double g : actor_grad) {
            if (!std::isfinite(g)) throw nn::NonFiniteGradient("non-finite policy gradient");
        }
        optimizer_.step(critic_, critic_grad);
        actor_optimizer_.step(online_, actor_grad);
    } catch (const nn::NonFiniteGradient& e) {
        throw DivergenceError(e.what());
    }
    s.loss = r.loss;
    s.mean_abs_td = mean_abs(r.td_errors);
    s.keys = c.keys;
    s.priorities = std::move(r.priorities);
    return s;
}

namespace {
constexpr char kMagic[4] = {'A', 'P', 'X', 'L'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

std::vector<std::uint8_t> LearnerCore::checkpoint() const {
    ByteWriter w;
    w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
    w.put(kFormatVersion);
    w.put(static_cast<std::uint8_t>(spec().algorithm));
    w.put<std::uint64_t>(spec().parameter_count());
    w.put(updates_);
    nn::write_snapshot_f64(w, nn::ParameterSnapshot{updates_, online_});
    nn::write_snapshot_f64(w, nn::ParameterSnapshot{updates_, critic_});
    nn::write_snapshot_f64(w, *targets_.target());
    w.put(targets_.batches());
    w.put(targets_.copies());
    optimizer_.save(w);
    actor_optimizer_.save(w);
    std::ostringstream rng_state;
    rng_state << rng_;
    w.put_string(rng_state.str());
    const auto sum = fnv1a64(w.buf());
    w.put(sum);
    return w.take();
}

void LearnerCore::restore(std::span<const std::uint8_t> blob) {
    if (blob.size() < 4 + 4 + 8 || std::memcmp(blob.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a learner checkpoint");
    }
    const auto body = blob.first(blob.size() - 8);
    ByteReader tail(blob.last(8));
    if (tail.get<std::uint64_t>() != fnv1a64(body)) throw CheckpointError("learner checkpoint checksum mismatch");
    try {
        ByteReader in(body);
        in.get_bytes(4);
        if (in.get<std::uint32_t>() != kFormatVersion) throw CheckpointError("unsupported checkpoint version");
        if (in.get<std::uint8_t>() != static_cast<std::uint8_t>(spec().algorithm)) {
            throw CheckpointError("checkpoint was written by a different algorithm");
        }
        if (in.get<std::uint64_t>() != spec().parameter_count()) {
            throw CheckpointError("checkpoint network shape differs");
        }
        const auto updates = in.get<std::uint64_t>();
        auto online = nn::read_snapshot_f64(in);
        auto critic = nn::read_snapshot_f64(in);
        auto target = nn::read_snapshot_f64(in);
        if (online.weights.size() != online_.size() || critic.weights.size() != critic_.size() ||
            target.weights.size() != spec().parameter_count()) {
            throw CheckpointError("checkpoint weight counts differ");
        }
        const auto batches = in.get<std::uint64_t>();
        const auto copies = in.get<std::uint64_t>();
        nn::Optimizer opt(config_.optimizer, optimizer_.first_moment().size());
        opt.load(in);
        nn::Optimizer actor_opt(config_.actor_optimizer, actor_optimizer_.first_moment().size());
        actor_opt.load(in);
        std::istringstream rng_state(in.get_string());
        std::mt19937_64 rng;
        rng_state >> rng;
        if (rng_state.fail()) throw CheckpointError("bad rng state");
        if (!in.done()) throw CheckpointError("trailing bytes in checkpoint");

        online_ = std::move(online.weights);
        critic_ = std::move(critic.weights);
        optimizer_ = std::move(opt);
        actor_optimizer_ = std::move(actor_opt);
        targets_.restore(batches, copies, std::make_shared<const nn::ParameterSnapshot>(std::move(target)));
        rng_ = rng;
        updates_ = updates;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("corrupt learner checkpoint: ") + e.what());
    }
}

}  // namespace apex::runtime
