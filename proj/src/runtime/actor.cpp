#include "apex/runtime/actor.hpp"

#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <utility>

#include "apex/rules/targets.hpp"
#include "apex/transport/services.hpp"

namespace apex::runtime {

void ActorConfig::validate() const {
    if (actor_count < 1 || actor_id >= actor_count) throw std::invalid_argument("actor id must lie in [0, actor_count)");
    if (actor_id >= transition_key::kMaxActors) throw std::invalid_argument("too many actors");
    if (param_sync_period < 1) throw std::invalid_argument("param_sync_period must be at least 1");
    if (duplication < 1 || static_cast<std::uint64_t>(duplication) > transition_key::kMaxDuplicates) {
        throw std::invalid_argument("duplication must lie in [1, 16]");
    }
    if (flush_size < 1 || max_buffered < flush_size) throw std::invalid_argument("need 1 <= flush_size <= max_buffered");
    for (double e : eps_set) {
        if (!(e >= 0 && e <= 1)) throw std::invalid_argument("epsilon set values must lie in [0, 1]");
    }
    if (sigma < 0) throw std::invalid_argument("sigma must be non-negative");
}

double actor_epsilon(const ActorConfig& c) {
    if (c.eps_override >= 0) return c.eps_override;
    if (!c.eps_set.empty()) return c.eps_set[c.actor_id % c.eps_set.size()];
    return rules::epsilon_for_actor(static_cast<int>(c.actor_id), static_cast<int>(c.actor_count), c.eps_base,
                                    c.eps_alpha);
}

int select_action(std::span<const float> q_values, double epsilon, std::mt19937_64& rng) {
    if (q_values.empty()) throw std::invalid_argument("no q-values to choose from");
    if (epsilon > 0 && std::uniform_real_distribution<double>(0, 1)(rng) < epsilon) {
        return std::uniform_int_distribution<int>(0, static_cast<int>(q_values.size()) - 1)(rng);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < q_values.size(); ++i) {
        if (q_values[i] > q_values[best]) best = i;
    }
    return static_cast<int>(best);
}

bool set_thread_nice(int nice) {
    if (nice == 0) return true;
    return ::setpriority(PRIO_PROCESS, static_cast<id_t>(::syscall(SYS_gettid)), nice) == 0;
}

std::vector<std::string> Actor::metrics_columns() {
    return {"actor_id", "steps", "episodes", "frames_per_s", "epsilon", "mean_return", "transitions_sent",
            "params_version"};
}

Actor::Actor(AgentSpec spec, ActorConfig config, ChannelFactory replay_channels, ChannelFactory param_channels)
    : nets_(std::move(spec)),
      config_((config.validate(), std::move(config))),
      replay_channels_(std::move(replay_channels)),
      param_channels_(std::move(param_channels)) {}

namespace {

// Sleeps in short slices so a stop request is noticed promptly.
void backoff_sleep(int ms, const std::atomic<bool>& stop) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
    while (!stop && std::chrono::steady_clock::now() < until) {
        std::this_thread::sleep_for(std::chrono::milliseconds(std::min(ms, 5)));
    }
}

/// Background sender and parameter fetcher for one actor.
class Comms {
public:
    Comms(const ActorConfig& cfg, nstep::LocalSendBuffer& buffer, transport::ChannelPtr replay,
          transport::ChannelPtr params, const std::atomic<bool>& stop)
        : cfg_(cfg), buffer_(buffer), replay_(std::move(replay)), params_(std::move(params)), stop_(stop) {}

    void start() {
        thread_ = std::thread([this] {
            set_thread_nice(cfg_.nice);
            loop();
        });
    }

    void finish() {
        {
            std::lock_guard lock(mu_);
            finishing_ = true;
        }
        cv_.notify_all();
        if (thread_.joinable()) thread_.join();
    }

    void wake() { cv_.notify_all(); }

    void request_params() {
        {
            std::lock_guard lock(mu_);
            fetch_requested_ = true;
        }
        cv_.notify_all();
    }

    /// A snapshot newer than `version`, if one has arrived.
    nn::SnapshotPtr take_newer(std::uint64_t version) {
        std::lock_guard lock(mu_);
        if (latest_ && latest_->version > version) return latest_;
        return nullptr;
    }

    std::uint64_t sent = 0, batches = 0, min_batch = 0, send_failures = 0, fetches = 0, fetch_failures = 0;

private:
    void loop() {
        while (true) {
            bool fetch = false, finishing = false;
            {
                std::unique_lock lock(mu_);
                cv_.wait_for(lock, std::chrono::milliseconds(50), [&] {
                    return finishing_ || fetch_requested_ || buffer_.pending() >= cfg_.flush_size;
                });
                fetch = fetch_requested_;
                fetch_requested_ = false;
                finishing = finishing_;
            }
            if (stop_) buffer_.close();
            if (fetch) fetch_params();
            while (auto f = buffer_.flush_if_ready()) {
                send(std::move(*f), false);
                if (take_fetch_request()) fetch_params();
            }
            if (finishing) {
                buffer_.close();
                if (auto rest = buffer_.drain()) send(std::move(*rest), true);
                return;
            }
        }
    }

    bool take_fetch_request() {
        std::lock_guard lock(mu_);
        return std::exchange(fetch_requested_, false);
    }

    void fetch_params() {
        try {
            if (auto snap = transport::ParamsClient(params_).fetch()) {
                ++fetches;
                std::lock_guard lock(mu_);
                if (!latest_ || snap->version > latest_->version) {
                    latest_ = std::make_shared<const nn::ParameterSnapshot>(std::move(*snap));
                }
            }
        } catch (const std::exception&) {
            ++fetch_failures;
        }
    }

    void send(nstep::Flush f, bool shutdown) {
        std::vector<Transition> out;
        std::vector<double> priorities;
        const auto k = static_cast<std::uint64_t>(cfg_.duplication);
        out.reserve(f.transitions.size() * k);
        for (std::size_t i = 0; i < f.transitions.size(); ++i) {
            for (std::uint64_t d = 0; d < k; ++d) {
                Transition t = f.transitions[i];
                t.key = transition_key::make(transition_key::actor_of(t.key), transition_key::step_of(t.key), d);
                out.push_back(std::move(t));
                priorities.push_back(f.priorities[i]);
            }
        }
        transport::ReplayClient client(replay_);
        int backoff = cfg_.backoff_ms;
        // At shutdown a few attempts are made even though stop is already set.
        for (int attempt = 0;; ++attempt) {
            try {
                client.add_batch(out, priorities);
                break;
            } catch (const transport::RemoteError& e) {
                // A duplicate means an earlier attempt landed but its reply was lost.
                if (e.code() != transport::ErrorCode::kDuplicateKey) ++send_failures;
                if (e.code() == transport::ErrorCode::kDuplicateKey) break;
                return;
            } catch (const std::exception&) {
                ++send_failures;
                if (stop_) buffer_.close();
                if (shutdown ? attempt >= 3 : static_cast<bool>(stop_) && attempt >= 3) return;
                backoff_sleep(backoff, shutdown ? never_ : stop_);
                backoff = std::min(backoff * 2, cfg_.max_backoff_ms);
            }
        }
        sent += out.size();
        if (!shutdown) min_batch = batches == 0 ? out.size() : std::min<std::uint64_t>(min_batch, out.size());
        ++batches;
    }

    const ActorConfig& cfg_;
    nstep::LocalSendBuffer& buffer_;
    transport::ChannelPtr replay_, params_;
    const std::atomic<bool>& stop_;
    const std::atomic<bool> never_{false};
    std::mutex mu_;
    std::condition_variable cv_;
    bool fetch_requested_ = false;
    bool finishing_ = false;
    nn::SnapshotPtr latest_;
    std::thread thread_;
};

std::vector<float> dpg_cached_values(const AgentNetworks& nets, std::span<const double> params, const Observation& s,
                                     std::span<const float> action, const std::vector<float>& mu) {
    return {static_cast<float>(nets.critic_value(params, s, action)), static_cast<float>(nets.critic_value(params, s, mu))};
}

}  // namespace

ActorReport Actor::run(const std::atomic<bool>& stop) {
    set_thread_nice(config_.nice);
    const auto start = std::chrono::steady_clock::now();
    ActorReport report;
    report.epsilon = actor_epsilon(config_);
    const bool dqn = nets_.spec().algorithm == Algorithm::kDqn;

    auto env = envs::make_env(config_.env_id, config_.episode_cap);
    std::mt19937_64 rng(config_.seed ^ (0x9e3779b97f4a7c15ULL * (config_.actor_id + 1)));
    nstep::NStepAccumulator acc(config_.n, config_.gamma, config_.actor_id);
    nstep::LocalSendBuffer buffer({config_.flush_size, config_.max_buffered, config_.overflow,
                                   dqn ? nstep::PriorityRule::kDoubleQ : nstep::PriorityRule::kDpg});
    Comms comms(config_, buffer, replay_channels_(), param_channels_(), stop);

    // Parameters are needed before the first action.
    nn::SnapshotPtr params;
    {
        transport::ParamsClient client(param_channels_());
        int backoff = config_.backoff_ms;
        while (!stop && !params) {
            try {
                if (auto s = client.fetch()) {
                    params = std::make_shared<const nn::ParameterSnapshot>(std::move(*s));
                    ++report.param_fetches;
                    break;
                }
            } catch (const std::exception&) {
                ++report.fetch_failures;
            }
            backoff_sleep(backoff, stop);
            backoff = std::min(backoff * 2, config_.max_backoff_ms);
        }
    }
    if (!params) return report;
    comms.start();

    std::uint64_t episode = 0;
    auto reset = [&] { return env->reset(config_.seed * 1000003ULL + config_.actor_id * 7919ULL + episode); };
    envs::EnvState state = reset();
    double episode_return = 0.0;
    std::deque<double> recent;
    auto window_start = start;
    std::uint64_t window_steps = 0;

    while (!stop && (config_.max_steps == 0 || report.steps < config_.max_steps)) {
        if (auto newer = comms.take_newer(params->version)) params = std::move(newer);
        const auto& w = params->weights;

        Action action;
        std::vector<float> cached;
        if (dqn) {
            cached = nets_.q_values(w, state.observation);
            action = select_action(cached, report.epsilon, rng);
        } else {
            const auto mu = nets_.policy_action(w, state.observation);
            auto a = rules::gaussian_exploration(mu, config_.sigma, -1.0, 1.0, rng);
            cached = dpg_cached_values(nets_, w, state.observation, a, mu);
            action = std::move(a);
        }
        const auto r = env->step(state, action);
        auto emitted = acc.push_step(state.observation, action, r.reward, r.discount_flag, cached, r.next.observation);
        episode_return += r.reward;
        ++report.steps;
        ++window_steps;
        live_steps_.store(report.steps, std::memory_order_relaxed);

        const bool episode_over = r.next.terminal || r.truncated;
        if (r.truncated) {
            std::vector<float> final_q;
            if (dqn) {
                final_q = nets_.q_values(w, r.next.observation);
            } else {
                const auto mu = nets_.policy_action(w, r.next.observation);
                final_q = dpg_cached_values(nets_, w, r.next.observation, mu, mu);
            }
            auto tail = acc.flush_bootstrapped(r.next.observation, final_q);
            emitted.insert(emitted.end(), std::make_move_iterator(tail.begin()), std::make_move_iterator(tail.end()));
        }
        report.unique_transitions += emitted.size();
        if (config_.write_to_replay && !emitted.empty()) {
            if (!buffer.push(std::move(emitted))) break;
            if (buffer.pending() >= config_.flush_size) comms.wake();
        }
        if (episode_over) {
            ++report.episodes;
            ++episode;
            recent.push_back(episode_return);
            if (recent.size() > 100) recent.pop_front();
            episode_return = 0.0;
            state = reset();
        } else {
            state = r.next;
        }
        if (report.steps % config_.param_sync_period == 0) comms.request_params();

        if (metrics_ && report.steps % config_.metrics_period == 0) {
            const auto now = std::chrono::steady_clock::now();
            const double dt = std::chrono::duration<double>(now - window_start).count();
            double mean = 0;
            for (double x : recent) mean += x;
            if (!recent.empty()) mean /= static_cast<double>(recent.size());
            metrics_->write({static_cast<double>(config_.actor_id), static_cast<double>(report.steps),
                             static_cast<double>(report.episodes), dt > 0 ? static_cast<double>(window_steps) / dt : 0.0,
                             report.epsilon, mean, static_cast<double>(comms.sent), static_cast<double>(params->version)});
            window_start = now;
            window_steps = 0;
        }
    }
    comms.finish();

    report.accumulator_remainder = acc.buffered();
    report.transitions_sent = comms.sent;
    report.batches_sent = comms.batches;
    report.min_batch_sent = comms.min_batch;
    report.param_fetches += comms.fetches;
    report.send_failures = comms.send_failures;
    report.fetch_failures += comms.fetch_failures;
    report.dropped = buffer.dropped();
    report.params_version = params->version;
    for (double x : recent) report.mean_return += x;
    if (!recent.empty()) report.mean_return /= static_cast<double>(recent.size());
    report.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.steps_per_sec = report.elapsed_s > 0 ? static_cast<double>(report.steps) / report.elapsed_s : 0.0;
    if (metrics_) metrics_->flush();
    return report;
}

EvalResult evaluate_policy(const AgentNetworks& nets, std::span<const double> params, const envs::Environment& env,
                           int episodes, double epsilon, std::uint64_t seed, double gamma) {
    EvalResult out;
    std::mt19937_64 rng(seed);
    const bool dqn = nets.spec().algorithm == Algorithm::kDqn;
    const auto* point_mass = dynamic_cast<const envs::PointMassEnv*>(&env);
    for (int e = 0; e < episodes; ++e) {
        auto s = env.reset(seed + static_cast<std::uint64_t>(e));
        double ret = 0, discounted = 0, scale = 1;
        int len = 0;
        while (true) {
            Action a;
            if (dqn) {
                a = select_action(nets.q_values(params, s.observation), epsilon, rng);
            } else {
                a = nets.policy_action(params, s.observation);
            }
            const auto r = env.step(s, a);
            ret += r.reward;
            discounted += scale * r.reward;
            scale *= gamma;
            ++len;
            s = r.next;
            if (r.next.terminal || r.truncated) break;
        }
        out.returns.push_back(ret);
        out.mean_return += ret;
        out.mean_discounted_return += discounted;
        out.mean_length += len;
        if (point_mass) out.mean_final_distance += std::abs(s.internal[0] - point_mass->goal());
    }
    out.mean_return /= episodes;
    out.mean_discounted_return /= episodes;
    out.mean_length /= episodes;
    out.mean_final_distance /= episodes;
    return out;
}

}  // namespace apex::runtime
