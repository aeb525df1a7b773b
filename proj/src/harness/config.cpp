#include "apex/harness/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <sstream>

#include "apex/common/bytes.hpp"
#include "apex/envs/env.hpp"
#include "apex/transport/tcp.hpp"

namespace apex::harness {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty()) throw ConfigError(key + ": not a valid number: '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number<T>(key, item));
    }
    return out;
}

std::string fmt(double x) {
    std::ostringstream o;
    o << std::setprecision(17) << x;
    return o.str();
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += fmt(v[i]);
        } else {
            out += std::to_string(v[i]);
        }
    }
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field num(T RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<T>(k, v); },
            [m](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt(c.*m);
                } else {
                    return std::to_string(c.*m);
                }
            }};
}

Field flag(bool RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); },
            [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field text(std::string RunConfig::*m) {
    return {[m](RunConfig& c, const std::string&, const std::string& v) { c.*m = v; },
            [m](const RunConfig& c) { return c.*m; }};
}

template <typename T>
Field list(std::vector<T> RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_list<T>(k, v); },
            [m](const RunConfig& c) { return fmt_list(c.*m); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"profile", text(&RunConfig::profile)},
        {"mode",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.mode = runtime::parse_algorithm(v);
              } catch (const std::exception&) {
                  throw ConfigError(k + ": expected dqn or dpg, got '" + v + "'");
              }
          },
          [](const RunConfig& c) { return runtime::to_string(c.mode); }}},
        {"env", text(&RunConfig::env_id)},
        {"episode_cap", num(&RunConfig::episode_cap)},
        {"actors", num(&RunConfig::actors)},
        {"replay_capacity", num(&RunConfig::replay_capacity)},
        {"alpha", num(&RunConfig::alpha)},
        {"beta", num(&RunConfig::beta)},
        {"alpha_evict", num(&RunConfig::alpha_evict)},
        {"eviction",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "fifo") {
                  c.eviction = replay::EvictionMode::kFifo;
              } else if (v == "proportional") {
                  c.eviction = replay::EvictionMode::kProportional;
              } else {
                  throw ConfigError(k + ": expected fifo or proportional, got '" + v + "'");
              }
          },
          [](const RunConfig& c) {
              return std::string(c.eviction == replay::EvictionMode::kFifo ? "fifo" : "proportional");
          }}},
        {"batch_size", num(&RunConfig::batch_size)},
        {"prefetch_depth", num(&RunConfig::prefetch_depth)},
        {"min_fill", num(&RunConfig::min_fill)},
        {"target_sync_period", num(&RunConfig::target_sync_period)},
        {"remove_to_fit_period", num(&RunConfig::remove_to_fit_period)},
        {"optimizer", text(&RunConfig::optimizer)},
        {"lr", num(&RunConfig::lr)},
        {"actor_lr", num(&RunConfig::actor_lr)},
        {"max_grad_norm", num(&RunConfig::max_grad_norm)},
        {"hidden", list(&RunConfig::hidden)},
        {"critic_hidden", list(&RunConfig::critic_hidden)},
        {"dueling", flag(&RunConfig::dueling)},
        {"activation",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.activation = nn::parse_activation(v);
              } catch (const std::exception&) {
                  throw ConfigError(k + ": unknown activation '" + v + "'");
              }
          },
          [](const RunConfig& c) { return nn::to_string(c.activation); }}},
        {"n", num(&RunConfig::n)},
        {"gamma", num(&RunConfig::gamma)},
        {"eps_base", num(&RunConfig::eps_base)},
        {"eps_alpha", num(&RunConfig::eps_alpha)},
        {"eps_set", list(&RunConfig::eps_set)},
        {"param_sync_period", num(&RunConfig::param_sync_period)},
        {"flush_size", num(&RunConfig::flush_size)},
        {"max_buffered", num(&RunConfig::max_buffered)},
        {"duplication", num(&RunConfig::duplication)},
        {"sigma", num(&RunConfig::sigma)},
        {"actor_nice", num(&RunConfig::actor_nice)},
        {"transport",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "inproc") {
                  c.transport = TransportKind::kInProc;
              } else if (v == "tcp") {
                  c.transport = TransportKind::kTcp;
              } else {
                  throw ConfigError(k + ": expected inproc or tcp, got '" + v + "'");
              }
          },
          [](const RunConfig& c) { return std::string(c.transport == TransportKind::kInProc ? "inproc" : "tcp"); }}},
        {"replay_endpoint", text(&RunConfig::replay_endpoint)},
        {"params_endpoint", text(&RunConfig::params_endpoint)},
        {"seed", num(&RunConfig::seed)},
        {"total_updates", num(&RunConfig::total_updates)},
        {"max_seconds", num(&RunConfig::max_seconds)},
        {"eval_period", num(&RunConfig::eval_period)},
        {"eval_episodes", num(&RunConfig::eval_episodes)},
        {"solve_fraction", num(&RunConfig::solve_fraction)},
        {"solve_distance", num(&RunConfig::solve_distance)},
        {"stop_on_solve", flag(&RunConfig::stop_on_solve)},
        {"metrics_dir", text(&RunConfig::metrics_dir)},
        {"checkpoint_dir", text(&RunConfig::checkpoint_dir)},
        {"checkpoint_period", num(&RunConfig::checkpoint_period)},
        {"resume", flag(&RunConfig::resume)},
        {"replay_restart_at", num(&RunConfig::replay_restart_at)},
        {"replay_downtime_ms", num(&RunConfig::replay_downtime_ms)},
    };
    return table;
}

// Keys that only change where output goes; they do not alter the run's identity.
bool identity_free(const std::string& key) {
    return key == "metrics_dir" || key == "checkpoint_dir" || key == "resume" || key == "replay_endpoint" ||
           key == "params_endpoint";
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& [name, f] : fields()) out.push_back(name);
        return out;
    }();
    return k;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [name, f] : fields()) out += name + "=" + f.get(*this) + "\n";
    return out;
}

std::uint64_t RunConfig::hash() const {
    std::string canon;
    for (const auto& [name, f] : fields()) {
        if (!identity_free(name)) canon += name + "=" + f.get(*this) + "\n";
    }
    return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(canon.data()), canon.size()));
}

std::string RunConfig::run_id() const {
    std::ostringstream o;
    o << "s" << seed << "-" << std::hex << std::setw(16) << std::setfill('0') << hash();
    return o.str();
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (actors < 1) fail("actors must be at least 1");
    if (actors > transition_key::kMaxActors) fail("too many actors");
    std::unique_ptr<envs::Environment> env;
    try {
        env = envs::make_env(env_id, episode_cap);
    } catch (const std::exception& e) {
        fail(std::string("env: ") + e.what());
    }
    const bool continuous = !env->spec().actions.is_discrete();
    if (mode == runtime::Algorithm::kDqn && continuous) fail("dqn needs a discrete-action environment");
    if (mode == runtime::Algorithm::kDpg && !continuous) fail("dpg needs a continuous-action environment");
    if (mode == runtime::Algorithm::kDpg && dueling) fail("dueling heads apply to dqn only; set dueling=false");
    if (replay_capacity < 1) fail("replay_capacity must be positive");
    if (!(alpha >= 0)) fail("alpha must be non-negative");
    if (!(beta >= 0 && beta <= 1)) fail("beta must lie in [0, 1]");
    if (batch_size < 1) fail("batch_size must be positive");
    if (prefetch_depth < 1) fail("prefetch_depth must be at least 1");
    if (target_sync_period < 1 || remove_to_fit_period < 1) fail("learner periods must be at least 1");
    if (optimizer != "rmsprop" && optimizer != "adam") fail("optimizer must be rmsprop or adam");
    if (!(lr > 0) || !(actor_lr > 0)) fail("learning rates must be positive");
    if (hidden.empty() || (mode == runtime::Algorithm::kDpg && critic_hidden.empty())) {
        fail("networks need at least one hidden layer");
    }
    for (int h : hidden) {
        if (h < 1) fail("hidden sizes must be positive");
    }
    for (int h : critic_hidden) {
        if (h < 1) fail("critic hidden sizes must be positive");
    }
    if (n < 1) fail("n must be at least 1");
    if (!(gamma >= 0 && gamma < 1)) fail("gamma must lie in [0, 1)");
    if (!(eps_base > 0 && eps_base <= 1)) fail("eps_base must lie in (0, 1]");
    if (param_sync_period < 1) fail("param_sync_period must be at least 1");
    if (flush_size < 1 || max_buffered < flush_size) fail("need 1 <= flush_size <= max_buffered");
    if (duplication < 1 || static_cast<std::uint64_t>(duplication) > transition_key::kMaxDuplicates) {
        fail("duplication must lie in [1, 16]");
    }
    if (actor_nice < 0 || actor_nice > 19) fail("actor_nice must lie in [0, 19]");
    if (total_updates == 0 && max_seconds <= 0) fail("set total_updates or max_seconds so the run ends");
    if (eval_period < 1) fail("eval_period must be at least 1");
    if (checkpoint_period && checkpoint_dir.empty()) fail("checkpoint_period needs checkpoint_dir");
    if (transport == TransportKind::kTcp) {
        try {
            transport::Endpoint::parse(replay_endpoint);
            transport::Endpoint::parse(params_endpoint);
        } catch (const std::exception& e) {
            fail(std::string("endpoint: ") + e.what());
        }
    }
    learner_config().validate();
    actor_config(0).validate();
}

runtime::AgentSpec RunConfig::agent_spec() const {
    auto spec = runtime::AgentSpec::for_env(envs::make_env(env_id, episode_cap)->spec(), mode);
    spec.hidden = hidden;
    spec.critic_hidden = critic_hidden;
    spec.dueling = mode == runtime::Algorithm::kDqn && dueling;
    spec.activation = activation;
    return spec;
}

runtime::LearnerConfig RunConfig::learner_config() const {
    runtime::LearnerConfig c;
    c.batch_size = batch_size;
    c.prefetch_depth = prefetch_depth;
    c.min_fill = min_fill;
    c.target_sync_period = target_sync_period;
    c.remove_to_fit_period = remove_to_fit_period;
    c.optimizer = optimizer == "adam" ? nn::OptimizerConfig::adam(lr) : nn::OptimizerConfig::centered_rmsprop(lr);
    c.actor_optimizer = nn::OptimizerConfig::adam(actor_lr);
    c.beta = beta;
    c.max_grad_norm = max_grad_norm;
    c.total_updates = total_updates;
    c.seed = seed;
    return c;
}

runtime::ActorConfig RunConfig::actor_config(std::uint32_t actor_id) const {
    runtime::ActorConfig c;
    c.actor_id = actor_id;
    c.actor_count = actors;
    c.eps_base = eps_base;
    c.eps_alpha = eps_alpha;
    c.eps_set = eps_set;
    c.param_sync_period = param_sync_period;
    c.flush_size = flush_size;
    c.max_buffered = max_buffered;
    c.n = n;
    c.gamma = gamma;
    c.duplication = duplication;
    c.env_id = env_id;
    c.episode_cap = episode_cap;
    c.seed = seed;
    c.sigma = sigma;
    c.nice = actor_nice;
    return c;
}

replay::ReplayConfig RunConfig::replay_config() const {
    replay::ReplayConfig c;
    c.soft_capacity = replay_capacity;
    c.alpha = alpha;
    c.alpha_evict = alpha_evict;
    c.eviction = eviction;
    c.seed = seed ^ 0x5eedULL;
    return c;
}

void apply_profile(RunConfig& c, const std::string& profile) {
    const bool dpg = c.mode == runtime::Algorithm::kDpg;
    c.profile = profile;
    if (profile == "toy") {
        c.batch_size = 64;
        c.n = 3;
        c.gamma = 0.99;
        c.alpha = 0.6;
        c.beta = 0.4;
        c.replay_capacity = 100000;
        c.min_fill = 1000;
        c.prefetch_depth = 16;
        c.flush_size = 50;
        c.max_buffered = 100;
        c.param_sync_period = 400;
        c.remove_to_fit_period = 100;
        c.max_grad_norm = 40;
        c.hidden = {64};
        c.critic_hidden = {64, 64};
        if (dpg) {
            c.env_id = "pointmass";
            c.actors = 2;
            c.optimizer = "adam";
            c.lr = 1e-4;
            c.actor_lr = 1e-4;
            c.sigma = 0.3;
            c.target_sync_period = 100;
            c.dueling = false;
            c.eviction = replay::EvictionMode::kProportional;
            c.replay_capacity = 20000;
            c.actor_nice = 0;
            c.total_updates = 30000;
        } else {
            c.optimizer = "rmsprop";
            c.lr = 2.5e-4;
            c.target_sync_period = 500;
            c.dueling = true;
            c.eviction = replay::EvictionMode::kFifo;
            c.total_updates = 50000;
        }
    } else if (profile == "control-like") {
        c.mode = runtime::Algorithm::kDpg;
        c.env_id = "pointmass";
        c.actors = 64;
        c.batch_size = 512;
        c.n = 5;
        c.gamma = 0.99;
        c.alpha = 0.6;
        c.beta = 0.4;
        c.alpha_evict = -0.4;
        c.eviction = replay::EvictionMode::kProportional;
        c.replay_capacity = 1000000;
        c.min_fill = 50000;
        c.optimizer = "adam";
        c.lr = 1e-4;
        c.actor_lr = 1e-4;
        c.sigma = 0.3;
        c.target_sync_period = 100;
        c.hidden = {300, 200};
        c.critic_hidden = {400, 300};
        c.dueling = false;
        c.total_updates = 0;
    } else if (profile == "atari-like") {
        c.mode = runtime::Algorithm::kDqn;
        c.actors = 360;
        c.batch_size = 512;
        c.n = 3;
        c.gamma = 0.99;
        c.alpha = 0.6;
        c.beta = 0.4;
        c.eviction = replay::EvictionMode::kFifo;
        c.replay_capacity = 2000000;
        c.min_fill = 50000;
        c.optimizer = "rmsprop";
        c.lr = 0.00025 / 4;
        c.target_sync_period = 2500;
        c.hidden = {512};
        c.dueling = true;
        c.total_updates = 0;
    } else {
        throw ConfigError("unknown profile '" + profile + "' (toy, control-like, atari-like)");
    }
    c.prefetch_depth = 16;
    c.flush_size = 50;
    c.param_sync_period = 400;
    c.remove_to_fit_period = 100;
    c.max_grad_norm = 40;
    c.eps_base = 0.4;
    c.eps_alpha = 7;
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

RunConfig build_config(const std::vector<std::pair<std::string, std::string>>& assignments) {
    RunConfig c;
    std::string profile = "toy";
    for (const auto& [k, v] : assignments) {
        if (k == "mode") c.set(k, v);
        if (k == "profile") profile = v;
    }
    apply_profile(c, profile);
    for (const auto& [k, v] : assignments) {
        if (k != "profile") c.set(k, v);
    }
    return c;
}

RunConfig preset(const std::string& name) {
    if (name == "toy-grid") {
        return build_config({{"env", "grid-10x10"}, {"actors", "4"}});
    }
    if (name == "toy-chain") {
        return build_config({{"env", "chain-5"}, {"actors", "2"}, {"total_updates", "10000"}});
    }
    if (name == "toy-pointmass") {
        return build_config({{"mode", "dpg"}, {"env", "pointmass"}, {"actors", "2"}});
    }
    throw ConfigError("unknown preset '" + name + "'");
}

std::vector<Variant> experiment_preset(const std::string& name) {
    std::vector<Variant> out;
    auto grid = [] { return preset("toy-grid"); };
    if (name == "scale-actors") {
        for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
            auto c = grid();
            c.actors = n;
            out.push_back({"actors=" + std::to_string(n), c});
        }
    } else if (name == "vary-replay-capacity") {
        for (std::size_t cap : {2500u, 10000u, 40000u}) {
            auto c = grid();
            c.replay_capacity = cap;
            out.push_back({"capacity=" + std::to_string(cap), c});
        }
    } else if (name == "recency-duplication") {
        auto dup = grid();
        dup.actors = 4;
        dup.duplication = 2;
        auto real = grid();
        real.actors = 8;
        real.duplication = 1;
        out.push_back({"actors=4,k=2", dup});
        out.push_back({"actors=8,k=1", real});
    } else if (name == "fixed-eps-set") {
        auto ladder = grid();
        ladder.actors = 6;
        auto fixed = ladder;
        fixed.eps_set = {0.4, 0.1, 0.03, 0.01, 0.003, 0.001};
        out.push_back({"ladder", ladder});
        out.push_back({"fixed-set", fixed});
    } else if (name == "uniform-vs-prioritized") {
        auto prioritized = grid();
        prioritized.alpha = 0.6;
        auto uniform = grid();
        uniform.alpha = 0.0;
        out.push_back({"alpha=0.6", prioritized});
        out.push_back({"alpha=0", uniform});
    } else {
        out.push_back({name, preset(name)});
    }
    return out;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"toy-grid",           "toy-chain",           "toy-pointmass",
                                                   "scale-actors",       "vary-replay-capacity", "recency-duplication",
                                                   "fixed-eps-set",      "uniform-vs-prioritized"};
    return names;
}

void apply_env_overrides(RunConfig& c) {
    if (const char* v = std::getenv("APEX_REPLAY_ENDPOINT"); v && *v) c.replay_endpoint = v;
    if (const char* v = std::getenv("APEX_PARAMS_ENDPOINT"); v && *v) c.params_endpoint = v;
}

}  // namespace apex::harness
