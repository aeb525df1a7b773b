#include "apex/nn/optimizer.hpp"

#include <cmath>

namespace apex::nn {

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "rmsprop" || name == "centered-rmsprop") return OptimizerKind::kCenteredRmsProp;
    if (name == "adam") return OptimizerKind::kAdam;
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::kAdam ? "adam" : "rmsprop";
}

OptimizerConfig OptimizerConfig::centered_rmsprop(double lr, double decay, double epsilon) {
    OptimizerConfig c;
    c.kind = OptimizerKind::kCenteredRmsProp;
    c.learning_rate = lr;
    c.decay = decay;
    c.epsilon = epsilon;
    return c;
}

OptimizerConfig OptimizerConfig::adam(double lr, double beta1, double beta2, double epsilon) {
    OptimizerConfig c;
    c.kind = OptimizerKind::kAdam;
    c.learning_rate = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.epsilon = epsilon;
    return c;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void Optimizer::step(std::vector<double>& weights, std::span<const double> gradient) {
    if (weights.size() != m_.size() || gradient.size() != m_.size()) {
        throw std::invalid_argument("optimizer: weight/gradient size mismatch");
    }
    for (double g : gradient) {
        if (!std::isfinite(g)) throw NonFiniteGradient("optimizer step refused: non-finite gradient");
    }
    ++steps_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::kCenteredRmsProp) {
        const double rho = config_.decay;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double g = gradient[i];
            m_[i] = rho * m_[i] + (1.0 - rho) * g;
            v_[i] = rho * v_[i] + (1.0 - rho) * g * g;
            weights[i] -= lr * g / std::sqrt(v_[i] - m_[i] * m_[i] + config_.epsilon);
        }
    } else {
        const double b1 = config_.beta1;
        const double b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double g = gradient[i];
            m_[i] = b1 * m_[i] + (1.0 - b1) * g;
            v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
            weights[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
        }
    }
}

void Optimizer::save(ByteWriter& out) const {
    out.put<std::uint8_t>(static_cast<std::uint8_t>(config_.kind));
    out.put(steps_);
    out.put<std::uint64_t>(m_.size());
    for (double x : m_) out.put(x);
    for (double x : v_) out.put(x);
}

void Optimizer::load(ByteReader& in) {
    const auto kind = static_cast<OptimizerKind>(in.get<std::uint8_t>());
    if (kind != config_.kind) throw std::runtime_error("optimizer kind mismatch in checkpoint");
    const auto steps = in.get<std::uint64_t>();
    const auto n = in.get<std::uint64_t>();
    if (n != m_.size()) throw std::runtime_error("optimizer size mismatch in checkpoint");
    std::vector<double> m(n), v(n);
    for (auto& x : m) x = in.get<double>();
    for (auto& x : v) x = in.get<double>();
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double clip_by_global_norm(std::span<double> gradient, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
    const double norm = l2_norm(gradient);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& g : gradient) g *= scale;
    }
    return norm;
}

}  // namespace apex::nn
