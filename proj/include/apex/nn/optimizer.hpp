#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apex/common/bytes.hpp"

namespace apex::nn {

enum class OptimizerKind { kCenteredRmsProp, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kCenteredRmsProp;
    double learning_rate = 0.00025 / 4;
    double decay = 0.95;      ///< RMSProp rho
    double epsilon = 1.5e-7;  ///< RMSProp: inside the square root; Adam: added to it
    double beta1 = 0.9;       ///< Adam
    double beta2 = 0.999;     ///< Adam

    static OptimizerConfig centered_rmsprop(double lr = 0.00025 / 4, double decay = 0.95,
                                            double epsilon = 1.5e-7);
    static OptimizerConfig adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                                double epsilon = 1e-8);
};

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Per-weight optimizer accumulators.
 *
 * Centered RMSProp (no momentum):
 *   m <- rho m + (1-rho) g;  v <- rho v + (1-rho) g^2;  w <- w - lr g / sqrt(v - m^2 + eps)
 * Adam uses the usual bias-corrected moments.
 */
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::size_t parameter_count);

    /// Applies one update in place. A non-finite gradient leaves weights and state
    /// untouched and throws NonFiniteGradient.
    void step(std::vector<double>& weights, std::span<const double> gradient);

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t steps() const { return steps_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }

    void save(ByteWriter& out) const;
    void load(ByteReader& in);

private:
    OptimizerConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t steps_ = 0;
};

/// Scales `gradient` to norm `max_norm` when it is longer. Returns the norm before clipping.
double clip_by_global_norm(std::span<double> gradient, double max_norm);

double l2_norm(std::span<const double> v);

}  // namespace apex::nn
