#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apex::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

enum class Activation { kIdentity, kTanh, kRelu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Fully-connected network shape.
///
/// `layer_sizes` lists input, hidden and output widths; at least one hidden layer.
/// With `dueling`, the last hidden layer feeds a scalar value head and an advantage head
/// of width output, combined as q = v + adv - mean(adv).
struct MlpSpec {
    std::vector<int> layer_sizes;
    Activation activation = Activation::kRelu;
    Activation output_activation = Activation::kIdentity;
    bool dueling = false;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    void validate() const;
    std::size_t parameter_count() const;
};

/**
 * Stateless evaluator for a flat weight vector laid out layer by layer as a row-major
 * (out x in) weight block followed by its bias. Dueling heads come last: value head
 * then advantage head.
 *
 * Batches are row-per-sample matrices.
 */
class Mlp {
public:
    explicit Mlp(MlpSpec spec);

    const MlpSpec& spec() const { return spec_; }
    std::size_t parameter_count() const { return param_count_; }
    int input_dim() const { return spec_.input_dim(); }
    int output_dim() const { return spec_.output_dim(); }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    std::vector<double> init_weights(std::mt19937_64& rng) const;

    /// Intermediate values kept for backward().
    struct Cache {
        Matrix input;
        std::vector<Matrix> hidden;  ///< post-activation output of each hidden layer
        Matrix output;               ///< post-output-activation values
        Matrix advantage;            ///< dueling only
    };

    Matrix forward(std::span<const double> weights, const Matrix& inputs, Cache* cache = nullptr) const;

    struct Gradients {
        std::vector<double> weights;
        Matrix inputs;
    };

    /// Gradient of sum(output_grads .* outputs) with respect to weights and inputs.
    Gradients backward(std::span<const double> weights, const Cache& cache,
                       const Matrix& output_grads) const;

    Gradients backward(std::span<const double> weights, const Matrix& inputs,
                       const Matrix& output_grads) const;

private:
    struct Layer {
        std::size_t offset;  ///< start of the weight block; bias follows it
        int in;
        int out;
    };

    void check_weights(std::span<const double> weights) const;

    MlpSpec spec_;
    std::vector<Layer> trunk_;  ///< hidden layers
    Layer head_{};              ///< output layer, or the advantage head when dueling
    Layer value_head_{};        ///< dueling only
    std::size_t param_count_ = 0;
};

/// Copies float feature rows into a batch matrix.
Matrix to_matrix(const std::vector<std::vector<float>>& rows);

}  // namespace apex::nn
