#include "apex/nn/mlp.hpp"

#include <cmath>

namespace apex::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using ConstBias = Eigen::Map<const Eigen::RowVectorXd>;
using Weights = Eigen::Map<RowMajor>;
using Bias = Eigen::Map<Eigen::RowVectorXd>;

void activate(Matrix& z, Activation a) {
    switch (a) {
        case Activation::kIdentity:
            break;
        case Activation::kTanh:
            z = z.array().tanh();
            break;
        case Activation::kRelu:
            z = z.array().max(0.0);
            break;
    }
}

// Scales upstream gradients by the activation derivative, expressed through the
// post-activation values y.
void activation_backward(Matrix& grad, const Matrix& y, Activation a) {
    switch (a) {
        case Activation::kIdentity:
            break;
        case Activation::kTanh:
            grad.array() *= 1.0 - y.array().square();
            break;
        case Activation::kRelu:
            grad.array() *= (y.array() > 0.0).cast<double>();
            break;
    }
}

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::kTanh;
    if (name == "relu") return Activation::kRelu;
    if (name == "identity" || name == "linear") return Activation::kIdentity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::kTanh: return "tanh";
        case Activation::kRelu: return "relu";
        case Activation::kIdentity: return "identity";
    }
    return "?";
}

void MlpSpec::validate() const {
    if (layer_sizes.size() < 3) throw ShapeError("network needs at least one hidden layer");
    for (int s : layer_sizes) {
        if (s <= 0) throw ShapeError("layer sizes must be positive");
    }
    if (dueling && output_activation != Activation::kIdentity) {
        throw ShapeError("dueling heads require an identity output activation");
    }
}

std::size_t MlpSpec::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 2 < layer_sizes.size(); ++i) {
        n += static_cast<std::size_t>(layer_sizes[i + 1]) * (layer_sizes[i] + 1);
    }
    const auto last = static_cast<std::size_t>(layer_sizes[layer_sizes.size() - 2]);
    n += static_cast<std::size_t>(output_dim()) * (last + 1);
    if (dueling) n += last + 1;
    return n;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t offset = 0;
    const auto& sizes = spec_.layer_sizes;
    for (std::size_t i = 0; i + 2 < sizes.size(); ++i) {
        trunk_.push_back(Layer{offset, sizes[i], sizes[i + 1]});
        offset += static_cast<std::size_t>(sizes[i + 1]) * (sizes[i] + 1);
    }
    const int last = sizes[sizes.size() - 2];
    if (spec_.dueling) {
        value_head_ = Layer{offset, last, 1};
        offset += static_cast<std::size_t>(last) + 1;
    }
    head_ = Layer{offset, last, spec_.output_dim()};
    offset += static_cast<std::size_t>(spec_.output_dim()) * (last + 1);
    param_count_ = offset;
}

void Mlp::check_weights(std::span<const double> weights) const {
    if (weights.size() != param_count_) {
        throw ShapeError("weight vector has " + std::to_string(weights.size()) +
                         " entries, network expects " + std::to_string(param_count_));
    }
}

std::vector<double> Mlp::init_weights(std::mt19937_64& rng) const {
    std::vector<double> w(param_count_, 0.0);
    auto fill = [&](const Layer& l) {
        const double limit = std::sqrt(6.0 / (l.in + l.out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i) {
            w[l.offset + i] = u(rng);
        }
    };
    for (const auto& l : trunk_) fill(l);
    if (spec_.dueling) fill(value_head_);
    fill(head_);
    return w;
}

Matrix Mlp::forward(std::span<const double> weights, const Matrix& inputs, Cache* cache) const {
    check_weights(weights);
    if (inputs.cols() != input_dim()) {
        throw ShapeError("input has " + std::to_string(inputs.cols()) + " features, network expects " +
                         std::to_string(input_dim()));
    }
    auto affine = [&](const Matrix& x, const Layer& l) -> Matrix {
        ConstWeights w(weights.data() + l.offset, l.out, l.in);
        ConstBias b(weights.data() + l.offset + static_cast<std::size_t>(l.out) * l.in, l.out);
        Matrix z = x * w.transpose();
        z.rowwise() += b;
        return z;
    };

    if (cache) {
        cache->input = inputs;
        cache->hidden.clear();
    }
    Matrix h = inputs;
    for (const auto& l : trunk_) {
        h = affine(h, l);
        activate(h, spec_.activation);
        if (cache) cache->hidden.push_back(h);
    }

    Matrix out = affine(h, head_);
    if (spec_.dueling) {
        const Matrix value = affine(h, value_head_);
        if (cache) cache->advantage = out;
        const Eigen::VectorXd mean = out.rowwise().mean();
        out.colwise() -= mean;
        out.colwise() += value.col(0);
    } else {
        activate(out, spec_.output_activation);
    }
    if (cache) cache->output = out;
    return out;
}

Mlp::Gradients Mlp::backward(std::span<const double> weights, const Cache& cache,
                             const Matrix& output_grads) const {
    check_weights(weights);
    if (output_grads.rows() != cache.output.rows() || output_grads.cols() != output_dim()) {
        throw ShapeError("output gradient shape does not match forward output");
    }
    if (!output_grads.allFinite()) throw std::invalid_argument("non-finite output gradient");

    Gradients g;
    g.weights.assign(param_count_, 0.0);

    auto affine_backward = [&](const Matrix& dz, const Matrix& x, const Layer& l) -> Matrix {
        Weights dw(g.weights.data() + l.offset, l.out, l.in);
        Bias db(g.weights.data() + l.offset + static_cast<std::size_t>(l.out) * l.in, l.out);
        dw.noalias() += dz.transpose() * x;
        db += dz.colwise().sum();
        ConstWeights w(weights.data() + l.offset, l.out, l.in);
        return dz * w;
    };

    const Matrix& last_hidden = cache.hidden.back();
    Matrix dh;
    if (spec_.dueling) {
        // q_j = v + a_j - mean(a): dv = sum_j dq_j, da_k = dq_k - mean_j dq_j.
        Matrix dv = output_grads.rowwise().sum();
        Matrix da = output_grads;
        const Eigen::VectorXd mean = output_grads.rowwise().mean();
        da.colwise() -= mean;
        dh = affine_backward(da, last_hidden, head_);
        dh += affine_backward(dv, last_hidden, value_head_);
    } else {
        Matrix dz = output_grads;
        activation_backward(dz, cache.output, spec_.output_activation);
        dh = affine_backward(dz, last_hidden, head_);
    }

    for (std::size_t i = trunk_.size(); i-- > 0;) {
        activation_backward(dh, cache.hidden[i], spec_.activation);
        const Matrix& x = (i == 0) ? cache.input : cache.hidden[i - 1];
        dh = affine_backward(dh, x, trunk_[i]);
    }
    g.inputs = std::move(dh);
    return g;
}

Mlp::Gradients Mlp::backward(std::span<const double> weights, const Matrix& inputs,
                             const Matrix& output_grads) const {
    if (!inputs.allFinite()) throw std::invalid_argument("non-finite network input");
    Cache cache;
    forward(weights, inputs, &cache);
    return backward(weights, cache, output_grads);
}

Matrix to_matrix(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) throw ShapeError("ragged feature rows");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

}  // namespace apex::nn
