#pragma once

#include <random>

#include "sefusion/ops.hpp"

namespace sefusion {

enum class Mode { training, inference };

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer.
template <std::floating_point T>
Tensor<T> uniform_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng));
    return Tensor<T>(shape, std::move(values));
}

template <std::floating_point T>
struct DenseParams {
    Tensor<T> weights;  // [in, out]
    Tensor<T> bias;     // [out]

    static DenseParams init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
        if (in == 0 || out == 0) throw ShapeError("dense layer needs in, out >= 1");
        return {uniform_init<T>({in, out}, in, rng), Tensor<T>::zeros({out})};
    }
    std::size_t in_features() const { return weights.dim(0); }
    std::size_t out_features() const { return weights.dim(1); }
};

/// x[N,in] W[in,out] + b.
template <std::floating_point T>
Tensor<T> dense_forward(const DenseParams<T>& p, const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(1) != p.in_features())
        throw ShapeError("dense: input " + shape_str(x.shape()) + " does not match weights " +
                         shape_str(p.weights.shape()));
    return add_bias(matmul(x, p.weights), p.bias);
}

template <std::floating_point T>
struct BatchNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T epsilon = T(1e-5);
    T momentum = T(0.99);

    static BatchNormParams init(std::size_t channels) {
        return {Tensor<T>::ones({channels}), Tensor<T>::zeros({channels}),
                Tensor<T>::zeros({channels}), Tensor<T>::ones({channels})};
    }
    std::size_t channels() const { return gamma.numel(); }
};

/**
 * Batch normalization over axis 1. Training mode normalizes with batch
 * statistics and folds them into the running averages:
 *   running = momentum * running + (1 - momentum) * batch.
 */
template <std::floating_point T>
Tensor<T> batchnorm_forward(BatchNormParams<T>& p, const Tensor<T>& x, Mode mode) {
    if (x.rank() < 2 || x.dim(1) != p.channels())
        throw ShapeError("batchnorm: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(p.channels()) + " channels");
    if (mode == Mode::inference)
        return batch_norm_infer(x, p.gamma, p.beta, p.running_mean.data(), p.running_var.data(),
                                p.epsilon);
    if (x.dim(0) < 2) throw ShapeError("batchnorm: training mode needs batch size >= 2");
    std::vector<T> mean, var;
    Tensor<T> y = batch_norm_train(x, p.gamma, p.beta, p.epsilon, mean, var);
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    for (std::size_t c = 0; c < mean.size(); ++c) {
        rm[c] = p.momentum * rm[c] + (T(1) - p.momentum) * mean[c];
        rv[c] = p.momentum * rv[c] + (T(1) - p.momentum) * var[c];
    }
    return y;
}

struct DropoutSpec {
    double rate = 0.0;
    Mode mode = Mode::inference;
};

/// Inverted dropout; the identity in inference mode or at rate 0.
template <std::floating_point T>
Tensor<T> dropout_forward(const DropoutSpec& spec, const Tensor<T>& x, std::mt19937_64& rng) {
    if (!(spec.rate >= 0.0 && spec.rate < 1.0))
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (spec.mode == Mode::inference || spec.rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - spec.rate);
    const T survivor = static_cast<T>(1.0 / (1.0 - spec.rate));
    std::vector<T> mask(x.numel());
    for (auto& m : mask) m = keep(rng) ? survivor : T(0);
    return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

/// Bottleneck divisor actually used for `channels`: r, or C itself when C < r.
inline std::size_t effective_se_ratio(std::size_t channels, std::size_t requested) {
    if (requested == 0) throw std::invalid_argument("SE reduction ratio must be positive");
    const std::size_t r = channels < requested ? channels : requested;
    if (r == 0 || channels % r != 0)
        throw std::invalid_argument("SE reduction ratio " + std::to_string(requested) +
                                    " does not divide " + std::to_string(channels) + " channels");
    return r;
}

/// Squeeze-and-excitation weights: w1 [C, C/r], w2 [C/r, C]; no biases.
template <std::floating_point T>
struct SEBlockParams {
    Tensor<T> w1;
    Tensor<T> w2;
    std::size_t reduction_ratio = 16;

    static SEBlockParams init(std::size_t channels, std::size_t requested_ratio, std::mt19937_64& rng) {
        const std::size_t r = effective_se_ratio(channels, requested_ratio);
        const std::size_t hidden = channels / r;
        SEBlockParams p;
        p.w1 = uniform_init<T>({channels, hidden}, channels, rng);
        p.w2 = uniform_init<T>({hidden, channels}, hidden, rng);
        p.reduction_ratio = r;
        return p;
    }
    std::size_t channels() const { return w1.dim(0); }
};

/// Z_c: spatial mean of each channel.
template <std::floating_point T>
Tensor<T> se_squeeze(const Tensor<T>& x) {
    return global_avg_pool(x);
}

/// E = sigmoid(relu(Z W1) W2), one attention weight per channel.
template <std::floating_point T>
Tensor<T> se_excite(const SEBlockParams<T>& p, const Tensor<T>& z) {
    if (z.rank() != 2 || z.dim(1) != p.channels() || p.w2.dim(0) != p.w1.dim(1) ||
        p.w2.dim(1) != p.channels())
        throw ShapeError("se_excite: squeeze vector " + shape_str(z.shape()) +
                         " incompatible with weights " + shape_str(p.w1.shape()) + " / " +
                         shape_str(p.w2.shape()));
    return sigmoid(matmul(relu(matmul(z, p.w1)), p.w2));
}

/// Y_cij = E_c * X_cij.
template <std::floating_point T>
Tensor<T> se_scale(const Tensor<T>& x, const Tensor<T>& e) {
    return elementwise_mul_broadcast(x, e);
}

template <std::floating_point T>
Tensor<T> se_block_forward(const SEBlockParams<T>& p, const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(1) != p.channels())
        throw ShapeError("se_block: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(p.channels()) + " channels");
    return se_scale(x, se_excite(p, se_squeeze(x)));
}

}  // namespace sefusion
