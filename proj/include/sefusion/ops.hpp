#pragma once

#include <cmath>
#include <limits>
#include <random>

#include "sefusion/tensor.hpp"

namespace sefusion {

namespace detail {

template <std::floating_point T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

template <std::floating_point T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

/**
 * Elementwise op from a forward function and a local derivative
 * d(out)/d(in) expressed through (input, output).
 */
template <std::floating_point T, class Fwd, class Deriv>
Tensor<T> unary_op(const Tensor<T>& x, std::string name, Fwd fwd, Deriv deriv) {
    std::vector<T> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    return detail::make_result<T>(x.shape(), std::move(out), std::move(name), {x},
                                  [deriv](detail::Node<T>& node) {
                                      auto& src = *node.inputs[0];
                                      if (!src.requires_grad) return;
                                      auto& g = src.grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                          g[i] += node.grad[i] * deriv(src.data[i], node.data[i]);
                                  });
}

/// Logistic function, clamped so that outputs stay strictly inside (0, 1).
template <std::floating_point T>
T sigmoid_value(T x) {
    constexpr T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    T y;
    if (x >= T(0)) {
        y = T(1) / (T(1) + std::exp(-x));
    } else {
        const T e = std::exp(x);
        y = e / (T(1) + e);
    }
    return std::clamp(y, lo, hi);
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(x, "sigmoid", [](T v) { return sigmoid_value(v); },
                    [](T, T y) { return y * (T(1) - y); });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
                    [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    return unary_op(x, "scale", [factor](T v) { return v * factor; },
                    [factor](T, T) { return factor; });
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result<T>(a.shape(), std::move(out), "add", {a, b},
                                  [](detail::Node<T>& node) {
                                      for (auto& in : node.inputs)
                                          if (in->requires_grad) in->accumulate(node.grad);
                                  });
}

/// Elementwise product of equally shaped tensors.
template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result<T>(a.shape(), std::move(out), "mul", {a, b},
                                  [](detail::Node<T>& node) {
                                      auto& x = *node.inputs[0];
                                      auto& y = *node.inputs[1];
                                      if (x.requires_grad) {
                                          auto& g = x.grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i)
                                              g[i] += node.grad[i] * y.data[i];
                                      }
                                      if (y.requires_grad) {
                                          auto& g = y.grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i)
                                              g[i] += node.grad[i] * x.data[i];
                                      }
                                  });
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.data()) total += v;
    return detail::make_result<T>(Shape{}, {total}, "sum", {x}, [](detail::Node<T>& node) {
        auto& src = *node.inputs[0];
        if (!src.requires_grad) return;
        auto& g = src.grad_buffer();
        for (auto& gi : g) gi += node.grad[0];
    });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Matrix product [m,k] x [k,n] -> [m,n].
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    std::vector<T> out(m * n, T(0));
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
        }
    return detail::make_result<T>(
        Shape{m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node<T>& node) {
            auto& an = *node.inputs[0];
            auto& bn = *node.inputs[1];
            const auto& dC = node.grad;
            if (an.requires_grad) {
                auto& dA = an.grad_buffer();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T acc = T(0);
                        for (std::size_t j = 0; j < n; ++j) acc += dC[i * n + j] * bn.data[p * n + j];
                        dA[i * k + p] += acc;
                    }
            }
            if (bn.requires_grad) {
                auto& dB = bn.grad_buffer();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const T aip = an.data[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * dC[i * n + j];
                    }
            }
        });
}

/// Adds a per-channel bias b[C] to x[N,C,...].
template <std::floating_point T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw ShapeError("add_bias: cannot add bias " + shape_str(bias.shape()) + " to " +
                         shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / std::max<std::size_t>(1, n * c);
    std::vector<T> out(x.data().begin(), x.data().end());
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < inner; ++i) out[(s * c + ch) * inner + i] += bias[ch];
    return detail::make_result<T>(
        x.shape(), std::move(out), "add_bias", {x, bias}, [n, c, inner](detail::Node<T>& node) {
            auto& xn = *node.inputs[0];
            auto& bn = *node.inputs[1];
            if (xn.requires_grad) xn.accumulate(node.grad);
            if (bn.requires_grad) {
                auto& g = bn.grad_buffer();
                for (std::size_t s = 0; s < n; ++s)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t i = 0; i < inner; ++i) g[ch] += node.grad[(s * c + ch) * inner + i];
            }
        });
}

inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

/// Cross-correlation of input[N,C,H,W] with kernel[F,C,Kh,Kw], zero padding.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t padding) {
    detail::require_rank(input, 4, "conv2d");
    detail::require_rank(kernel, 4, "conv2d");
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t F = kernel.dim(0), Kh = kernel.dim(2), Kw = kernel.dim(3);
    if (kernel.dim(1) != C)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                         shape_str(input.shape()));
    if (H + 2 * padding < Kh || W + 2 * padding < Kw)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " exceeds padded input " +
                         shape_str(input.shape()) + " with padding " + std::to_string(padding));
    const std::size_t Ho = conv_output_extent(H, Kh, stride, padding);
    const std::size_t Wo = conv_output_extent(W, Kw, stride, padding);
    const long pad = static_cast<long>(padding);

    // Visits every (input, kernel, output) triple that contributes to the result.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t ki = 0; ki < Kh; ++ki)
                        for (std::size_t kj = 0; kj < Kw; ++kj) {
                            const std::size_t kidx = ((f * C + c) * Kh + ki) * Kw + kj;
                            for (std::size_t oh = 0; oh < Ho; ++oh) {
                                const long ih = static_cast<long>(oh * stride + ki) - pad;
                                if (ih < 0 || ih >= static_cast<long>(H)) continue;
                                const std::size_t in_row = ((n * C + c) * H + ih) * W;
                                const std::size_t out_row = ((n * F + f) * Ho + oh) * Wo;
                                for (std::size_t ow = 0; ow < Wo; ++ow) {
                                    const long iw = static_cast<long>(ow * stride + kj) - pad;
                                    if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                    fn(in_row + iw, kidx, out_row + ow);
                                }
                            }
                        }
    };

    std::vector<T> out(N * F * Ho * Wo, T(0));
    auto X = input.data();
    auto K = kernel.data();
    for_each_tap([&](std::size_t xi, std::size_t ki, std::size_t oi) { out[oi] += X[xi] * K[ki]; });

    return detail::make_result<T>(Shape{N, F, Ho, Wo}, std::move(out), "conv2d", {input, kernel},
                                  [for_each_tap](detail::Node<T>& node) {
                                      auto& xn = *node.inputs[0];
                                      auto& kn = *node.inputs[1];
                                      const auto& dY = node.grad;
                                      if (xn.requires_grad) {
                                          auto& dX = xn.grad_buffer();
                                          for_each_tap([&](std::size_t xi, std::size_t ki, std::size_t oi) {
                                              dX[xi] += kn.data[ki] * dY[oi];
                                          });
                                      }
                                      if (kn.requires_grad) {
                                          auto& dK = kn.grad_buffer();
                                          for_each_tap([&](std::size_t xi, std::size_t ki, std::size_t oi) {
                                              dK[ki] += xn.data[xi] * dY[oi];
                                          });
                                      }
                                  });
}

/// Z[n,c] = mean over (h, w) of X[n,c,h,w].
template <std::floating_point T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    detail::require_rank(x, 4, "global_avg_pool");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (HW == 0) throw ShapeError("global_avg_pool: empty spatial extent");
    std::vector<T> out(N * C, T(0));
    auto X = x.data();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T acc = T(0);
        for (std::size_t i = 0; i < HW; ++i) acc += X[nc * HW + i];
        out[nc] = acc / static_cast<T>(HW);
    }
    return detail::make_result<T>(Shape{N, C}, std::move(out), "global_avg_pool", {x},
                                  [N, C, HW](detail::Node<T>& node) {
                                      auto& src = *node.inputs[0];
                                      if (!src.requires_grad) return;
                                      auto& g = src.grad_buffer();
                                      const T inv = T(1) / static_cast<T>(HW);
                                      for (std::size_t nc = 0; nc < N * C; ++nc)
                                          for (std::size_t i = 0; i < HW; ++i) g[nc * HW + i] += node.grad[nc] * inv;
                                  });
}

/// Y[n,c,h,w] = E[n,c] * X[n,c,h,w].
template <std::floating_point T>
Tensor<T> elementwise_mul_broadcast(const Tensor<T>& x, const Tensor<T>& e) {
    detail::require_rank(x, 4, "elementwise_mul_broadcast");
    detail::require_rank(e, 2, "elementwise_mul_broadcast");
    if (e.dim(0) != x.dim(0) || e.dim(1) != x.dim(1))
        throw ShapeError("elementwise_mul_broadcast: cannot broadcast " + shape_str(e.shape()) +
                         " over " + shape_str(x.shape()));
    const std::size_t NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> out(x.numel());
    for (std::size_t nc = 0; nc < NC; ++nc)
        for (std::size_t i = 0; i < HW; ++i) out[nc * HW + i] = e[nc] * x[nc * HW + i];
    return detail::make_result<T>(x.shape(), std::move(out), "elementwise_mul_broadcast", {x, e},
                                  [NC, HW](detail::Node<T>& node) {
                                      auto& xn = *node.inputs[0];
                                      auto& en = *node.inputs[1];
                                      if (xn.requires_grad) {
                                          auto& g = xn.grad_buffer();
                                          for (std::size_t nc = 0; nc < NC; ++nc)
                                              for (std::size_t i = 0; i < HW; ++i)
                                                  g[nc * HW + i] += node.grad[nc * HW + i] * en.data[nc];
                                      }
                                      if (en.requires_grad) {
                                          auto& g = en.grad_buffer();
                                          for (std::size_t nc = 0; nc < NC; ++nc) {
                                              T acc = T(0);
                                              for (std::size_t i = 0; i < HW; ++i)
                                                  acc += node.grad[nc * HW + i] * xn.data[nc * HW + i];
                                              g[nc] += acc;
                                          }
                                      }
                                  });
}

namespace detail {

inline void require_concat_compatible(const Shape& a, const Shape& b) {
    bool ok = a.size() >= 2 && a.size() == b.size() && a[0] == b[0];
    for (std::size_t i = 2; ok && i < a.size(); ++i) ok = a[i] == b[i];
    if (!ok)
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
}

}  // namespace detail

/// Concatenates a[N,Ca,...] and b[N,Cb,...] along axis 1.
template <std::floating_point T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_concat_compatible(a.shape(), b.shape());
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::size_t inner = shape_numel(Shape(a.shape().begin() + 2, a.shape().end()));
    Shape shape = a.shape();
    shape[1] = Ca + Cb;
    std::vector<T> out;
    out.reserve(shape_numel(shape));
    for (std::size_t n = 0; n < N; ++n) {
        auto ab = a.data().begin() + n * Ca * inner;
        auto bb = b.data().begin() + n * Cb * inner;
        out.insert(out.end(), ab, ab + Ca * inner);
        out.insert(out.end(), bb, bb + Cb * inner);
    }
    return detail::make_result<T>(std::move(shape), std::move(out), "concat_channels", {a, b},
                                  [N, Ca, Cb, inner](detail::Node<T>& node) {
                                      auto& an = *node.inputs[0];
                                      auto& bn = *node.inputs[1];
                                      const std::size_t row = (Ca + Cb) * inner;
                                      if (an.requires_grad) {
                                          auto& g = an.grad_buffer();
                                          for (std::size_t n = 0; n < N; ++n)
                                              for (std::size_t i = 0; i < Ca * inner; ++i)
                                                  g[n * Ca * inner + i] += node.grad[n * row + i];
                                      }
                                      if (bn.requires_grad) {
                                          auto& g = bn.grad_buffer();
                                          for (std::size_t n = 0; n < N; ++n)
                                              for (std::size_t i = 0; i < Cb * inner; ++i)
                                                  g[n * Cb * inner + i] += node.grad[n * row + Ca * inner + i];
                                      }
                                  });
}

/// Channels [begin, end) of x[N,C,...].
template <std::floating_point T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    if (x.rank() < 2 || begin > end || end > x.dim(1))
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1);
    const std::size_t inner = shape_numel(Shape(x.shape().begin() + 2, x.shape().end()));
    Shape shape = x.shape();
    shape[1] = end - begin;
    std::vector<T> out;
    out.reserve(shape_numel(shape));
    for (std::size_t n = 0; n < N; ++n) {
        auto first = x.data().begin() + (n * C + begin) * inner;
        out.insert(out.end(), first, first + (end - begin) * inner);
    }
    return detail::make_result<T>(std::move(shape), std::move(out), "slice_channels", {x},
                                  [N, C, begin, end, inner](detail::Node<T>& node) {
                                      auto& src = *node.inputs[0];
                                      if (!src.requires_grad) return;
                                      auto& g = src.grad_buffer();
                                      const std::size_t width = (end - begin) * inner;
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t i = 0; i < width; ++i)
                                              g[(n * C + begin) * inner + i] += node.grad[n * width + i];
                                  });
}

/// Rows `indices` of x along axis 0.
template <std::floating_point T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices) {
    if (x.rank() < 1) throw ShapeError("gather_rows: scalar input");
    const std::size_t row = x.numel() / std::max<std::size_t>(1, x.dim(0));
    Shape shape = x.shape();
    shape[0] = indices.size();
    std::vector<T> out;
    out.reserve(indices.size() * row);
    for (std::size_t idx : indices) {
        if (idx >= x.dim(0)) throw ShapeError("gather_rows: index out of range");
        auto first = x.data().begin() + idx * row;
        out.insert(out.end(), first, first + row);
    }
    return Tensor<T>(std::move(shape), std::move(out));
}

/// Reinterprets the buffer under a new shape of equal element count.
template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<T> out(x.data().begin(), x.data().end());
    return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {x},
                                  [](detail::Node<T>& node) {
                                      if (node.inputs[0]->requires_grad) node.inputs[0]->accumulate(node.grad);
                                  });
}

/**
 * Training-mode batch normalization over every axis except 1.
 *
 * Returns the normalized, scaled and shifted tensor; the per-channel batch
 * mean and biased variance are written to the out parameters.
 */
template <std::floating_point T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           T epsilon, std::vector<T>& batch_mean, std::vector<T>& batch_var) {
    if (x.rank() < 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1))
        throw ShapeError("batch_norm: parameters " + shape_str(gamma.shape()) +
                         " do not match input " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), inner = x.numel() / (N * C);
    const std::size_t M = N * inner;
    if (N < 2) throw ShapeError("batch_norm: training mode needs a batch of at least 2");
    auto X = x.data();
    batch_mean.assign(C, T(0));
    batch_var.assign(C, T(0));
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) batch_mean[c] += X[(n * C + c) * inner + i];
    for (auto& m : batch_mean) m /= static_cast<T>(M);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) {
                const T d = X[(n * C + c) * inner + i] - batch_mean[c];
                batch_var[c] += d * d;
            }
    for (auto& v : batch_var) v /= static_cast<T>(M);

    std::vector<T> inv_std(C), xhat(x.numel()), out(x.numel());
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(batch_var[c] + epsilon);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t k = (n * C + c) * inner + i;
                xhat[k] = (X[k] - batch_mean[c]) * inv_std[c];
                out[k] = gamma[c] * xhat[k] + beta[c];
            }
    return detail::make_result<T>(
        x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
        [N, C, inner, M, inv_std = std::move(inv_std), xhat = std::move(xhat)](detail::Node<T>& node) {
            auto& xn = *node.inputs[0];
            auto& gn = *node.inputs[1];
            auto& bn = *node.inputs[2];
            const auto& dY = node.grad;
            std::vector<T> sum_dy(C, T(0)), sum_dy_xhat(C, T(0));
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < inner; ++i) {
                        const std::size_t k = (n * C + c) * inner + i;
                        sum_dy[c] += dY[k];
                        sum_dy_xhat[c] += dY[k] * xhat[k];
                    }
            if (gn.requires_grad) {
                auto& g = gn.grad_buffer();
                for (std::size_t c = 0; c < C; ++c) g[c] += sum_dy_xhat[c];
            }
            if (bn.requires_grad) {
                auto& g = bn.grad_buffer();
                for (std::size_t c = 0; c < C; ++c) g[c] += sum_dy[c];
            }
            if (xn.requires_grad) {
                auto& g = xn.grad_buffer();
                const T m = static_cast<T>(M);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const T coeff = gn.data[c] * inv_std[c] / m;
                        for (std::size_t i = 0; i < inner; ++i) {
                            const std::size_t k = (n * C + c) * inner + i;
                            g[k] += coeff * (m * dY[k] - sum_dy[c] - xhat[k] * sum_dy_xhat[c]);
                        }
                    }
            }
        });
}

/// Inference-mode batch normalization with fixed statistics (an affine map).
template <std::floating_point T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           std::span<const T> mean, std::span<const T> var, T epsilon) {
    if (x.rank() < 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1) ||
        mean.size() != x.dim(1) || var.size() != x.dim(1))
        throw ShapeError("batch_norm: parameters " + shape_str(gamma.shape()) +
                         " do not match input " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), inner = N ? x.numel() / (N * C) : 0;
    std::vector<T> inv_std(C), out(x.numel());
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + epsilon);
    std::vector<T> mu(mean.begin(), mean.end());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t k = (n * C + c) * inner + i;
                out[k] = gamma[c] * (x[k] - mu[c]) * inv_std[c] + beta[c];
            }
    return detail::make_result<T>(
        x.shape(), std::move(out), "batch_norm_infer", {x, gamma, beta},
        [N, C, inner, inv_std = std::move(inv_std), mu = std::move(mu)](detail::Node<T>& node) {
            auto& xn = *node.inputs[0];
            auto& gn = *node.inputs[1];
            auto& bn = *node.inputs[2];
            auto gx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
            auto gg = gn.requires_grad ? &gn.grad_buffer() : nullptr;
            auto gb = bn.requires_grad ? &bn.grad_buffer() : nullptr;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < inner; ++i) {
                        const std::size_t k = (n * C + c) * inner + i;
                        const T dy = node.grad[k];
                        if (gx) (*gx)[k] += dy * gn.data[c] * inv_std[c];
                        if (gg) (*gg)[c] += dy * (xn.data[k] - mu[c]) * inv_std[c];
                        if (gb) (*gb)[c] += dy;
                    }
        });
}

/// Probability clip applied before the logarithms of the cross-entropy.
inline constexpr double kBceClip = 1e-7;

/**
 * Mean binary cross-entropy of probabilities p[N] against labels y[N].
 * Clipped entries pass no gradient.
 */
template <std::floating_point T>
Tensor<T> bce_loss(const Tensor<T>& labels, const Tensor<T>& probs) {
    detail::require_same_shape(labels, probs, "bce_loss");
    const std::size_t n = probs.numel();
    if (n == 0) throw ShapeError("bce_loss: empty batch");
    const T lo = static_cast<T>(kBceClip), hi = T(1) - static_cast<T>(kBceClip);
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T p = std::clamp(probs[i], lo, hi);
        const T y = labels[i];
        total -= y * std::log(p) + (T(1) - y) * std::log(T(1) - p);
    }
    return detail::make_result<T>(Shape{}, {total / static_cast<T>(n)}, "bce_loss", {labels, probs},
                                  [n, lo, hi](detail::Node<T>& node) {
                                      auto& yn = *node.inputs[0];
                                      auto& pn = *node.inputs[1];
                                      if (!pn.requires_grad) return;
                                      auto& g = pn.grad_buffer();
                                      const T scale = node.grad[0] / static_cast<T>(n);
                                      for (std::size_t i = 0; i < n; ++i) {
                                          const T p = pn.data[i];
                                          if (p < lo || p > hi) continue;
                                          const T y = yn.data[i];
                                          g[i] += scale * (-y / p + (T(1) - y) / (T(1) - p));
                                      }
                                  });
}

}  // namespace sefusion
