#pragma once

#include <bit>
#include <cmath>
#include <functional>
#include <vector>

#include "sefusion/tensor.hpp"

namespace sefusion {

class NonDeterministicFunction : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Compares reverse-mode gradients of a scalar function against central
 * differences, perturbing the given leaf tensors in place.
 *
 * Returns max over all coordinates of |analytic - numeric| / max(1, |numeric|).
 * `f` must be deterministic: it is probed twice up front and any bitwise
 * difference raises NonDeterministicFunction.
 */
inline double gradient_check(const std::function<Tensor<double>()>& f,
                             std::vector<Tensor<double>> params, double eps = 1e-6) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("gradient_check: eps outside [1e-6, 1e-3]");
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    const Tensor<double> loss = f();
    const double probe = f().item();
    if (std::bit_cast<std::uint64_t>(probe) != std::bit_cast<std::uint64_t>(loss.item()))
        throw NonDeterministicFunction("gradient_check: function is not deterministic between probe calls");
    loss.backward();

    double worst = 0.0;
    for (auto& p : params) {
        std::vector<double> analytic(p.numel(), 0.0);
        if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double up, down;
            {
                NoGradGuard guard;
                values[i] = saved + eps;
                up = f().item();
                values[i] = saved - eps;
                down = f().item();
            }
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
        }
        p.zero_grad();
    }
    return worst;
}

/// Single-tensor form: checks d f(t) / d t.
inline double finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                Tensor<double> t, double eps = 1e-6) {
    Tensor<double> leaf = t.detach();
    return gradient_check([&] { return f(leaf); }, {leaf}, eps);
}

}  // namespace sefusion
