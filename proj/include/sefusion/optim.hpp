#pragma once

#include <cmath>

#include "sefusion/tensor.hpp"

namespace sefusion {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class MissingGradientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Adam with bias correction over a fixed parameter list. Parameters whose
 * requires_grad flag is off are frozen and never touched.
 */
template <std::floating_point T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
        for (auto& p : params_) {
            first_.emplace_back(p.numel(), 0.0);
            second_.emplace_back(p.numel(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            if (!p.requires_grad()) continue;
            if (!p.has_grad())
                throw MissingGradientError("adam: trainable parameter #" + std::to_string(k) + " has no gradient");
            auto values = p.mutable_data();
            auto grad = p.grad();
            auto& m = first_[k];
            auto& v = second_[k];
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i];
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
                const double mhat = m[i] / c1, vhat = v[i] / c2;
                values[i] = static_cast<T>(values[i] - opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    long step_count() const { return t_; }
    const AdamOptions& options() const { return opts_; }
    std::span<const double> first_moment(std::size_t k) const { return first_.at(k); }
    std::span<const double> second_moment(std::size_t k) const { return second_.at(k); }

private:
    std::vector<Tensor<T>> params_;
    AdamOptions opts_;
    std::vector<std::vector<double>> first_, second_;
    long t_ = 0;
};

}  // namespace sefusion
