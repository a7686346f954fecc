#pragma once

#include <ostream>

#include "sefusion/gradcheck.hpp"
#include "sefusion/model.hpp"

namespace sefusion {

/// One named finite-difference probe; run() returns the max relative error.
struct GradCase {
    std::string name;
    double tolerance = 1e-4;
    std::function<double()> run;
};

inline constexpr double kPrimitiveTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

namespace detail {

/// Values in [lo, hi] with a random sign, so ReLU inputs stay off the kink.
inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = 0.1, double hi = 1.0) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution neg(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = neg(rng) ? -mag(rng) : mag(rng);
    return Tensor<double>(shape, std::move(v));
}

inline Tensor<double> positive_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor<double>(shape, std::move(v));
}

/// sum(w * y) with fixed random w, so every output coordinate gets a distinct weight.
inline Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, random_tensor(y.shape(), rng)));
}

}  // namespace detail

/// Small fusion model used for the end-to-end gradient probe (8x8 input, tiny branches).
inline FusionModelConfig gradcheck_model_config() {
    FusionModelConfig cfg;
    cfg.branch_a = {"a", BlockStyle::post_activation, {{4, 3, 2, true, false}, {4, 3, 1, true, false}}, 4, 2};
    cfg.branch_b = {"b", BlockStyle::pre_activation, {{4, 3, 2, true, false}, {4, 3, 1, true, true}}, 4, 2};
    cfg.se_ratio = 16;  // falls back to r = C
    cfg.dense1_units = 6;
    cfg.dense2_units = 4;
    cfg.dense1_dropout = 0.0;
    cfg.dense2_dropout = 0.0;
    cfg.input_height = 8;
    cfg.input_width = 8;
    cfg.seed = 7;
    return cfg;
}

/// Every differentiable primitive, the SE block, and the full model path.
inline std::vector<GradCase> default_grad_cases() {
    using detail::positive_tensor;
    using detail::random_tensor;
    using detail::weighted_sum;
    using T = Tensor<double>;
    std::vector<GradCase> cases;
    auto add_case = [&](std::string name, std::function<double()> fn, double tol = kPrimitiveTolerance) {
        cases.push_back({std::move(name), tol, std::move(fn)});
    };

    add_case("sigmoid", [] {
        std::mt19937_64 rng(1);
        return finite_diff_check([](const T& x) { return weighted_sum(sigmoid(x), 11); }, random_tensor({3, 4}, rng, 0.0, 3.0));
    });
    add_case("relu", [] {
        std::mt19937_64 rng(2);
        return finite_diff_check([](const T& x) { return weighted_sum(relu(x), 12); }, random_tensor({3, 4}, rng));
    });
    add_case("scale", [] {
        std::mt19937_64 rng(3);
        return finite_diff_check([](const T& x) { return weighted_sum(scale(x, 0.37), 13); }, random_tensor({5}, rng));
    });
    add_case("add", [] {
        std::mt19937_64 rng(4);
        T a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
        return gradient_check([&] { return weighted_sum(add(a, b), 14); }, {a, b});
    });
    add_case("mul", [] {
        std::mt19937_64 rng(5);
        T a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
        return gradient_check([&] { return weighted_sum(mul(a, b), 15); }, {a, b});
    });
    add_case("sum", [] {
        std::mt19937_64 rng(6);
        return finite_diff_check([](const T& x) { return sum(x); }, random_tensor({4, 2}, rng));
    });
    add_case("mean", [] {
        std::mt19937_64 rng(7);
        return finite_diff_check([](const T& x) { return scale(mean(x), 3.0); }, random_tensor({4, 2}, rng));
    });
    add_case("matmul", [] {
        std::mt19937_64 rng(8);
        T a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
        return gradient_check([&] { return weighted_sum(matmul(a, b), 16); }, {a, b});
    });
    add_case("add_bias", [] {
        std::mt19937_64 rng(9);
        T x = random_tensor({2, 3, 2, 2}, rng), b = random_tensor({3}, rng);
        return gradient_check([&] { return weighted_sum(add_bias(x, b), 17); }, {x, b});
    });
    add_case("conv2d", [] {
        std::mt19937_64 rng(10);
        T x = random_tensor({2, 2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng);
        return gradient_check([&] { return weighted_sum(conv2d(x, k, 2, 1), 18); }, {x, k});
    });
    add_case("global_avg_pool", [] {
        std::mt19937_64 rng(11);
        return finite_diff_check([](const T& x) { return weighted_sum(global_avg_pool(x), 19); },
                                 random_tensor({2, 3, 3, 2}, rng));
    });
    add_case("elementwise_mul_broadcast", [] {
        std::mt19937_64 rng(12);
        T x = random_tensor({2, 3, 2, 2}, rng), e = random_tensor({2, 3}, rng);
        return gradient_check([&] { return weighted_sum(elementwise_mul_broadcast(x, e), 20); }, {x, e});
    });
    add_case("concat_channels", [] {
        std::mt19937_64 rng(13);
        T a = random_tensor({2, 2, 2, 2}, rng), b = random_tensor({2, 3, 2, 2}, rng);
        return gradient_check([&] { return weighted_sum(concat_channels(a, b), 21); }, {a, b});
    });
    add_case("slice_channels", [] {
        std::mt19937_64 rng(14);
        return finite_diff_check([](const T& x) { return weighted_sum(slice_channels(x, 1, 3), 22); },
                                 random_tensor({2, 4, 2, 2}, rng));
    });
    add_case("reshape", [] {
        std::mt19937_64 rng(15);
        return finite_diff_check([](const T& x) { return weighted_sum(reshape(x, {3, 4}), 23); },
                                 random_tensor({2, 3, 2}, rng));
    });
    add_case("batch_norm_train", [] {
        std::mt19937_64 rng(16);
        T x = random_tensor({4, 3, 2, 2}, rng), g = random_tensor({3}, rng, 0.5, 1.5), b = random_tensor({3}, rng);
        return gradient_check(
            [&] {
                std::vector<double> m, v;
                return weighted_sum(batch_norm_train(x, g, b, 1e-5, m, v), 24);
            },
            {x, g, b});
    });
    add_case("batch_norm_infer", [] {
        std::mt19937_64 rng(17);
        T x = random_tensor({3, 3}, rng), g = random_tensor({3}, rng), b = random_tensor({3}, rng);
        const std::vector<double> m{0.1, -0.2, 0.3}, v{0.5, 1.5, 2.0};
        return gradient_check([&] { return weighted_sum(batch_norm_infer<double>(x, g, b, m, v, 1e-5), 25); },
                              {x, g, b});
    });
    add_case("dropout", [] {
        std::mt19937_64 rng(18);
        return finite_diff_check(
            [](const T& x) {
                std::mt19937_64 mask_rng(99);  // same mask on every call
                return weighted_sum(dropout_forward({0.3, Mode::training}, x, mask_rng), 26);
            },
            random_tensor({4, 5}, rng));
    });
    add_case("bce_loss", [] {
        std::mt19937_64 rng(19);
        const T labels({6}, {1, 0, 1, 1, 0, 0});
        return finite_diff_check([&](const T& p) { return bce_loss(labels, p); }, positive_tensor({6}, rng, 0.1, 0.9));
    });
    add_case("se_block", [] {
        std::mt19937_64 rng(20);
        auto se = SEBlockParams<double>::init(8, 4, rng);
        T x = random_tensor({2, 8, 3, 3}, rng);
        return gradient_check([&] { return weighted_sum(se_block_forward(se, x), 27); }, {x, se.w1, se.w2});
    });
    add_case(
        "fusion_model",
        [] {
            auto model = build_model<double>(gradcheck_model_config());
            model.set_all_trainable(true);
            std::mt19937_64 rng(21);
            T batch = positive_tensor({3, 3, 8, 8}, rng, 0.0, 1.0);
            const T labels({3}, {1, 0, 1});
            auto params = model.trainable_parameters();
            params.push_back(batch);
            return gradient_check([&] { return bce_loss(labels, model.forward(batch, Mode::training)); }, params);
        },
        kModelTolerance);
    return cases;
}

struct GradResult {
    std::string name;
    double error = 0;
    double tolerance = 0;
    bool passed = false;
};

/// Runs every case once, printing "<op> <max_rel_err> PASS|FAIL" lines.
inline std::vector<GradResult> run_grad_cases(const std::vector<GradCase>& cases, std::ostream& out) {
    std::vector<GradResult> results;
    for (const auto& c : cases) {
        GradResult r{c.name, 0, c.tolerance, false};
        try {
            r.error = c.run();
            r.passed = std::isfinite(r.error) && r.error < c.tolerance;
        } catch (const std::exception& e) {
            out << c.name << " raised: " << e.what() << "\n";
            r.error = std::numeric_limits<double>::infinity();
        }
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-26s max_rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), r.error, c.tolerance,
                      r.passed ? "PASS" : "FAIL");
        out << buf;
        results.push_back(r);
    }
    return results;
}

}  // namespace sefusion
