#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sefusion/layers.hpp"

namespace sefusion {

/// post_activation: conv -> BN -> ReLU. pre_activation: BN -> ReLU -> conv (+ skip).
enum class BlockStyle { post_activation, pre_activation };

struct StageSpec {
    std::size_t filters = 8;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    bool batchnorm = true;
    bool residual = false;
};

struct BackboneConfig {
    std::string name;
    BlockStyle style = BlockStyle::post_activation;
    std::vector<StageSpec> stages;
    std::size_t output_channels = 0;
    std::size_t trainable_tail_layers = 3;
};

enum class BranchId { a, b };

struct FusionModelConfig {
    BackboneConfig branch_a;
    BackboneConfig branch_b;
    std::size_t se_ratio = 16;
    std::size_t dense1_units = 256;
    double dense1_dropout = 0.2;
    std::size_t dense2_units = 128;
    double dense2_dropout = 0.1;
    std::size_t input_height = 224;
    std::size_t input_width = 224;
    std::uint64_t seed = 0;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Progressively widened post-activation stages (EfficientNet stand-in).
inline BackboneConfig efficientnet_desk() {
    return {"efficientnet-desk",
            BlockStyle::post_activation,
            {{8, 3, 2, true, false}, {16, 3, 1, true, false}, {16, 3, 2, true, false}, {32, 3, 1, true, false}},
            32,
            3};
}

/// Pre-activation stages with identity skips (ResNetV2 stand-in).
inline BackboneConfig resnet_desk() {
    return {"resnet-desk",
            BlockStyle::pre_activation,
            {{16, 3, 2, true, false}, {16, 3, 1, true, true}, {32, 3, 2, true, false}, {32, 3, 1, true, true}},
            32,
            3};
}

inline FusionModelConfig default_model_config() {
    FusionModelConfig cfg;
    cfg.branch_a = efficientnet_desk();
    cfg.branch_b = resnet_desk();
    return cfg;
}

/// Spatial extent (H, W) a backbone produces from an input of (H, W).
inline std::pair<std::size_t, std::size_t> backbone_output_extent(const BackboneConfig& b, std::size_t h,
                                                                  std::size_t w) {
    for (const auto& s : b.stages) {
        const std::size_t pad = s.kernel / 2;
        if (h + 2 * pad < s.kernel || w + 2 * pad < s.kernel || s.stride == 0)
            throw ConfigError("backbone " + b.name + ": input too small for its stages");
        h = conv_output_extent(h, s.kernel, s.stride, pad);
        w = conv_output_extent(w, s.kernel, s.stride, pad);
    }
    return {h, w};
}

inline void validate_backbone(const BackboneConfig& b) {
    if (b.stages.empty()) throw ConfigError("backbone " + b.name + " has no stages");
    if (b.output_channels != b.stages.back().filters)
        throw ConfigError("backbone " + b.name + ": output_channels " + std::to_string(b.output_channels) +
                          " differs from last stage filters " + std::to_string(b.stages.back().filters));
    if (b.trainable_tail_layers > b.stages.size())
        throw ConfigError("backbone " + b.name + ": trainable_tail_layers exceeds its " +
                          std::to_string(b.stages.size()) + " parameterized layers");
    std::size_t channels = 3;
    for (std::size_t i = 0; i < b.stages.size(); ++i) {
        const auto& s = b.stages[i];
        if (s.filters == 0 || s.kernel == 0 || s.stride == 0)
            throw ConfigError("backbone " + b.name + ": stage " + std::to_string(i) + " has a zero extent");
        if (s.residual && (s.stride != 1 || s.filters != channels))
            throw ConfigError("backbone " + b.name + ": residual stage " + std::to_string(i) +
                              " must keep stride 1 and channel count");
        channels = s.filters;
    }
}

template <std::floating_point T>
struct ConvStage {
    StageSpec spec;
    Tensor<T> kernel;  // [F, C, K, K]
    Tensor<T> bias;    // [F]
    std::optional<BatchNormParams<T>> bn;
};

template <std::floating_point T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
    bool is_parameter;  // false for running statistics
};

/**
 * Two-branch fusion classifier:
 *   branch A -> SE, branch B -> SE, concat, GAP,
 *   dense -> ReLU -> BN -> dropout (twice), dense(1) -> sigmoid.
 *
 * Parameters are shared handles; copying the model would alias them, so
 * it is move-only.
 */
template <std::floating_point T>
class FusionModel {
public:
    explicit FusionModel(const FusionModelConfig& cfg) : cfg_(cfg), dropout_rng_() {
        validate_backbone(cfg.branch_a);
        validate_backbone(cfg.branch_b);
        const auto ea = backbone_output_extent(cfg.branch_a, cfg.input_height, cfg.input_width);
        const auto eb = backbone_output_extent(cfg.branch_b, cfg.input_height, cfg.input_width);
        if (ea != eb)
            throw ConfigError("branch output spatial shapes differ: " + std::to_string(ea.first) + "x" +
                              std::to_string(ea.second) + " vs " + std::to_string(eb.first) + "x" +
                              std::to_string(eb.second));
        if (cfg.dense1_units == 0 || cfg.dense2_units == 0) throw ConfigError("dense units must be positive");
        for (double r : {cfg.dense1_dropout, cfg.dense2_dropout})
            if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");

        std::mt19937_64 rng(cfg.seed);
        branch_a_ = make_branch(cfg.branch_a, rng);
        branch_b_ = make_branch(cfg.branch_b, rng);
        try {
            se_a_ = SEBlockParams<T>::init(cfg.branch_a.output_channels, cfg.se_ratio, rng);
            se_b_ = SEBlockParams<T>::init(cfg.branch_b.output_channels, cfg.se_ratio, rng);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        const std::size_t fused = cfg.branch_a.output_channels + cfg.branch_b.output_channels;
        dense1_ = DenseParams<T>::init(fused, cfg.dense1_units, rng);
        bn1_ = BatchNormParams<T>::init(cfg.dense1_units);
        dense2_ = DenseParams<T>::init(cfg.dense1_units, cfg.dense2_units, rng);
        bn2_ = BatchNormParams<T>::init(cfg.dense2_units);
        head_ = DenseParams<T>::init(cfg.dense2_units, 1, rng);
        std::seed_seq dropout_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                                   0x5eedu};
        dropout_rng_.seed(dropout_seed);

        for (auto& nt : named_tensors()) nt.tensor.set_requires_grad(nt.is_parameter);
        set_trainable_tail(BranchId::a, cfg.branch_a.trainable_tail_layers);
        set_trainable_tail(BranchId::b, cfg.branch_b.trainable_tail_layers);
    }

    FusionModel(FusionModel&&) noexcept = default;
    FusionModel& operator=(FusionModel&&) noexcept = default;
    FusionModel(const FusionModel&) = delete;
    FusionModel& operator=(const FusionModel&) = delete;

    const FusionModelConfig& config() const { return cfg_; }

    std::size_t fused_channels() const { return cfg_.branch_a.output_channels + cfg_.branch_b.output_channels; }
    std::size_t layer_count(BranchId id) const { return branch(id).size(); }

    /// Makes exactly the last n parameterized layers of a branch trainable.
    void set_trainable_tail(BranchId id, std::size_t n) {
        auto& stages = branch(id);
        if (n > stages.size())
            throw std::out_of_range("set_trainable_tail: " + std::to_string(n) + " exceeds " +
                                    std::to_string(stages.size()) + " parameterized layers");
        for (std::size_t i = 0; i < stages.size(); ++i) set_stage_trainable(stages[i], i + n >= stages.size());
        (id == BranchId::a ? cfg_.branch_a : cfg_.branch_b).trainable_tail_layers = n;
    }

    /// Flags every parameter (both branches, SE, dense blocks, head).
    void set_all_trainable(bool on) {
        for (auto& nt : named_tensors())
            if (nt.is_parameter) nt.tensor.set_requires_grad(on);
    }

    bool stage_trainable(BranchId id, std::size_t index) const {
        return branch(id).at(index).kernel.requires_grad();
    }

    /// Per-sample probabilities [N] for images [N, 3, H, W].
    Tensor<T> forward(const Tensor<T>& batch, Mode mode) {
        if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != cfg_.input_height ||
            batch.dim(3) != cfg_.input_width)
            throw ShapeError("forward: batch " + shape_str(batch.shape()) + " does not match input [N,3," +
                             std::to_string(cfg_.input_height) + "," + std::to_string(cfg_.input_width) + "]");
        const std::size_t n = batch.dim(0);
        Tensor<T> fa = se_block_forward(se_a_, run_branch(branch_a_, cfg_.branch_a.style, batch, mode));
        Tensor<T> fb = se_block_forward(se_b_, run_branch(branch_b_, cfg_.branch_b.style, batch, mode));
        Tensor<T> v = global_avg_pool(concat_channels(fa, fb));
        v = dense_block(dense1_, bn1_, cfg_.dense1_dropout, v, mode);
        v = dense_block(dense2_, bn2_, cfg_.dense2_dropout, v, mode);
        return sigmoid(reshape(dense_forward(head_, v), Shape{n}));
    }

    /// Ordered list of every persistent tensor with a stable name.
    std::vector<NamedTensor<T>> named_tensors() const {
        std::vector<NamedTensor<T>> out;
        auto add_bn = [&](const std::string& prefix, const BatchNormParams<T>& bn) {
            out.push_back({prefix + ".gamma", bn.gamma, true});
            out.push_back({prefix + ".beta", bn.beta, true});
            out.push_back({prefix + ".running_mean", bn.running_mean, false});
            out.push_back({prefix + ".running_var", bn.running_var, false});
        };
        auto add_branch = [&](const std::string& prefix, const std::vector<ConvStage<T>>& stages) {
            for (std::size_t i = 0; i < stages.size(); ++i) {
                const std::string p = prefix + ".stage" + std::to_string(i);
                out.push_back({p + ".conv.kernel", stages[i].kernel, true});
                out.push_back({p + ".conv.bias", stages[i].bias, true});
                if (stages[i].bn) add_bn(p + ".bn", *stages[i].bn);
            }
        };
        add_branch("branch_a", branch_a_);
        add_branch("branch_b", branch_b_);
        out.push_back({"se_a.w1", se_a_.w1, true});
        out.push_back({"se_a.w2", se_a_.w2, true});
        out.push_back({"se_b.w1", se_b_.w1, true});
        out.push_back({"se_b.w2", se_b_.w2, true});
        out.push_back({"dense1.weights", dense1_.weights, true});
        out.push_back({"dense1.bias", dense1_.bias, true});
        add_bn("dense1.bn", bn1_);
        out.push_back({"dense2.weights", dense2_.weights, true});
        out.push_back({"dense2.bias", dense2_.bias, true});
        add_bn("dense2.bn", bn2_);
        out.push_back({"head.weights", head_.weights, true});
        out.push_back({"head.bias", head_.bias, true});
        return out;
    }

    std::vector<Tensor<T>> trainable_parameters() const {
        std::vector<Tensor<T>> out;
        for (auto& nt : named_tensors())
            if (nt.is_parameter && nt.tensor.requires_grad()) out.push_back(nt.tensor);
        return out;
    }

    std::size_t parameter_count(bool trainable_only = false) const {
        std::size_t total = 0;
        for (auto& nt : named_tensors())
            if (nt.is_parameter && (!trainable_only || nt.tensor.requires_grad())) total += nt.tensor.numel();
        return total;
    }

    void zero_grad() {
        for (auto& nt : named_tensors()) nt.tensor.zero_grad();
    }

    const SEBlockParams<T>& se_block(BranchId id) const { return id == BranchId::a ? se_a_ : se_b_; }

private:
    std::vector<ConvStage<T>> make_branch(const BackboneConfig& b, std::mt19937_64& rng) {
        std::vector<ConvStage<T>> stages;
        std::size_t channels = 3;
        for (const auto& s : b.stages) {
            ConvStage<T> st;
            st.spec = s;
            st.kernel = uniform_init<T>({s.filters, channels, s.kernel, s.kernel}, channels * s.kernel * s.kernel, rng);
            st.bias = Tensor<T>::zeros({s.filters});
            if (s.batchnorm)
                st.bn = BatchNormParams<T>::init(b.style == BlockStyle::pre_activation ? channels : s.filters);
            stages.push_back(std::move(st));
            channels = s.filters;
        }
        return stages;
    }

    static void set_stage_trainable(ConvStage<T>& st, bool on) {
        st.kernel.set_requires_grad(on);
        st.bias.set_requires_grad(on);
        if (st.bn) {
            st.bn->gamma.set_requires_grad(on);
            st.bn->beta.set_requires_grad(on);
        }
    }

    // Frozen batch norm always runs on its running statistics.
    static Tensor<T> stage_bn(BatchNormParams<T>& bn, const Tensor<T>& x, Mode mode) {
        return batchnorm_forward(bn, x, bn.gamma.requires_grad() ? mode : Mode::inference);
    }

    static Tensor<T> run_branch(std::vector<ConvStage<T>>& stages, BlockStyle style, Tensor<T> x, Mode mode) {
        for (auto& st : stages) {
            const std::size_t pad = st.spec.kernel / 2;
            if (style == BlockStyle::post_activation) {
                Tensor<T> y = add_bias(conv2d(x, st.kernel, st.spec.stride, pad), st.bias);
                if (st.bn) y = stage_bn(*st.bn, y, mode);
                y = relu(y);
                x = st.spec.residual ? add(y, x) : y;
            } else {
                Tensor<T> y = st.bn ? stage_bn(*st.bn, x, mode) : x;
                y = add_bias(conv2d(relu(y), st.kernel, st.spec.stride, pad), st.bias);
                x = st.spec.residual ? add(y, x) : y;
            }
        }
        return x;
    }

    Tensor<T> dense_block(const DenseParams<T>& dense, BatchNormParams<T>& bn, double rate, const Tensor<T>& x,
                          Mode mode) {
        Tensor<T> y = relu(dense_forward(dense, x));
        y = batchnorm_forward(bn, y, bn.gamma.requires_grad() ? mode : Mode::inference);
        return dropout_forward(DropoutSpec{rate, mode}, y, dropout_rng_);
    }

    std::vector<ConvStage<T>>& branch(BranchId id) { return id == BranchId::a ? branch_a_ : branch_b_; }
    const std::vector<ConvStage<T>>& branch(BranchId id) const { return id == BranchId::a ? branch_a_ : branch_b_; }

    FusionModelConfig cfg_;
    std::vector<ConvStage<T>> branch_a_, branch_b_;
    SEBlockParams<T> se_a_, se_b_;
    DenseParams<T> dense1_, dense2_, head_;
    BatchNormParams<T> bn1_, bn2_;
    std::mt19937_64 dropout_rng_;
};

template <std::floating_point T = float>
FusionModel<T> build_model(const FusionModelConfig& cfg) {
    return FusionModel<T>(cfg);
}

/// Decision rule: label 1 (Monkeypox) iff probability >= threshold.
inline constexpr double kDecisionThreshold = 0.5;

template <std::floating_point T>
int label_for(T probability) {
    return probability >= static_cast<T>(kDecisionThreshold) ? 1 : 0;
}

template <std::floating_point T>
std::vector<int> predict(FusionModel<T>& model, const Tensor<T>& batch) {
    NoGradGuard guard;
    const Tensor<T> probs = model.forward(batch, Mode::inference);
    std::vector<int> labels(probs.numel());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = label_for(probs[i]);
    return labels;
}

}  // namespace sefusion
