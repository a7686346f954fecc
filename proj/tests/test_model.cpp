#include <gtest/gtest.h>

#include <bit>
#include <filesystem>

#include "sefusion/checkpoint.hpp"
#include "sefusion/gradcheck.hpp"
#include "sefusion/optim.hpp"

using namespace sefusion;
namespace fs = std::filesystem;

namespace {

FusionModelConfig tiny_config(std::uint64_t seed = 3) {
    FusionModelConfig cfg;
    cfg.branch_a = {"a", BlockStyle::post_activation, {{8, 3, 2, true, false}, {8, 3, 1, true, false}}, 8, 2};
    cfg.branch_b = {"b", BlockStyle::pre_activation, {{8, 3, 2, true, false}, {8, 3, 1, true, true}}, 8, 2};
    cfg.dense1_units = 16;
    cfg.dense2_units = 8;
    cfg.input_height = cfg.input_width = 16;
    cfg.seed = seed;
    return cfg;
}

template <class T>
Tensor<T> random_batch(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<T> v(n * 3 * size * size);
    for (auto& x : v) x = static_cast<T>(u(rng));
    return Tensor<T>({n, 3, size, size}, std::move(v));
}

std::vector<std::uint32_t> bits(const Tensor<float>& t) {
    std::vector<std::uint32_t> out;
    for (float v : t.data()) out.push_back(std::bit_cast<std::uint32_t>(v));
    return out;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sefusion_model_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(BuildModel, DefaultConfigurationTopology) {
    FusionModelConfig cfg = default_model_config();
    EXPECT_EQ(cfg.dense1_units, 256u);
    EXPECT_DOUBLE_EQ(cfg.dense1_dropout, 0.2);
    EXPECT_EQ(cfg.dense2_units, 128u);
    EXPECT_DOUBLE_EQ(cfg.dense2_dropout, 0.1);
    EXPECT_EQ(cfg.input_height, 224u);
    cfg.input_height = cfg.input_width = 32;
    const auto m = build_model<float>(cfg);
    EXPECT_EQ(m.fused_channels(), cfg.branch_a.output_channels + cfg.branch_b.output_channels);

    // Order: branches, SE per branch, concat, dense block I, dense block II, sigmoid head.
    std::vector<std::string> order;
    for (const auto& nt : m.named_tensors())
        if (nt.name.find("stage") == std::string::npos) order.push_back(nt.name);
    const std::vector<std::string> want{"se_a.w1", "se_a.w2", "se_b.w1", "se_b.w2", "dense1.weights", "dense1.bias",
                                        "dense1.bn.gamma", "dense1.bn.beta", "dense1.bn.running_mean",
                                        "dense1.bn.running_var", "dense2.weights", "dense2.bias", "dense2.bn.gamma",
                                        "dense2.bn.beta", "dense2.bn.running_mean", "dense2.bn.running_var",
                                        "head.weights", "head.bias"};
    EXPECT_EQ(order, want);
    for (const auto& nt : m.named_tensors()) {
        if (nt.name == "dense1.weights") { EXPECT_EQ(nt.tensor.shape(), (Shape{m.fused_channels(), 256})); }
        if (nt.name == "dense2.weights") { EXPECT_EQ(nt.tensor.shape(), (Shape{256, 128})); }
        if (nt.name == "head.weights") { EXPECT_EQ(nt.tensor.shape(), (Shape{128, 1})); }
    }
}

TEST(BuildModel, TailZeroLeavesOnlyHeadBlocksTrainable) {
    auto cfg = tiny_config();
    cfg.branch_a.trainable_tail_layers = cfg.branch_b.trainable_tail_layers = 0;
    const auto m = build_model<float>(cfg);
    for (const auto& nt : m.named_tensors()) {
        if (!nt.is_parameter) {
            EXPECT_FALSE(nt.tensor.requires_grad()) << nt.name;
            continue;
        }
        const bool backbone = nt.name.rfind("branch_", 0) == 0;
        EXPECT_EQ(nt.tensor.requires_grad(), !backbone) << nt.name;
    }
}

TEST(BuildModel, SameSeedGivesBitIdenticalParameters) {
    const auto a = build_model<float>(tiny_config(9)), b = build_model<float>(tiny_config(9));
    const auto c = build_model<float>(tiny_config(10));
    const auto ta = a.named_tensors(), tb = b.named_tensors(), tc = c.named_tensors();
    bool any_diff = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        EXPECT_EQ(bits(ta[i].tensor), bits(tb[i].tensor)) << ta[i].name;
        any_diff |= bits(ta[i].tensor) != bits(tc[i].tensor);
    }
    EXPECT_TRUE(any_diff);
}

TEST(BuildModel, FloatAndDoubleInitAgreeUpToRounding) {
    const auto f = build_model<float>(tiny_config());
    const auto d = build_model<double>(tiny_config());
    const auto tf = f.named_tensors();
    const auto td = d.named_tensors();
    for (std::size_t i = 0; i < tf.size(); ++i)
        for (std::size_t k = 0; k < tf[i].tensor.numel(); ++k)
            ASSERT_EQ(tf[i].tensor[k], static_cast<float>(td[i].tensor[k]));
}

TEST(BuildModel, ConfigErrors) {
    auto bad_extent = tiny_config();
    bad_extent.branch_b.stages[1].stride = 2;
    bad_extent.branch_b.stages[1].residual = false;
    EXPECT_THROW(build_model<float>(bad_extent), ConfigError);
    auto bad_residual = tiny_config();
    bad_residual.branch_b.stages[1].filters = 4;
    bad_residual.branch_b.output_channels = 4;
    EXPECT_THROW(build_model<float>(bad_residual), ConfigError);
    auto bad_ratio = tiny_config();
    bad_ratio.se_ratio = 3;
    EXPECT_THROW(build_model<float>(bad_ratio), ConfigError);
    auto bad_dropout = tiny_config();
    bad_dropout.dense1_dropout = 1.0;
    EXPECT_THROW(build_model<float>(bad_dropout), ConfigError);
}

TEST(Forward, OneProbabilityPerSampleStrictlyInsideUnitInterval) {
    auto m = build_model<float>(tiny_config());
    for (std::size_t n : {1u, 2u, 5u}) {
        const auto p = m.forward(random_batch<float>(n, 16, n), Mode::inference);
        ASSERT_EQ(p.shape(), (Shape{n}));
        for (float v : p.data()) {
            EXPECT_GT(v, 0.0f);
            EXPECT_LT(v, 1.0f);
        }
    }
    const auto pt = m.forward(random_batch<float>(4, 16, 9), Mode::training);
    EXPECT_EQ(pt.shape(), (Shape{4}));
    EXPECT_THROW(m.forward(random_batch<float>(2, 8, 1), Mode::inference), ShapeError);
}

TEST(Forward, DuplicatedSampleGetsIdenticalProbability) {
    auto m = build_model<float>(tiny_config());
    const auto one = random_batch<float>(1, 16, 4);
    std::vector<float> twice(one.data().begin(), one.data().end());
    twice.insert(twice.end(), one.data().begin(), one.data().end());
    const auto p = m.forward(Tensor<float>({2, 3, 16, 16}, twice), Mode::inference);
    EXPECT_EQ(std::bit_cast<std::uint32_t>(p[0]), std::bit_cast<std::uint32_t>(p[1]));
}

TEST(Forward, TinyModelFullPathGradientCheck) {
    auto m = build_model<double>(tiny_config());
    m.set_all_trainable(true);
    const auto batch = random_batch<double>(3, 16, 5);
    const Tensor<double> labels({3}, {1, 0, 1});
    auto params = m.trainable_parameters();
    EXPECT_LT(gradient_check([&] { return bce_loss(labels, m.forward(batch, Mode::inference)); }, params), 1e-3);
}

TEST(Predict, ThresholdTiesGoPositive) {
    EXPECT_EQ(label_for(0.5f), 1);
    EXPECT_EQ(label_for(0.5), 1);
    EXPECT_EQ(label_for(0.49), 0);
    EXPECT_EQ(label_for(0.51), 1);
    EXPECT_EQ(label_for(std::nextafter(0.5, 0.0)), 0);
    auto m = build_model<float>(tiny_config());
    const auto batch = random_batch<float>(3, 16, 6);
    const auto labels = predict(m, batch);
    const auto probs = m.forward(batch, Mode::inference);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(labels[i], probs[i] >= 0.5f ? 1 : 0);
}

TEST(TrainableTail, SetsLastNStages) {
    auto cfg = tiny_config();
    cfg.branch_a.stages.push_back({8, 3, 1, true, false});
    cfg.branch_a.stages.push_back({8, 3, 1, false, false});
    auto m = build_model<float>(cfg);  // tail 2 from config
    EXPECT_EQ(m.layer_count(BranchId::a), 4u);
    m.set_trainable_tail(BranchId::a, 3);
    EXPECT_FALSE(m.stage_trainable(BranchId::a, 0));
    for (std::size_t i = 1; i < 4; ++i) EXPECT_TRUE(m.stage_trainable(BranchId::a, i));
    m.set_trainable_tail(BranchId::a, 0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_FALSE(m.stage_trainable(BranchId::a, i));
    EXPECT_THROW(m.set_trainable_tail(BranchId::a, 5), std::out_of_range);
    EXPECT_THROW(m.set_trainable_tail(BranchId::b, 3), std::out_of_range);
}

TEST(TrainableTail, FrozenParametersAreBitUnchangedByAdam) {
    auto cfg = tiny_config();
    cfg.branch_a.trainable_tail_layers = 1;
    cfg.branch_b.trainable_tail_layers = 0;
    auto m = build_model<float>(cfg);
    std::map<std::string, std::vector<std::uint32_t>> before;
    for (const auto& nt : m.named_tensors()) before[nt.name] = bits(nt.tensor);
    Adam<float> adam(m.trainable_parameters(), {1e-2});
    const Tensor<float> labels({4}, {1, 0, 1, 0});
    for (int step = 0; step < 5; ++step) {
        adam.zero_grad();
        bce_loss(labels, m.forward(random_batch<float>(4, 16, 100 + step), Mode::training)).backward();
        adam.step();
    }
    for (const auto& nt : m.named_tensors()) {
        const bool frozen_stage = nt.name.rfind("branch_b", 0) == 0 || nt.name.rfind("branch_a.stage0", 0) == 0;
        if (frozen_stage) { EXPECT_EQ(bits(nt.tensor), before[nt.name]) << nt.name; }
        if (nt.name == "branch_a.stage1.conv.kernel" || nt.name == "head.weights") {
            EXPECT_NE(bits(nt.tensor), before[nt.name]) << nt.name;
        }
    }
}

TEST(Checkpoint, ByteLayoutMatchesFormat) {
    const std::vector<CheckpointTensor> tensors{{"w", {2}, {1.0f, -2.0f}}};
    const auto bytes = encode_checkpoint(tensors);
    const std::vector<std::uint8_t> head{'S', 'E', 'F', 'N', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 'w', 1, 2, 0, 0, 0,
                                         0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
    ASSERT_EQ(bytes.size(), head.size() + 4);
    EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
    const std::uint32_t crc = bytes[28] | bytes[29] << 8 | bytes[30] << 16 | static_cast<std::uint32_t>(bytes[31]) << 24;
    EXPECT_EQ(crc, static_cast<std::uint32_t>(::crc32(0, head.data(), static_cast<uInt>(head.size()))));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdenticalAndForwardBitExact) {
    auto m = build_model<float>(tiny_config());
    // Move running stats away from their initial values first.
    m.forward(random_batch<float>(4, 16, 1), Mode::training);
    const auto p1 = temp_path("a.sefn"), p2 = temp_path("b.sefn");
    save_checkpoint(m, p1);
    auto loaded = load_checkpoint<float>(p1, tiny_config());
    save_checkpoint(loaded, p2);
    EXPECT_EQ(read_file_bytes(p1), read_file_bytes(p2));
    const auto batch = random_batch<float>(3, 16, 2);
    EXPECT_EQ(bits(m.forward(batch, Mode::inference)), bits(loaded.forward(batch, Mode::inference)));
}

TEST(Checkpoint, WrongDenseUnitsNamesTheTensor) {
    const auto p = temp_path("dense.sefn");
    save_checkpoint(build_model<float>(tiny_config()), p);
    auto cfg = tiny_config();
    cfg.dense1_units = 32;
    try {
        load_checkpoint<float>(p, cfg);
        FAIL() << "expected a shape error";
    } catch (const CheckpointShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("dense1.weights"), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, DistinctErrorsForVersionTruncationAndCorruption) {
    const auto good = encode_checkpoint(checkpoint_tensors(build_model<float>(tiny_config())));
    auto version = good;
    version[4] = 2;
    EXPECT_THROW(decode_checkpoint(version), CheckpointVersionError);
    for (std::size_t cut : {std::size_t{2}, std::size_t{10}, good.size() / 2, good.size() - 1})
        EXPECT_THROW(decode_checkpoint(std::span(good).first(cut)), CheckpointTruncatedError) << cut;
    auto flipped = good;
    flipped[good.size() / 2] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(flipped), CheckpointCorruptError);
    auto magic = good;
    magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(magic), CheckpointCorruptError);
    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(decode_checkpoint(trailing), CheckpointCorruptError);
    EXPECT_NO_THROW(decode_checkpoint(good));
}

TEST(Checkpoint, MissingFileIsAnError) {
    EXPECT_THROW(load_checkpoint<float>(temp_path("does_not_exist.sefn"), tiny_config()), std::runtime_error);
}
