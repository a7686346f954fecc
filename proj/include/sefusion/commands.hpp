#pragma once

#include <iostream>

#include "sefusion/checkpoint.hpp"
#include "sefusion/config.hpp"
#include "sefusion/gradcheck_suite.hpp"

namespace sefusion {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerification = 2;

/// Runs a command body, mapping any module error to exit code 1 with a diagnostic on `err`.
template <class Fn>
int run_command(Fn&& body, std::ostream& err) {
    try {
        return body();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

namespace detail {

inline TrainOptions train_options(const RunConfig& cfg) {
    TrainOptions o;
    o.epochs = cfg.epochs;
    o.batch_size = cfg.batch_size;
    o.adam.learning_rate = cfg.learning_rate;
    o.seed = cfg.seed;
    return o;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

struct LoadedData {
    DatasetIndex index;
    SplitPlan split;
    ImageSet images;  // row i is index.entries[i]
};

inline LoadedData load_run_data(const RunConfig& cfg) {
    if (cfg.dataset.empty()) throw ConfigError("no dataset configured (set dataset = PATH)");
    LoadedData d;
    d.index = load_dataset(cfg.dataset, cfg.positive_class);
    d.split = stratified_split(d.index, cfg.split, cfg.seed, cfg.group_mode);
    d.images = load_images(d.index, all_rows(d.index.size()), cfg.model.input_height, cfg.model.input_width);
    return d;
}

inline void write_checkpoint(ArtifactWriter& w, const std::filesystem::path& rel, const FusionModel<float>& m) {
    w.write(rel, encode_checkpoint(checkpoint_tensors(m)));
}

inline void write_curves(ArtifactWriter& w, const std::filesystem::path& dir, std::span<const EpochStats> curves,
                         const std::string& title) {
    w.write(dir / "curves.csv", format_curves(curves));
    w.write(dir / "curves.svg", curves_svg(curves, title));
}

inline RunConfig prepared(RunConfig cfg) {
    synchronize(cfg);
    return cfg;
}

}  // namespace detail

/// Single train/val/test run.
inline int cmd_train(const RunConfig& config, std::ostream& out) {
    const RunConfig cfg = detail::prepared(config);
    auto data = detail::load_run_data(cfg);
    const ImageSet train_set = subset(data.images, data.split.train);
    const ImageSet val_set = subset(data.images, data.split.val);

    FusionModel<float> model(cfg.model);
    const auto curves = train(model, train_set, val_set, detail::train_options(cfg));
    const ConfusionMatrix val_cm = evaluate(model, val_set, cfg.batch_size);

    ArtifactWriter w(cfg.out);
    w.write("config.txt", format_config(cfg));
    w.write("plan.csv", format_plan(plan_rows(data.index, data.split, nullptr)));
    std::string table = std::string(kMetricsHeader) + "\n" + format_metric_row("val", to_percent(metrics(val_cm))) + "\n";
    w.write("confusion_val.csv", format_confusion(val_cm));
    if (!data.split.test.empty()) {
        const ConfusionMatrix test_cm = evaluate(model, subset(data.images, data.split.test), cfg.batch_size);
        table += format_metric_row("test", to_percent(metrics(test_cm))) + "\n";
        w.write("confusion_test.csv", format_confusion(test_cm));
    }
    w.write("metrics.csv", table);
    detail::write_curves(w, "", curves, "training vs validation accuracy");
    detail::write_checkpoint(w, "model.sefn", model);
    w.close();

    std::istringstream in(table);
    out << render_table(parse_metrics_table(in)) << "wrote " << w.entries().size() << " files to "
        << cfg.out.string() << "\n";
    return kExitOk;
}

/// Mean row over recorded fold metrics, without training.
inline int cmd_cv_replay(const RunConfig& cfg, std::ostream& out) {
    std::ifstream in(*cfg.replay);
    if (!in) throw ConfigError("cannot read replay file " + cfg.replay->string());
    const auto rows = fold_rows(parse_metrics_table(in));
    if (rows.size() < 2) throw ConfigError("replay file needs at least two fold rows");
    const std::string table = format_cv_table(rows, mean_row(rows));
    ArtifactWriter w(cfg.out);
    w.write("metrics.csv", table);
    w.close();
    std::istringstream back(table);
    out << render_table(parse_metrics_table(back));
    return kExitOk;
}

/// k-fold cross-validation over train+val with the test split held out.
inline int cmd_cv(const RunConfig& config, std::ostream& out) {
    const RunConfig cfg = detail::prepared(config);
    if (cfg.replay) return cmd_cv_replay(cfg, out);
    if (cfg.k < 2) throw ConfigError("k must be at least 2");
    auto data = detail::load_run_data(cfg);
    const FoldPlan folds = make_folds(data.index, cv_pool(data.split), cfg.k, cfg.seed, cfg.group_mode);

    ArtifactWriter w(cfg.out);
    w.write("config.txt", format_config(cfg));
    w.write("plan.csv", format_plan(plan_rows(data.index, data.split, &folds)));
    const CvResult cv = kfold_cv(cfg.model, folds, data.images, data.split.test, detail::train_options(cfg),
                                 [&](std::size_t f, FusionModel<float>& m) {
                                     detail::write_checkpoint(w, "fold" + std::to_string(f + 1) + "/model.sefn", m);
                                 });

    std::vector<MetricRow> val_rows, test_rows;
    for (const auto& f : cv.folds) {
        const std::filesystem::path dir = "fold" + std::to_string(f.fold);
        w.write(dir / "confusion_val.csv", format_confusion(f.confusion));
        if (f.test_confusion) w.write(dir / "confusion_test.csv", format_confusion(*f.test_confusion));
        detail::write_curves(w, dir, f.curves, "fold " + std::to_string(f.fold) + ": training vs validation accuracy");
        val_rows.push_back(f.validation);
        if (f.test) test_rows.push_back(*f.test);
    }
    const std::string table = format_cv_table(val_rows, cv.mean);
    w.write("metrics.csv", table);
    if (cv.test_mean) w.write("test_metrics.csv", format_cv_table(test_rows, *cv.test_mean));
    w.close();

    std::istringstream in(table);
    out << "validation (" << cfg.k << "-fold)\n" << render_table(parse_metrics_table(in));
    if (cv.test_mean) {
        std::istringstream tin(format_cv_table(test_rows, *cv.test_mean));
        out << "held-out test, one row per fold model\n" << render_table(parse_metrics_table(tin));
    }
    return kExitOk;
}

/// Dense-block grid search scored on the validation split.
inline int cmd_grid(const RunConfig& config, std::ostream& out) {
    const RunConfig cfg = detail::prepared(config);
    validate_grid(cfg.grid);
    auto data = detail::load_run_data(cfg);
    const ImageSet train_set = subset(data.images, data.split.train);
    const ImageSet val_set = subset(data.images, data.split.val);
    const auto ranked =
        grid_search(cfg.model, cfg.grid, split_evaluator(train_set, val_set, detail::train_options(cfg)));

    ArtifactWriter w(cfg.out);
    w.write("config.txt", format_config(cfg));
    w.write("plan.csv", format_plan(plan_rows(data.index, data.split, nullptr)));
    w.write("grid.csv", format_grid(ranked));
    w.close();
    const auto& best = ranked.front();
    out << ranked.size() << " configurations; best: dense1 " << best.dense1_units << "/" << fixed(best.dense1_dropout, 1)
        << ", dense2 " << best.dense2_units << "/" << fixed(best.dense2_dropout, 1) << " accuracy "
        << fixed(best.validation.accuracy, 2) << "\n";
    return kExitOk;
}

/// "<stem>_augNN.png", NN zero-padded to at least two digits.
inline std::string augmented_name(const std::string& stem, std::size_t variant, std::size_t variants) {
    const int width = std::max(2, static_cast<int>(std::to_string(variants).size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "_aug%0*zu.png", width, variant + 1);
    return stem + buf;
}

/// Writes variants_per_image augmented copies of every source image, per class.
inline int cmd_augment(const RunConfig& config, std::ostream& out) {
    const RunConfig cfg = detail::prepared(config);
    validate(cfg.augment);
    if (cfg.dataset.empty()) throw ConfigError("no dataset configured (set dataset = PATH)");
    const DatasetIndex idx = load_dataset(cfg.dataset, cfg.positive_class);
    const std::filesystem::path root = cfg.augment_out.empty() ? cfg.out / "augmented" : cfg.augment_out;
    ArtifactWriter w(root);
    const std::size_t n_variants = cfg.augment.variants_per_image;
    constexpr std::size_t kChunk = 32;  // bounds memory held by encoded images
    for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
        const std::size_t count = std::min(kChunk, idx.size() - begin);
        std::vector<std::vector<std::vector<std::uint8_t>>> encoded(count);
        parallel_for(count, [&](std::size_t i) {
            const Image src = read_image(idx.entries[begin + i].path);
            for (const auto& v : augment(src, cfg.augment, begin + i)) encoded[i].push_back(encode_png(v));
        });
        for (std::size_t i = 0; i < count; ++i) {
            const auto& path = idx.entries[begin + i].path;
            const std::filesystem::path dir = path.parent_path().filename();
            for (std::size_t v = 0; v < encoded[i].size(); ++v)
                w.write(dir / augmented_name(path.stem().string(), v, n_variants), encoded[i][v]);
        }
    }
    w.close();
    out << "wrote " << w.entries().size() << " augmented images (" << n_variants << " per source, "
        << idx.size() << " sources) to " << root.string() << "\n";
    return kExitOk;
}

/// Finite-difference suite; exit 2 naming every failing op.
inline int cmd_gradcheck(std::ostream& out, const std::vector<GradCase>& cases = default_grad_cases()) {
    const auto results = run_grad_cases(cases, out);
    int code = kExitOk;
    for (const auto& r : results)
        if (!r.passed) {
            out << "gradient check failed: " << r.name << "\n";
            code = kExitVerification;
        }
    return code;
}

/// Verifies a run directory against its manifest, then renders its tables.
inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
    const auto& dir = cfg.out;
    if (!std::filesystem::is_directory(dir)) throw ConfigError("run directory not found: " + dir.string());
    const auto entries = read_manifest(dir);
    const auto bad = verify_manifest(dir);
    for (const auto& p : bad) out << "digest mismatch: " << p << "\n";
    if (!bad.empty()) return kExitVerification;
    out << "manifest ok: " << entries.size() << " files\n";
    for (const char* name : {"metrics.csv", "test_metrics.csv"}) {
        std::ifstream in(dir / name);
        if (in) out << name << "\n" << render_table(parse_metrics_table(in));
    }
    for (const auto& e : entries) {
        const std::filesystem::path p(e.path);
        if (p.filename().string().rfind("confusion_", 0) != 0) continue;
        std::ifstream in(dir / p);
        const ConfusionMatrix cm = parse_confusion(in);
        out << e.path << ": TP=" << cm.tp << " TN=" << cm.tn << " FP=" << cm.fp << " FN=" << cm.fn << "\n";
    }
    if (std::ifstream grid(dir / "grid.csv"); grid) {
        std::string header, first;
        std::getline(grid, header);
        if (std::getline(grid, first)) out << "grid rank 1: " << first << "\n";
    }
    return kExitOk;
}

}  // namespace sefusion
