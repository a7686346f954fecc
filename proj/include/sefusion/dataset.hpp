#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>

#include "sefusion/image.hpp"
#include "sefusion/ops.hpp"
#include "sefusion/parallel.hpp"

namespace sefusion {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kPositiveLabel = 1;  // Monkeypox
inline constexpr int kNegativeLabel = 0;  // Others

struct DatasetEntry {
    fs::path path;
    int label = kNegativeLabel;
};

struct DatasetIndex {
    fs::path root;
    std::string positive_class;
    std::string negative_class;
    std::vector<DatasetEntry> entries;  // sorted by path
    std::array<std::size_t, 2> class_counts{};  // indexed by label
    std::vector<std::pair<fs::path, std::string>> skipped;  // undecodable files and why

    std::size_t size() const { return entries.size(); }
};

/**
 * Indexes <root>/<Class>/<images>. Exactly two class directories are
 * required; the one named `positive_class` (case-insensitive) gets label 1.
 * Every file is decoded once; failures are recorded in `skipped`.
 */
inline DatasetIndex load_dataset(const fs::path& root, const std::string& positive_class = "Monkeypox") {
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() != 2)
        throw DataError("dataset " + root.string() + " must contain exactly two class directories, found " +
                        std::to_string(class_dirs.size()));
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    DatasetIndex idx;
    idx.root = root;
    std::vector<DatasetEntry> candidates;
    bool found_positive = false;
    for (const auto& dir : class_dirs) {
        const std::string name = dir.filename().string();
        const bool positive = lower(name) == lower(positive_class);
        found_positive |= positive;
        (positive ? idx.positive_class : idx.negative_class) = name;
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) {
                candidates.push_back({e.path(), positive ? kPositiveLabel : kNegativeLabel});
                ++files;
            }
        if (files == 0) throw DataError("class directory is empty: " + dir.string());
    }
    if (!found_positive)
        throw DataError("dataset " + root.string() + " has no class directory named " + positive_class);
    std::sort(candidates.begin(), candidates.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.path < b.path; });

    std::vector<std::string> errors(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        try {
            (void)read_image(candidates[i].path);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!errors[i].empty()) {
            idx.skipped.emplace_back(candidates[i].path, errors[i]);
            continue;
        }
        idx.entries.push_back(candidates[i]);
        ++idx.class_counts[static_cast<std::size_t>(candidates[i].label)];
    }
    for (int label : {kNegativeLabel, kPositiveLabel})
        if (idx.class_counts[static_cast<std::size_t>(label)] == 0)
            throw DataError("class " + std::string(label ? idx.positive_class : idx.negative_class) +
                            " has no decodable images");
    return idx;
}

/// Source image key: the file stem with any "_augNN" suffix removed, within its class.
inline std::string provenance_key(const DatasetEntry& e) {
    static const std::regex aug_suffix(R"(^(.*)_aug\d+$)");
    std::string stem = e.path.stem().string();
    std::smatch m;
    if (std::regex_match(stem, m, aug_suffix)) stem = m[1].str();
    return std::to_string(e.label) + "/" + stem;
}

/// by_source keeps augmented variants of one image in the same subset.
enum class GroupMode { by_source, none };

namespace detail {

/// Units (groups of entry indices) per label, in key order.
inline std::array<std::vector<std::vector<std::size_t>>, 2> units_by_class(const DatasetIndex& idx,
                                                                          std::span<const std::size_t> members,
                                                                          GroupMode mode) {
    std::array<std::map<std::string, std::vector<std::size_t>>, 2> groups;
    for (std::size_t i : members) {
        const auto& e = idx.entries.at(i);
        const std::string key = mode == GroupMode::by_source ? provenance_key(e) : e.path.string();
        groups[static_cast<std::size_t>(e.label)][key].push_back(i);
    }
    std::array<std::vector<std::vector<std::size_t>>, 2> out;
    for (std::size_t c = 0; c < 2; ++c)
        for (auto& [key, list] : groups[c]) out[c].push_back(std::move(list));
    return out;
}

inline std::size_t floor_share(double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

}  // namespace detail

struct SplitRatios {
    double train = 0.7;
    double val = 0.2;
    double test = 0.1;
};

struct SplitPlan {
    std::vector<std::size_t> train, val, test;  // indices into DatasetIndex::entries
    SplitRatios ratios;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinSamplesPerClass = 10;

/**
 * Per class: seeded shuffle, then test takes floor(test * n), val takes
 * floor(val * n), train keeps the remainder. Counts are in units (source
 * groups under GroupMode::by_source, single files otherwise).
 */
inline SplitPlan stratified_split(const DatasetIndex& idx, SplitRatios ratios, std::uint64_t seed,
                                  GroupMode mode = GroupMode::by_source) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-6)
        throw DataError("split ratios must be non-negative and sum to 1");
    std::vector<std::size_t> all(idx.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto units = detail::units_by_class(idx, all, mode);
    SplitPlan plan;
    plan.ratios = ratios;
    plan.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < 2; ++c) {
        if (idx.class_counts[c] < kMinSamplesPerClass)
            throw DataError("class " + std::string(c ? idx.positive_class : idx.negative_class) + " has " +
                            std::to_string(idx.class_counts[c]) + " samples; stratified split needs at least " +
                            std::to_string(kMinSamplesPerClass));
        auto& u = units[c];
        std::shuffle(u.begin(), u.end(), rng);
        const std::size_t n_test = detail::floor_share(ratios.test, u.size());
        // Cumulative floors: the train remainder never absorbs two rounding losses.
        const std::size_t n_val = detail::floor_share(ratios.test + ratios.val, u.size()) - n_test;
        for (std::size_t i = 0; i < u.size(); ++i) {
            auto& dst = i < n_test ? plan.test : i < n_test + n_val ? plan.val : plan.train;
            dst.insert(dst.end(), u[i].begin(), u[i].end());
        }
    }
    for (auto* v : {&plan.train, &plan.val, &plan.test}) std::sort(v->begin(), v->end());
    return plan;
}

struct FoldPlan {
    std::size_t k = 4;
    std::vector<std::vector<std::size_t>> folds;  // validation subset of each fold
    std::uint64_t seed = 0;

    /// Everything in the pool except fold i.
    std::vector<std::size_t> training_indices(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < folds.size(); ++f)
            if (f != i) out.insert(out.end(), folds[f].begin(), folds[f].end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

/**
 * Stratified k-way partition of `pool`: per-class seeded shuffle, then
 * round-robin dealing whose cursor carries over from one class to the next
 * so fold sizes differ by at most one unit.
 */
inline FoldPlan make_folds(const DatasetIndex& idx, std::span<const std::size_t> pool, std::size_t k,
                           std::uint64_t seed, GroupMode mode = GroupMode::by_source) {
    if (k < 2) throw DataError("k-fold needs k >= 2");
    auto units = detail::units_by_class(idx, pool, mode);
    for (std::size_t c = 0; c < 2; ++c)
        if (units[c].size() < k)
            throw DataError("fold pool too small: class " + std::string(c ? idx.positive_class : idx.negative_class) +
                            " has " + std::to_string(units[c].size()) + " units for k=" + std::to_string(k));
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(k);
    std::mt19937_64 rng(seed);
    std::size_t cursor = 0;
    for (auto& u : units) {
        std::shuffle(u.begin(), u.end(), rng);
        for (auto& unit : u) {
            auto& dst = plan.folds[cursor++ % k];
            dst.insert(dst.end(), unit.begin(), unit.end());
        }
    }
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

/// Pool the folds are drawn from: train + val, with the test split held out.
inline std::vector<std::size_t> cv_pool(const SplitPlan& split) {
    std::vector<std::size_t> pool = split.train;
    pool.insert(pool.end(), split.val.begin(), split.val.end());
    std::sort(pool.begin(), pool.end());
    return pool;
}

struct PlanRow {
    std::string subset;  // train | val | test
    int fold = -1;       // validation fold for pool members, -1 otherwise
    std::string path;
    int label = 0;
    bool operator==(const PlanRow&) const = default;
};

inline std::vector<PlanRow> plan_rows(const DatasetIndex& idx, const SplitPlan& split, const FoldPlan* folds) {
    std::vector<PlanRow> rows(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) rows[i] = {"", -1, idx.entries[i].path.string(), idx.entries[i].label};
    for (std::size_t i : split.train) rows.at(i).subset = "train";
    for (std::size_t i : split.val) rows.at(i).subset = "val";
    for (std::size_t i : split.test) rows.at(i).subset = "test";
    if (folds)
        for (std::size_t f = 0; f < folds->folds.size(); ++f)
            for (std::size_t i : folds->folds[f]) rows.at(i).fold = static_cast<int>(f);
    return rows;
}

/// "subset,fold,path,label" lines under a header of the same names.
inline std::string format_plan(std::span<const PlanRow> rows) {
    std::string out = "subset,fold,path,label\n";
    for (const auto& r : rows)
        out += r.subset + "," + std::to_string(r.fold) + "," + r.path + "," + std::to_string(r.label) + "\n";
    return out;
}

inline std::vector<PlanRow> parse_plan(std::istream& in) {
    std::vector<PlanRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line == "subset,fold,path,label") continue;
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.rfind(',');
        if (c1 == std::string::npos || c2 == std::string::npos || c3 <= c2)
            throw DataError("plan line " + std::to_string(lineno) + " is malformed");
        PlanRow r;
        r.subset = line.substr(0, c1);
        try {
            r.fold = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
            r.label = std::stoi(line.substr(c3 + 1));
        } catch (const std::exception&) {
            throw DataError("plan line " + std::to_string(lineno) + " has a non-numeric field");
        }
        r.path = line.substr(c2 + 1, c3 - c2 - 1);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// In-memory image batch: images [N, 3, H, W] and 0/1 labels.
struct ImageSet {
    Tensor<float> images = Tensor<float>::zeros({0, 3, 1, 1});
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

inline ImageSet load_images(const DatasetIndex& idx, std::span<const std::size_t> indices, std::size_t height,
                            std::size_t width) {
    const std::size_t per = 3 * height * width;
    std::vector<float> data(indices.size() * per);
    ImageSet set;
    set.labels.resize(indices.size());
    parallel_for(indices.size(), [&](std::size_t i) {
        const auto& e = idx.entries.at(indices[i]);
        const Tensor<float> t = preprocess<float>(read_image(e.path), height, width);
        std::copy(t.data().begin(), t.data().end(), data.begin() + static_cast<std::ptrdiff_t>(i * per));
        set.labels[i] = e.label;
    });
    set.images = Tensor<float>({indices.size(), 3, height, width}, std::move(data));
    return set;
}

/// Rows of `set` selected by `rows` (positions within the set).
inline ImageSet subset(const ImageSet& set, std::span<const std::size_t> rows) {
    ImageSet out;
    out.images = gather_rows(set.images, rows);
    for (std::size_t r : rows) out.labels.push_back(set.labels.at(r));
    return out;
}

}  // namespace sefusion
