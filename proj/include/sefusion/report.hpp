#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "sefusion/train.hpp"

namespace sefusion {

namespace fs = std::filesystem;

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ReportError("cannot parse " + what + " value '" + s + "'");
    }
}

// ---------------------------------------------------------------------------
// Fold metrics CSV: Fold,Accuracy,Precision,Recall,F1-Score in percent, 2 decimals.

inline constexpr const char* kMetricsHeader = "Fold,Accuracy,Precision,Recall,F1-Score";

struct MetricsTable {
    std::vector<std::pair<std::string, MetricRow>> rows;  // label -> metrics; "Mean" last when present
};

inline std::string format_metric_row(const std::string& label, const MetricRow& r) {
    return label + "," + fixed(r.accuracy, 2) + "," + fixed(r.precision, 2) + "," + fixed(r.recall, 2) + "," +
           fixed(r.f1, 2);
}

/// Per-fold rows labelled 1..k followed by the Mean row.
inline std::string format_cv_table(std::span<const MetricRow> folds, const MetricRow& mean) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (std::size_t i = 0; i < folds.size(); ++i) out += format_metric_row(std::to_string(i + 1), folds[i]) + "\n";
    out += format_metric_row("Mean", mean) + "\n";
    return out;
}

inline MetricsTable parse_metrics_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw ReportError(std::string("metrics CSV must start with header '") + kMetricsHeader + "'");
    MetricsTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 5) throw ReportError("metrics row has " + std::to_string(cells.size()) + " cells: " + line);
        table.rows.push_back({cells[0],
                              {parse_number(cells[1], "Accuracy"), parse_number(cells[2], "Precision"),
                               parse_number(cells[3], "Recall"), parse_number(cells[4], "F1-Score")}});
    }
    return table;
}

/// Fold rows of a parsed table (everything except a "Mean" row).
inline std::vector<MetricRow> fold_rows(const MetricsTable& table) {
    std::vector<MetricRow> rows;
    for (const auto& [label, r] : table.rows)
        if (label != "Mean") rows.push_back(r);
    return rows;
}

/// Human-readable table with aligned columns.
inline std::string render_table(const MetricsTable& table) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %12s %13s %10s %12s\n", "Fold", "Accuracy(%)", "Precision(%)", "Recall(%)",
                  "F1-Score(%)");
    out += buf;
    for (const auto& [label, r] : table.rows) {
        std::snprintf(buf, sizeof buf, "%-6s %12.2f %13.2f %10.2f %12.2f\n", label.c_str(), r.accuracy, r.precision,
                      r.recall, r.f1);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confusion matrix CSV (rows: actual class, columns: predicted class).

inline constexpr const char* kConfusionHeader = "actual,predicted_others,predicted_monkeypox";

inline std::string format_confusion(const ConfusionMatrix& cm) {
    return std::string(kConfusionHeader) + "\nothers," + std::to_string(cm.tn) + "," + std::to_string(cm.fp) +
           "\nmonkeypox," + std::to_string(cm.fn) + "," + std::to_string(cm.tp) + "\n";
}

inline ConfusionMatrix parse_confusion(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kConfusionHeader) throw ReportError("bad confusion matrix header");
    ConfusionMatrix cm;
    for (const char* expect : {"others", "monkeypox"}) {
        if (!std::getline(in, line)) throw ReportError("confusion matrix truncated");
        const auto cells = split_csv_line(line);
        if (cells.size() != 3 || cells[0] != expect) throw ReportError("bad confusion matrix row: " + line);
        const auto a = static_cast<std::size_t>(parse_number(cells[1], "count"));
        const auto b = static_cast<std::size_t>(parse_number(cells[2], "count"));
        if (cells[0] == "others") cm.tn = a, cm.fp = b;
        else cm.fn = a, cm.tp = b;
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Training curves.

inline constexpr const char* kCurvesHeader = "epoch,train_loss,val_loss,train_acc,val_acc";

inline std::string format_curves(std::span<const EpochStats> curves) {
    std::string out = std::string(kCurvesHeader) + "\n";
    for (const auto& e : curves)
        out += std::to_string(e.epoch) + "," + fixed(e.train_loss, 6) + "," + fixed(e.val_loss, 6) + "," +
               fixed(e.train_acc, 6) + "," + fixed(e.val_acc, 6) + "\n";
    return out;
}

inline std::vector<EpochStats> parse_curves(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCurvesHeader) throw ReportError("bad curves header");
    std::vector<EpochStats> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() != 5) throw ReportError("bad curves row: " + line);
        out.push_back({static_cast<std::size_t>(parse_number(c[0], "epoch")), parse_number(c[1], "train_loss"),
                       parse_number(c[2], "val_loss"), parse_number(c[3], "train_acc"), parse_number(c[4], "val_acc")});
    }
    return out;
}

/// Line chart of training and validation accuracy per epoch.
inline std::string curves_svg(std::span<const EpochStats> curves, const std::string& title) {
    if (curves.empty()) throw ReportError("curves_svg: no epochs");
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    const double n = static_cast<double>(curves.size());
    auto px = [&](std::size_t i) { return L + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / (n - 1)); };
    auto py = [&](double acc) { return T + ph * (1.0 - std::clamp(acc, 0.0, 1.0)); };
    auto series = [&](double EpochStats::*field) {
        std::string pts;
        for (std::size_t i = 0; i < curves.size(); ++i)
            pts += (i ? " " : "") + fixed(px(i), 2) + "," + fixed(py(curves[i].*field), 2);
        return pts;
    };
    auto escape = [](const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    };
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    svg += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg += "  <text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           escape(title) + "</text>\n";
    svg += "  <line x1=\"" + fixed(L, 0) + "\" y1=\"" + fixed(T + ph, 0) + "\" x2=\"" + fixed(L + pw, 0) + "\" y2=\"" +
           fixed(T + ph, 0) + "\" stroke=\"black\"/>\n";
    svg += "  <line x1=\"" + fixed(L, 0) + "\" y1=\"" + fixed(T, 0) + "\" x2=\"" + fixed(L, 0) + "\" y2=\"" +
           fixed(T + ph, 0) + "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double acc = tick / 4.0;
        svg += "  <text x=\"" + fixed(L - 8, 0) + "\" y=\"" + fixed(py(acc) + 4, 2) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fixed(acc, 2) + "</text>\n";
    }
    svg += "  <text x=\"" + fixed(L + pw / 2, 0) + "\" y=\"" + fixed(H - 12, 0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch (1-" +
           std::to_string(curves.size()) + ")</text>\n";
    svg += "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + series(&EpochStats::train_acc) +
           "\"><title>train_acc</title></polyline>\n";
    svg += "  <polyline fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"2\" points=\"" + series(&EpochStats::val_acc) +
           "\"><title>val_acc</title></polyline>\n";
    svg += "  <text x=\"" + fixed(L + pw - 100, 0) + "\" y=\"" + fixed(T + 16, 0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">training</text>\n";
    svg += "  <text x=\"" + fixed(L + pw - 100, 0) + "\" y=\"" + fixed(T + 32, 0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#ff7f0e\">validation</text>\n";
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// Grid search results.

inline constexpr const char* kGridHeader =
    "rank,dense1_units,dense1_dropout,dense2_units,dense2_dropout,accuracy,precision,recall,f1";

inline std::string format_grid(std::span<const GridPoint> ranked) {
    std::string out = std::string(kGridHeader) + "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& p = ranked[i];
        out += std::to_string(i + 1) + "," + std::to_string(p.dense1_units) + "," + fixed(p.dense1_dropout, 1) + "," +
               std::to_string(p.dense2_units) + "," + fixed(p.dense2_dropout, 1) + "," +
               fixed(p.validation.accuracy, 2) + "," + fixed(p.validation.precision, 2) + "," +
               fixed(p.validation.recall, 2) + "," + fixed(p.validation.f1, 2) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Digests and the run manifest.

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
        throw ReportError("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReportError("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
    return sha256_hex(bytes);
}

inline constexpr const char* kManifestName = "manifest.txt";

/**
 * Single writer for a run's output directory. Every file goes through
 * write(); close() emits manifest.txt as "<sha256>  <relative path>" lines
 * in write order.
 */
class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec || !fs::is_directory(root_)) throw ReportError("cannot create output directory " + root_.string());
    }

    const fs::path& root() const { return root_; }

    fs::path write(const fs::path& relative, std::span<const std::uint8_t> bytes) {
        const fs::path full = root_ / relative;
        if (full.has_parent_path()) fs::create_directories(full.parent_path());
        std::ofstream out(full, std::ios::binary | std::ios::trunc);
        if (!out) throw ReportError("cannot write " + full.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ReportError("write failed for " + full.string());
        entries_.emplace_back(relative.generic_string(), sha256_hex(bytes));
        return full;
    }

    fs::path write(const fs::path& relative, const std::string& text) {
        return write(relative, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }

    /// Registers a file produced by another writer (e.g. a checkpoint) under the manifest.
    void record(const fs::path& relative) {
        entries_.emplace_back(relative.generic_string(), sha256_file(root_ / relative));
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    fs::path close() {
        std::string text;
        for (const auto& [path, digest] : entries_) text += digest + "  " + path + "\n";
        const fs::path full = root_ / kManifestName;
        std::ofstream out(full, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw ReportError("cannot write manifest " + full.string());
        return full;
    }

private:
    fs::path root_;
    std::vector<std::pair<std::string, std::string>> entries_;  // relative path, digest
};

struct ManifestEntry {
    std::string digest;
    std::string path;
};

inline std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
    std::ifstream in(dir / kManifestName);
    if (!in) throw ReportError("no manifest in " + dir.string());
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto sep = line.find("  ");
        if (sep == std::string::npos) throw ReportError("bad manifest line: " + line);
        out.push_back({line.substr(0, sep), line.substr(sep + 2)});
    }
    return out;
}

/// Paths whose current digest differs from the manifest (missing files included).
inline std::vector<std::string> verify_manifest(const fs::path& dir) {
    std::vector<std::string> bad;
    for (const auto& e : read_manifest(dir)) {
        const fs::path p = dir / e.path;
        if (!fs::is_regular_file(p) || sha256_file(p) != e.digest) bad.push_back(e.path);
    }
    return bad;
}

}  // namespace sefusion
