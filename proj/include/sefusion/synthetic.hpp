#pragma once

#include <filesystem>
#include <random>

#include "sefusion/image.hpp"

namespace sefusion {

/// Skin-toned background; positives carry dark round lesions, negatives faint streaks.
inline Image synthetic_image(bool positive, std::size_t size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img;
    img.width = img.height = size;
    img.pixels.resize(size * size * 3);
    const double base[3] = {200 + 30 * u(rng), 150 + 30 * u(rng), 120 + 30 * u(rng)};
    std::normal_distribution<double> grain(0.0, 6.0);
    auto put = [&](std::size_t x, std::size_t y, const double* rgb) {
        for (std::size_t c = 0; c < 3; ++c)
            img.pixels[(y * size + x) * 3 + c] =
                static_cast<std::uint8_t>(std::clamp(std::lround(rgb[c] + grain(rng)), 0l, 255l));
    };
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) put(x, y, base);

    const double s = static_cast<double>(size);
    if (positive) {
        const int lesions = 3 + static_cast<int>(u(rng) * 4);
        for (int l = 0; l < lesions; ++l) {
            const double cx = s * (0.15 + 0.7 * u(rng)), cy = s * (0.15 + 0.7 * u(rng));
            const double r = s * (0.06 + 0.06 * u(rng));
            const double color[3] = {110 + 30 * u(rng), 40 + 20 * u(rng), 40 + 20 * u(rng)};
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    if (std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy) <= r) put(x, y, color);
        }
    } else {
        const int streaks = 2 + static_cast<int>(u(rng) * 3);
        for (int l = 0; l < streaks; ++l) {
            const double y0 = s * u(rng), slope = u(rng) - 0.5;
            const double color[3] = {base[0] - 25, base[1] - 25, base[2] - 20};
            for (std::size_t x = 0; x < size; ++x) {
                const double yc = y0 + slope * static_cast<double>(x);
                for (int dy = 0; dy < 2; ++dy) {
                    const long y = std::lround(yc) + dy;
                    if (y >= 0 && y < static_cast<long>(size)) put(x, static_cast<std::size_t>(y), color);
                }
            }
        }
    }
    return img;
}

/// Writes <root>/<positive_class>/pos_NNN.png and <root>/Others/neg_NNN.png.
inline void write_synthetic_dataset(const std::filesystem::path& root, std::size_t positives, std::size_t negatives,
                                    std::size_t size = 64, std::uint64_t seed = 1,
                                    const std::string& positive_class = "Monkeypox") {
    namespace fs = std::filesystem;
    fs::create_directories(root / positive_class);
    fs::create_directories(root / "Others");
    char name[32];
    for (std::size_t i = 0; i < positives; ++i) {
        std::snprintf(name, sizeof name, "pos_%03zu.png", i);
        write_png(synthetic_image(true, size, seed * 1000003 + 2 * i), root / positive_class / name);
    }
    for (std::size_t i = 0; i < negatives; ++i) {
        std::snprintf(name, sizeof name, "neg_%03zu.png", i);
        write_png(synthetic_image(false, size, seed * 1000003 + 2 * i + 1), root / "Others" / name);
    }
}

}  // namespace sefusion
