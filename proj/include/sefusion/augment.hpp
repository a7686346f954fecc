#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string_view>

#include "sefusion/image.hpp"

namespace sefusion {

enum class AugOp { reflection, noise, rotation, hue, brightness_jitter, saturation, translation, shear, contrast, scaling };

inline constexpr std::array<AugOp, 10> kAllAugOps = {
    AugOp::reflection, AugOp::noise,       AugOp::rotation, AugOp::hue,      AugOp::brightness_jitter,
    AugOp::saturation, AugOp::translation, AugOp::shear,    AugOp::contrast, AugOp::scaling};

inline std::string_view aug_op_name(AugOp op) {
    switch (op) {
        case AugOp::reflection: return "reflection";
        case AugOp::noise: return "noise";
        case AugOp::rotation: return "rotation";
        case AugOp::hue: return "hue";
        case AugOp::brightness_jitter: return "brightness_jitter";
        case AugOp::saturation: return "saturation";
        case AugOp::translation: return "translation";
        case AugOp::shear: return "shear";
        case AugOp::contrast: return "contrast";
        case AugOp::scaling: return "scaling";
    }
    return "?";
}

inline std::optional<AugOp> parse_aug_op(std::string_view name) {
    for (AugOp op : kAllAugOps)
        if (aug_op_name(op) == name) return op;
    return std::nullopt;
}

/// Upper bounds of each op's parameter; draws never include the identity.
struct AugmentationRanges {
    double rotation_deg = 30.0;
    double translation_frac = 0.10;
    double shear_deg = 15.0;
    double scale_min = 0.85;
    double scale_max = 1.15;
    double brightness = 0.20;
    double contrast = 0.20;
    double saturation = 0.20;
    double hue = 0.10;         // fraction of the hue circle
    double noise_sigma = 0.02; // in [0, 1] intensity units
};

struct AugmentationSpec {
    std::vector<AugOp> ops{kAllAugOps.begin(), kAllAugOps.end()};
    AugmentationRanges ranges;
    std::size_t variants_per_image = 14;
    std::uint64_t seed = 0;
};

inline void validate(const AugmentationSpec& spec) {
    if (spec.variants_per_image == 0) throw std::invalid_argument("variants_per_image must be >= 1");
    if (spec.ops.empty()) throw std::invalid_argument("augmentation needs at least one enabled op");
    const auto& r = spec.ranges;
    auto bounded = [](double v, double hi) { return std::isfinite(v) && v > 0.0 && v <= hi; };
    if (!bounded(r.rotation_deg, 180) || !bounded(r.translation_frac, 0.5) || !bounded(r.shear_deg, 60) ||
        !bounded(r.brightness, 1) || !bounded(r.contrast, 1) || !bounded(r.saturation, 1) || !bounded(r.hue, 0.5) ||
        !bounded(r.noise_sigma, 1) || !(r.scale_min > 0.0 && r.scale_min < 1.0 && r.scale_max > 1.0 && r.scale_max <= 4.0))
        throw std::invalid_argument("augmentation parameter range out of bounds");
}

namespace detail {

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Signed magnitude in [-hi, -hi/10] U [hi/10, hi].
inline double signed_draw(std::mt19937_64& rng, double hi) {
    std::uniform_real_distribution<double> mag(hi / 10.0, hi);
    std::bernoulli_distribution negative(0.5);
    const double m = mag(rng);
    return negative(rng) ? -m : m;
}

/// Inverse-maps every output pixel through a 2x2 matrix about the image centre.
inline Image warp(const Image& src, double a, double b, double c, double d, double tx = 0, double ty = 0) {
    Image out(src.width, src.height);
    const double cx = (static_cast<double>(src.width) - 1) / 2.0;
    const double cy = (static_cast<double>(src.height) - 1) / 2.0;
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x) {
            const double dx = static_cast<double>(x) - cx - tx, dy = static_cast<double>(y) - cy - ty;
            const double sx = a * dx + b * dy + cx, sy = c * dx + d * dy + cy;
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(x, y, ch) = to_byte(sample_bilinear(src, sx, sy, ch));
        }
    return out;
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), delta = mx - mn;
    v = mx;
    s = mx > 0 ? delta / mx : 0;
    if (delta <= 0) {
        h = 0;
    } else if (mx == r) {
        h = std::fmod((g - b) / delta, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / delta + 2.0) / 6.0;
    } else {
        h = ((r - g) / delta + 4.0) / 6.0;
    }
    if (h < 0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = std::fmod(h, 1.0);
    if (h < 0) h += 1.0;
    const double c = v * s, hp = h * 6.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1)), m = v - c;
    double r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r1 = c, g1 = x; break;
        case 1: r1 = x, g1 = c; break;
        case 2: g1 = c, b1 = x; break;
        case 3: g1 = x, b1 = c; break;
        case 4: r1 = x, b1 = c; break;
        default: r1 = c, b1 = x; break;
    }
    r = r1 + m, g = g1 + m, b = b1 + m;
}

template <class Fn>
Image map_hsv(const Image& src, Fn&& fn) {
    Image out = src;
    for (std::size_t i = 0; i < src.pixels.size(); i += 3) {
        double h, s, v, r, g, b;
        rgb_to_hsv(src.pixels[i] / 255.0, src.pixels[i + 1] / 255.0, src.pixels[i + 2] / 255.0, h, s, v);
        fn(h, s, v);
        hsv_to_rgb(h, std::clamp(s, 0.0, 1.0), std::clamp(v, 0.0, 1.0), r, g, b);
        out.pixels[i] = to_byte(r * 255.0);
        out.pixels[i + 1] = to_byte(g * 255.0);
        out.pixels[i + 2] = to_byte(b * 255.0);
    }
    return out;
}

inline Image add_noise(const Image& src, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma * 255.0);
    Image out = src;
    for (auto& p : out.pixels) p = to_byte(p + noise(rng));
    return out;
}

}  // namespace detail

/// Applies one op with a parameter drawn from its configured range.
inline Image apply_aug_op(const Image& src, AugOp op, const AugmentationRanges& r, std::mt19937_64& rng) {
    using namespace detail;
    constexpr double deg = std::numbers::pi / 180.0;
    switch (op) {
        case AugOp::reflection: {
            Image out(src.width, src.height);
            for (std::size_t y = 0; y < src.height; ++y)
                for (std::size_t x = 0; x < src.width; ++x)
                    for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = src.at(src.width - 1 - x, y, c);
            return out;
        }
        case AugOp::noise:
            return add_noise(src, r.noise_sigma, rng);
        case AugOp::rotation: {
            const double t = signed_draw(rng, r.rotation_deg) * deg;
            return warp(src, std::cos(t), std::sin(t), -std::sin(t), std::cos(t));
        }
        case AugOp::shear: {
            const double k = std::tan(signed_draw(rng, r.shear_deg) * deg);
            return warp(src, 1.0, -k, 0.0, 1.0);
        }
        case AugOp::scaling: {
            std::bernoulli_distribution enlarge(0.5);
            const bool up = enlarge(rng);
            const double lo = up ? 1.02 : r.scale_min, hi = up ? r.scale_max : 0.98;
            std::uniform_real_distribution<double> dist(std::min(lo, hi), std::max(lo, hi));
            const double s = dist(rng);
            return warp(src, 1.0 / s, 0.0, 0.0, 1.0 / s);
        }
        case AugOp::translation: {
            const auto limit = [&](std::size_t side) {
                return std::max<long>(1, std::lround(r.translation_frac * static_cast<double>(side)));
            };
            std::uniform_int_distribution<long> dx(-limit(src.width), limit(src.width));
            std::uniform_int_distribution<long> dy(-limit(src.height), limit(src.height));
            long tx = 0, ty = 0;
            while (tx == 0 && ty == 0) tx = dx(rng), ty = dy(rng);
            return warp(src, 1.0, 0.0, 0.0, 1.0, static_cast<double>(tx), static_cast<double>(ty));
        }
        case AugOp::hue: {
            const double shift = signed_draw(rng, r.hue);
            return map_hsv(src, [&](double& h, double&, double&) { h += shift; });
        }
        case AugOp::saturation: {
            const double f = 1.0 + signed_draw(rng, r.saturation);
            return map_hsv(src, [&](double&, double& s, double&) { s *= f; });
        }
        case AugOp::brightness_jitter: {
            const double f = 1.0 + signed_draw(rng, r.brightness);
            Image out = src;
            for (auto& p : out.pixels) p = to_byte(p * f);
            return out;
        }
        case AugOp::contrast: {
            const double f = 1.0 + signed_draw(rng, r.contrast);
            double mean = 0;
            for (auto p : src.pixels) mean += p;
            mean /= static_cast<double>(std::max<std::size_t>(1, src.pixels.size()));
            Image out = src;
            for (auto& p : out.pixels) p = to_byte((p - mean) * f + mean);
            return out;
        }
    }
    return src;
}

/// Seed for variant `variant` of image `image_index`; independent of worker scheduling.
inline std::mt19937_64 variant_rng(std::uint64_t seed, std::size_t image_index, std::size_t variant) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(image_index), static_cast<std::uint32_t>(variant)};
    return std::mt19937_64(seq);
}

/**
 * variants_per_image augmented copies of `src`. Each variant applies a
 * random non-empty subset of the enabled ops, in canonical order. The
 * source image itself is never returned.
 */
inline std::vector<Image> augment(const Image& src, const AugmentationSpec& spec, std::size_t image_index = 0) {
    validate(spec);
    std::vector<AugOp> enabled = spec.ops;
    std::sort(enabled.begin(), enabled.end());
    enabled.erase(std::unique(enabled.begin(), enabled.end()), enabled.end());

    std::vector<Image> out;
    out.reserve(spec.variants_per_image);
    for (std::size_t v = 0; v < spec.variants_per_image; ++v) {
        auto rng = variant_rng(spec.seed, image_index, v);
        std::uniform_int_distribution<std::size_t> count(1, enabled.size());
        std::vector<AugOp> chosen = enabled;
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(count(rng));
        std::sort(chosen.begin(), chosen.end());

        Image img = src;
        for (AugOp op : chosen) img = apply_aug_op(img, op, spec.ranges, rng);
        // Geometric ops can be exact no-ops on symmetric or flat images.
        if (img == src) img = detail::add_noise(img, spec.ranges.noise_sigma, rng);
        if (img == src) img.pixels[0] = static_cast<std::uint8_t>(img.pixels[0] < 255 ? img.pixels[0] + 1 : 254);
        out.push_back(std::move(img));
    }
    return out;
}

}  // namespace sefusion
