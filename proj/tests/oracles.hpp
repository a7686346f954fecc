#pragma once

// Brute-force reference implementations. Deliberately naive: plain loops over
// raw vectors, no shared code with the library kernels.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Vec v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// a [m,k] * b [k,n]
inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
    Vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

struct ConvDims {
    std::size_t n, c, h, w, f, kh, kw, stride, pad;
    std::size_t oh() const { return (h + 2 * pad - kh) / stride + 1; }
    std::size_t ow() const { return (w + 2 * pad - kw) / stride + 1; }
};

// Cross-correlation with zero padding.
inline Vec conv2d(const Vec& x, const Vec& k, const ConvDims& d) {
    Vec y(d.n * d.f * d.oh() * d.ow(), 0.0);
    for (std::size_t b = 0; b < d.n; ++b)
        for (std::size_t f = 0; f < d.f; ++f)
            for (std::size_t oy = 0; oy < d.oh(); ++oy)
                for (std::size_t ox = 0; ox < d.ow(); ++ox)
                    for (std::size_t c = 0; c < d.c; ++c)
                        for (std::size_t ky = 0; ky < d.kh; ++ky)
                            for (std::size_t kx = 0; kx < d.kw; ++kx) {
                                const long iy = static_cast<long>(oy * d.stride + ky) - static_cast<long>(d.pad);
                                const long ix = static_cast<long>(ox * d.stride + kx) - static_cast<long>(d.pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(d.h) || ix >= static_cast<long>(d.w))
                                    continue;
                                y[((b * d.f + f) * d.oh() + oy) * d.ow() + ox] +=
                                    x[((b * d.c + c) * d.h + iy) * d.w + ix] * k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
                            }
    return y;
}

inline Vec channel_means(const Vec& x, std::size_t n, std::size_t c, std::size_t hw) {
    Vec out(n * c, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0;
            for (std::size_t i = 0; i < hw; ++i) s += x[(b * c + ch) * hw + i];
            out[b * c + ch] = s / static_cast<double>(hw);
        }
    return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Mean binary cross-entropy with the same 1e-7 clip the library documents.
inline double bce(const std::vector<int>& y, const Vec& p) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
        s += y[i] == 1 ? -std::log(q) : -std::log(1.0 - q);
    }
    return s / static_cast<double>(y.size());
}

struct Counts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Counts count(const std::vector<int>& actual, const std::vector<int>& predicted) {
    Counts c;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 1 && predicted[i] == 1) c.tp++;
        if (actual[i] == 0 && predicted[i] == 0) c.tn++;
        if (actual[i] == 0 && predicted[i] == 1) c.fp++;
        if (actual[i] == 1 && predicted[i] == 0) c.fn++;
    }
    return c;
}

// Textbook ratios straight from the counts; 0 on an empty denominator.
struct Ratios {
    double accuracy, precision, recall, f1;
    bool degenerate;
};

inline Ratios ratios(const Counts& c) {
    Ratios r{};
    const double n = static_cast<double>(c.tp + c.tn + c.fp + c.fn);
    const double pp = static_cast<double>(c.tp + c.fp), ap = static_cast<double>(c.tp + c.fn);
    r.degenerate = n == 0 || pp == 0 || ap == 0;
    r.accuracy = n == 0 ? 0 : static_cast<double>(c.tp + c.tn) / n;
    r.precision = pp == 0 ? 0 : static_cast<double>(c.tp) / pp;
    r.recall = ap == 0 ? 0 : static_cast<double>(c.tp) / ap;
    if (r.precision + r.recall == 0) {
        r.degenerate = true;
        r.f1 = 0;
    } else {
        r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
    }
    return r;
}

// Bilinear sample with half-pixel centres and edge clamp, written from the formula.
inline double bilinear(const std::vector<double>& img, std::size_t w, std::size_t h, double x, double y) {
    auto at = [&](long xi, long yi) {
        xi = std::clamp<long>(xi, 0, static_cast<long>(w) - 1);
        yi = std::clamp<long>(yi, 0, static_cast<long>(h) - 1);
        return img[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xi)];
    };
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double fx = x - x0, fy = y - y0;
    const long xi = static_cast<long>(x0), yi = static_cast<long>(y0);
    return (1 - fx) * (1 - fy) * at(xi, yi) + fx * (1 - fy) * at(xi + 1, yi) + (1 - fx) * fy * at(xi, yi + 1) +
           fx * fy * at(xi + 1, yi + 1);
}

}  // namespace oracle
