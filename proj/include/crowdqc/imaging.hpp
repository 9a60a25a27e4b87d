#pragma once

// Grayscale images and Gaussian-derivative gradient fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crowdqc/core.hpp"
#include "crowdqc/pnm.hpp"

namespace crowdqc {

class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0) : width_(width), height_(height) {
        if (width <= 0 || height <= 0) throw DomainError("image dimensions must be positive");
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }

    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Edge-replicating access.
    double clamped(int x, int y) const {
        return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
    }

    const std::vector<double>& data() const { return data_; }
    bool operator==(const GrayImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Converts a decoded netpbm image to intensities in [0, 255]. RGB input is
/// reduced to luminance 0.299 R + 0.587 G + 0.114 B.
inline GrayImage to_gray(const PnmImage& pnm) {
    GrayImage img(pnm.width, pnm.height);
    const double scale = 255.0 / pnm.maxval;
    for (int y = 0; y < pnm.height; ++y) {
        for (int x = 0; x < pnm.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * pnm.width + x;
            if (pnm.channels == 1) {
                img.at(x, y) = pnm.samples[i] * scale;
            } else {
                const int* rgb = &pnm.samples[i * 3];
                img.at(x, y) = (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) * scale;
            }
        }
    }
    return img;
}

/// 8-bit PGM, intensities rounded and clamped to [0, 255].
inline std::string encode_gray_pgm(const GrayImage& img) {
    std::vector<std::uint8_t> px(img.data().size());
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::clamp(std::lround(img.data()[i]), 0L, 255L));
    return encode_pgm(img.width(), img.height(), px);
}

struct GradientField {
    int width = 0;
    int height = 0;
    double sigma = 1.0;
    std::vector<double> gx;
    std::vector<double> gy;

    Vec2 at(int x, int y) const {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        return {gx[i], gy[i]};
    }
};

/// Normalized sampled Gaussian, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// First-derivative kernel: central difference of the sampled Gaussian,
/// d[k] = (g[k-1] - g[k+1]) / 2, applied as out(x) = sum_k in(x+k) d[k].
/// It differentiates linear ramps exactly.
inline std::vector<double> gaussian_derivative_kernel(double sigma) {
    const std::vector<double> g = gaussian_kernel(sigma);
    const int r = static_cast<int>(g.size() / 2);
    const auto gv = [&](int i) { return (i < -r || i > r) ? 0.0 : g[i + r]; };
    std::vector<double> d(2 * (r + 1) + 1);
    for (int i = -(r + 1); i <= r + 1; ++i) d[i + r + 1] = 0.5 * (gv(i - 1) - gv(i + 1));
    return d;
}

namespace detail {

/// Correlates each row (horizontal) or column with an odd-length kernel,
/// replicating edge pixels.
inline std::vector<double> correlate_1d(const std::vector<double>& in, int w, int h,
                                        const std::vector<double>& kernel, bool horizontal) {
    const int r = static_cast<int>(kernel.size() / 2);
    std::vector<double> out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = horizontal ? std::clamp(x + k, 0, w - 1) : x;
                const int yy = horizontal ? y : std::clamp(y + k, 0, h - 1);
                acc += in[static_cast<std::size_t>(yy) * w + xx] * kernel[k + r];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

}  // namespace detail

/// Gradient of the Gaussian-smoothed image (intensity units per pixel):
/// smoothing across the derivative axis, derivative kernel along it.
inline GradientField gaussian_gradient(const GrayImage& img, double sigma = 1.0) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be positive");
    const auto g = gaussian_kernel(sigma);
    const auto d = gaussian_derivative_kernel(sigma);
    const int w = img.width();
    const int h = img.height();
    GradientField f;
    f.width = w;
    f.height = h;
    f.sigma = sigma;
    f.gx = detail::correlate_1d(detail::correlate_1d(img.data(), w, h, g, false), w, h, d, true);
    f.gy = detail::correlate_1d(detail::correlate_1d(img.data(), w, h, g, true), w, h, d, false);
    return f;
}

/// Bilinear interpolation between pixel centers; outside points clamp to the border.
inline Vec2 sample_gradient(const GradientField& f, Vec2 p) {
    const double u = std::clamp(p.x - 0.5, 0.0, static_cast<double>(f.width - 1));
    const double v = std::clamp(p.y - 0.5, 0.0, static_cast<double>(f.height - 1));
    const int x0 = std::min(static_cast<int>(std::floor(u)), f.width - 1);
    const int y0 = std::min(static_cast<int>(std::floor(v)), f.height - 1);
    const int x1 = std::min(x0 + 1, f.width - 1);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double fx = u - x0;
    const double fy = v - y0;
    const auto lerp = [](Vec2 a, Vec2 b, double t) { return a * (1.0 - t) + b * t; };
    const Vec2 top = fx == 0.0 ? f.at(x0, y0) : lerp(f.at(x0, y0), f.at(x1, y0), fx);
    const Vec2 bottom = fx == 0.0 ? f.at(x0, y1) : lerp(f.at(x0, y1), f.at(x1, y1), fx);
    return fy == 0.0 ? top : lerp(top, bottom, fy);
}

}  // namespace crowdqc
