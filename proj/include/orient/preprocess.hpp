#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "orient/errors.hpp"
#include "orient/rng.hpp"
#include "orient/tensor.hpp"
#include "orient/volume.hpp"

// Raw volume -> network input: slicing, gray-value truncation at 0.6G/0.8G/G,
// histogram equalization, bilinear resize, 3-channel stacking, and the
// training-time rotate/crop/resize augmentation.

namespace orient {

// The network input: 3 equalized truncation channels, size x size, in [0,1].
struct PreprocessedSlice {
    Tensor<float> channels; // shape {3, size, size}
    int source_slice_index = -1;
};

struct AugmentConfig {
    float max_rotation_deg = 10.0f;
    float crop_scale_min = 0.8f;
    bool enabled = true;

    void validate() const {
        if (max_rotation_deg < 0.0f || max_rotation_deg > 15.0f)
            throw std::invalid_argument("max_rotation_deg must be in [0, 15]");
        if (!(crop_scale_min > 0.0f) || crop_scale_min > 1.0f)
            throw std::invalid_argument("crop_scale_min must be in (0, 1]");
    }
};

inline std::vector<Image2D> slice_volume(const Volume& volume) {
    std::vector<Image2D> slices;
    slices.reserve(static_cast<std::size_t>(volume.sz));
    const std::size_t plane = static_cast<std::size_t>(volume.sx) * volume.sy;
    for (int z = 0; z < volume.sz; ++z) {
        Image2D img(volume.sx, volume.sy);
        std::copy_n(volume.data.begin() + static_cast<std::ptrdiff_t>(z * plane), plane,
                    img.data.begin());
        slices.push_back(std::move(img));
    }
    return slices;
}

// Clamps values above fraction*G, where G is the maximum of this image.
inline Image2D truncate(const Image2D& image, float fraction) {
    if (!(fraction > 0.0f) || fraction > 1.0f)
        throw std::invalid_argument("truncate: fraction must be in (0, 1]");
    float g = image.data.empty() ? 0.0f : *std::max_element(image.data.begin(), image.data.end());
    const float threshold = fraction * g;
    Image2D out = image;
    for (float& v : out.data) v = std::min(v, threshold);
    return out;
}

// Histogram equalization over 256 uniform bins spanning [min, max] of the
// image itself; output = empirical CDF of the pixel's bin, so values land in
// [0,1] and the mapping is monotone. A constant image maps to all zeros.
inline Image2D equalize(const Image2D& image) {
    Image2D out(image.sx, image.sy);
    if (image.data.empty()) return out;
    const auto [mn_it, mx_it] = std::minmax_element(image.data.begin(), image.data.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) return out; // constant image

    constexpr int kBins = 256;
    const double scale = kBins / (mx - mn);
    std::vector<int> bin_of(image.data.size());
    std::vector<std::int64_t> hist(kBins, 0);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        int b = static_cast<int>((image.data[i] - mn) * scale);
        b = std::clamp(b, 0, kBins - 1);
        bin_of[i] = b;
        ++hist[b];
    }
    std::vector<double> cdf(kBins);
    std::int64_t acc = 0;
    const double n = static_cast<double>(image.data.size());
    for (int b = 0; b < kBins; ++b) {
        acc += hist[b];
        cdf[b] = static_cast<double>(acc) / n;
    }
    for (std::size_t i = 0; i < image.data.size(); ++i)
        out.data[i] = static_cast<float>(cdf[bin_of[i]]);
    return out;
}

// Bilinear resize with half-pixel-center sampling, clamped at the borders.
// Same-size calls return the input unchanged.
inline Image2D resize_bilinear(const Image2D& image, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw ShapeError("resize_bilinear: target size must be >= 1");
    if (image.sx < 1 || image.sy < 1) throw ShapeError("resize_bilinear: empty source image");
    if (out_w == image.sx && out_h == image.sy) return image;

    Image2D out(out_w, out_h);
    const double sx_ratio = static_cast<double>(image.sx) / out_w;
    const double sy_ratio = static_cast<double>(image.sy) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy_ratio - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.sy - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.sy - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx_ratio - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.sx - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.sx - 1);
            const double wx = fx - x0;
            const double top = image.at(x0, y0) * (1.0 - wx) + image.at(x1, y0) * wx;
            const double bot = image.at(x0, y1) * (1.0 - wx) + image.at(x1, y1) * wx;
            out.at(x, y) = static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

// The three truncation channels, equalized, then resized (in that order:
// resizing equalized values keeps every channel inside [0,1]).
inline PreprocessedSlice make_input(const Image2D& image, int size) {
    if (image.data.empty()) throw ShapeError("make_input: empty image");
    PreprocessedSlice slice;
    slice.channels = Tensor<float>({3, size, size});
    const float fractions[3] = {0.6f, 0.8f, 1.0f};
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int c = 0; c < 3; ++c) {
        Image2D chan = resize_bilinear(equalize(truncate(image, fractions[c])), size, size);
        std::copy_n(chan.data.begin(), plane, slice.channels.v.begin() + c * plane);
    }
    return slice;
}

namespace preprocess_detail {

// Rotation about the image center, bilinear, zero padding outside.
inline Image2D rotate_bilinear(const Image2D& image, double angle_deg) {
    Image2D out(image.sx, image.sy);
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cx = (image.sx - 1) * 0.5;
    const double cy = (image.sy - 1) * 0.5;
    for (int y = 0; y < image.sy; ++y) {
        for (int x = 0; x < image.sx; ++x) {
            // inverse-rotate the target coordinate into the source frame
            const double dx = x - cx, dy = y - cy;
            const double fx = cx + ca * dx + sa * dy;
            const double fy = cy - sa * dx + ca * dy;
            const int x0 = static_cast<int>(std::floor(fx));
            const int y0 = static_cast<int>(std::floor(fy));
            const double wx = fx - x0, wy = fy - y0;
            double acc = 0.0;
            for (int oy = 0; oy < 2; ++oy) {
                for (int ox = 0; ox < 2; ++ox) {
                    const int px = x0 + ox, py = y0 + oy;
                    if (px < 0 || px >= image.sx || py < 0 || py >= image.sy) continue;
                    const double w = (ox ? wx : 1.0 - wx) * (oy ? wy : 1.0 - wy);
                    acc += w * image.at(px, py);
                }
            }
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

inline Image2D crop(const Image2D& image, int x0, int y0, int w, int h) {
    Image2D out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = image.at(x0 + x, y0 + y);
    return out;
}

} // namespace preprocess_detail

// Training augmentation: small random rotation, then a random crop with per-
// axis scale in [crop_scale_min, 1], then resize back to the input size.
// Deterministic for a given rng state.
inline Image2D augment(const Image2D& image, const AugmentConfig& config, Rng& rng) {
    config.validate();
    if (!config.enabled) return image;

    const double angle = uniform_range(rng, -config.max_rotation_deg, config.max_rotation_deg);
    Image2D work = preprocess_detail::rotate_bilinear(image, angle);

    const double fw = uniform_range(rng, config.crop_scale_min, 1.0);
    const double fh = uniform_range(rng, config.crop_scale_min, 1.0);
    const int cw = std::clamp(static_cast<int>(std::lround(fw * image.sx)), 1, image.sx);
    const int ch = std::clamp(static_cast<int>(std::lround(fh * image.sy)), 1, image.sy);
    const int x0 = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(image.sx - cw + 1)));
    const int y0 = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(image.sy - ch + 1)));
    if (cw != image.sx || ch != image.sy)
        work = preprocess_detail::crop(work, x0, y0, cw, ch);
    return resize_bilinear(work, image.sx, image.sy);
}

} // namespace orient
