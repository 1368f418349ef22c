// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "matforge/core/vec.h"

namespace matforge {

/// Row-major pixel grid, row 0 at the top.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> pixels;

    Image() = default;
    Image(int w, int h, T fill = T{}) : width(w), height(h), pixels(size_t(w) * size_t(h), fill) {}

    bool empty() const { return width == 0 || height == 0; }
    size_t count() const { return pixels.size(); }

    T& at(int x, int y) { return pixels[size_t(y) * width + x]; }
    const T& at(int x, int y) const { return pixels[size_t(y) * width + x]; }

    bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    bool same_size(const Image& other) const {
        return width == other.width && height == other.height;
    }
};

using Image1 = Image<double>;
using Image3 = Image<Vec3>;
using ImageMask = Image<uint8_t>;

/// Bilinear sample with clamp-to-edge, (u, v) in [0,1]^2, v = 0 at the top row.
template <typename T>
T sample_bilinear(const Image<T>& img, double u, double v) {
    double fx = u * img.width - 0.5;
    double fy = v * img.height - 0.5;
    int x0 = int(std::floor(fx));
    int y0 = int(std::floor(fy));
    double tx = fx - x0;
    double ty = fy - y0;
    auto fetch = [&](int x, int y) -> const T& {
        x = std::clamp(x, 0, img.width - 1);
        y = std::clamp(y, 0, img.height - 1);
        return img.at(x, y);
    };
    T a = fetch(x0, y0);
    T b = fetch(x0 + 1, y0);
    T c = fetch(x0, y0 + 1);
    T d = fetch(x0 + 1, y0 + 1);
    T top = a * (1.0 - tx) + b * tx;
    T bot = c * (1.0 - tx) + d * tx;
    return top * (1.0 - ty) + bot * ty;
}

}  // namespace matforge
