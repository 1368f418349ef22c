// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matforge/core/image.h"

namespace matforge::io {

/// 8-bit image payload, row-major top-to-bottom, interleaved channels.
/// channels = 1 (gray) or 3 (RGB).
struct Png8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;
};

void write_png(const std::string& path, const Png8& img);
Png8 read_png(const std::string& path);

/// Display transfer: clamp to [0,1] and gamma-2.2 encode. decode inverts it;
/// encode(decode(b)) == b for every byte.
uint8_t encode_gamma8(double linear);
double decode_gamma8(uint8_t value);

/// Gamma-encodes a linear-radiance image and writes RGB8.
void write_png_rgb(const std::string& path, const Image3& linear);
/// Decodes an 8-bit RGB PNG back to linear radiance in [0,1].
Image3 read_png_rgb(const std::string& path);

}  // namespace matforge::io
