// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "matforge/core/image.h"

namespace matforge::io {

/// Portable FloatMap. `PF` = 3-channel, `Pf` = 1-channel; the scale line's
/// sign encodes endianness (negative = little-endian); rows are stored
/// bottom-to-top as 32-bit floats. Values written from our double images are
/// narrowed to float; reading back is bit-exact at float precision.
void write_pfm(const std::string& path, const Image3& img);
void write_pfm(const std::string& path, const Image1& img);

int pfm_channels(const std::string& path);
Image3 read_pfm_rgb(const std::string& path);
Image1 read_pfm_gray(const std::string& path);

}  // namespace matforge::io
