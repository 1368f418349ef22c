// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/io/png.h"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "matforge/core/errors.h"

namespace matforge::io {

namespace {

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_u32(out, uint32_t(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = uint32_t(
        ::crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    put_u32(out, crc);
}

std::vector<uint8_t> deflate_bytes(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> packed(bound);
    if (compress2(packed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK) {
        throw DataError("zlib compression failed");
    }
    packed.resize(bound);
    return packed;
}

std::vector<uint8_t> inflate_bytes(const std::vector<uint8_t>& packed, size_t expected) {
    std::vector<uint8_t> raw(expected);
    uLongf len = uLongf(expected);
    int rc = uncompress(raw.data(), &len, packed.data(), uLong(packed.size()));
    if (rc != Z_OK || len != expected) throw DataError("PNG: corrupt compressed data");
    return raw;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Png8& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw DataError("PNG: only gray and RGB supported");
    }
    size_t stride = size_t(img.width) * img.channels;
    if (img.pixels.size() != stride * img.height || img.width <= 0 || img.height <= 0) {
        throw DataError("PNG: pixel buffer does not match dimensions");
    }

    // Filter type 0 on every scanline keeps the writer trivial to verify.
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.pixels.data() + size_t(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, uint32_t(img.width));
    put_u32(ihdr, uint32_t(img.height));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 0);        // color type
    ihdr.push_back(0);                                // compression
    ihdr.push_back(0);                                // filter method
    ihdr.push_back(0);                                // no interlace

    std::vector<uint8_t> file(kSignature, kSignature + 8);
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", deflate_bytes(raw));
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(file.data()), std::streamsize(file.size()));
    if (!out) throw DataError("write failure on " + path);
}

Png8 read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
        throw DataError(path + ": not a PNG file");
    }

    Png8 img;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + size_t(len) > bytes.size()) throw DataError(path + ": truncated PNG");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError(path + ": bad IHDR");
            img.width = int(get_u32(payload));
            img.height = int(get_u32(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0) {
                throw DataError(path + ": unsupported PNG format (need 8-bit gray/RGB)");
            }
            img.channels = color == 2 ? 3 : 1;
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + size_t(len);  // ancillary chunks skipped
    }
    if (!saw_ihdr || idat.empty()) throw DataError(path + ": missing PNG chunks");
    if (img.width <= 0 || img.height <= 0) throw DataError(path + ": bad PNG dimensions");

    size_t stride = size_t(img.width) * img.channels;
    std::vector<uint8_t> raw = inflate_bytes(idat, (stride + 1) * img.height);

    img.pixels.resize(stride * img.height);
    int bpp = img.channels;
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < img.height; ++y) {
        uint8_t filter = raw[size_t(y) * (stride + 1)];
        const uint8_t* src = raw.data() + size_t(y) * (stride + 1) + 1;
        uint8_t* dst = img.pixels.data() + size_t(y) * stride;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= size_t(bpp) ? dst[i - bpp] : 0;
            int b = prev[i];
            int c = i >= size_t(bpp) ? prev[i - bpp] : 0;
            int recon;
            switch (filter) {
                case 0: recon = src[i]; break;
                case 1: recon = src[i] + a; break;
                case 2: recon = src[i] + b; break;
                case 3: recon = src[i] + (a + b) / 2; break;
                case 4: recon = src[i] + paeth(a, b, c); break;
                default: throw DataError(path + ": unknown PNG filter type");
            }
            dst[i] = uint8_t(recon);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

uint8_t encode_gamma8(double linear) {
    double v = std::clamp(linear, 0.0, 1.0);
    return uint8_t(std::lround(std::pow(v, 1.0 / 2.2) * 255.0));
}

double decode_gamma8(uint8_t value) {
    return std::pow(double(value) / 255.0, 2.2);
}

void write_png_rgb(const std::string& path, const Image3& linear) {
    Png8 img;
    img.width = linear.width;
    img.height = linear.height;
    img.channels = 3;
    img.pixels.resize(size_t(img.width) * img.height * 3);
    for (size_t i = 0; i < linear.pixels.size(); ++i) {
        img.pixels[i * 3 + 0] = encode_gamma8(linear.pixels[i].x);
        img.pixels[i * 3 + 1] = encode_gamma8(linear.pixels[i].y);
        img.pixels[i * 3 + 2] = encode_gamma8(linear.pixels[i].z);
    }
    write_png(path, img);
}

Image3 read_png_rgb(const std::string& path) {
    Png8 img = read_png(path);
    if (img.channels != 3) throw DataError(path + ": expected RGB PNG");
    Image3 out(img.width, img.height);
    for (size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = {decode_gamma8(img.pixels[i * 3 + 0]),
                         decode_gamma8(img.pixels[i * 3 + 1]),
                         decode_gamma8(img.pixels[i * 3 + 2])};
    }
    return out;
}

}  // namespace matforge::io
