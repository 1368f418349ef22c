// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/io/pfm.h"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "matforge/core/errors.h"

namespace matforge::io {

namespace {

void byteswap4(char* p) {
    std::swap(p[0], p[3]);
    std::swap(p[1], p[2]);
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return bytes;
}

struct PfmHeader {
    int channels = 0;
    int width = 0;
    int height = 0;
    bool little_endian = false;
    size_t payload_offset = 0;
};

PfmHeader parse_header(const std::vector<char>& bytes, const std::string& path) {
    PfmHeader h;
    if (bytes.size() < 2) throw DataError(path + ": not a PFM file");
    if (bytes[0] != 'P' || (bytes[1] != 'F' && bytes[1] != 'f')) {
        throw DataError(path + ": not a PFM file (bad magic)");
    }
    h.channels = bytes[1] == 'F' ? 3 : 1;

    // Three whitespace-separated tokens follow the magic: width, height, scale.
    size_t pos = 2;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace((unsigned char)bytes[pos])) ++pos;
        size_t start = pos;
        while (pos < bytes.size() && !std::isspace((unsigned char)bytes[pos])) ++pos;
        if (start == pos) throw DataError(path + ": truncated PFM header");
        return std::string(bytes.begin() + start, bytes.begin() + pos);
    };
    try {
        h.width = std::stoi(next_token());
        h.height = std::stoi(next_token());
        double scale = std::stod(next_token());
        h.little_endian = scale < 0.0;
    } catch (const std::logic_error&) {
        throw DataError(path + ": malformed PFM header");
    }
    if (h.width <= 0 || h.height <= 0) throw DataError(path + ": bad PFM dimensions");
    if (pos >= bytes.size()) throw DataError(path + ": truncated PFM header");
    h.payload_offset = pos + 1;  // single whitespace byte separates header and raster
    return h;
}

std::vector<float> read_samples(const std::string& path, const PfmHeader& h,
                                const std::vector<char>& bytes) {
    size_t count = size_t(h.width) * h.height * h.channels;
    if (bytes.size() != h.payload_offset + count * 4) {
        throw DataError(path + ": PFM payload size mismatch");
    }
    std::vector<float> samples(count);
    std::memcpy(samples.data(), bytes.data() + h.payload_offset, count * 4);
    bool host_little = std::endian::native == std::endian::little;
    if (h.little_endian != host_little) {
        for (float& f : samples) byteswap4(reinterpret_cast<char*>(&f));
    }
    return samples;
}

void write_raw(const std::string& path, int width, int height, int channels,
               const std::vector<float>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << (channels == 3 ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
    std::vector<float> row(size_t(width) * channels);
    bool host_little = std::endian::native == std::endian::little;
    for (int y = height - 1; y >= 0; --y) {  // bottom row first
        std::memcpy(row.data(), samples.data() + size_t(y) * width * channels,
                    row.size() * 4);
        if (!host_little) {
            for (float& f : row) byteswap4(reinterpret_cast<char*>(&f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size() * 4);
    }
    if (!out) throw DataError("write failure on " + path);
}

}  // namespace

void write_pfm(const std::string& path, const Image3& img) {
    std::vector<float> samples(size_t(img.width) * img.height * 3);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        samples[i * 3 + 0] = float(img.pixels[i].x);
        samples[i * 3 + 1] = float(img.pixels[i].y);
        samples[i * 3 + 2] = float(img.pixels[i].z);
    }
    write_raw(path, img.width, img.height, 3, samples);
}

void write_pfm(const std::string& path, const Image1& img) {
    std::vector<float> samples(img.pixels.begin(), img.pixels.end());
    write_raw(path, img.width, img.height, 1, samples);
}

int pfm_channels(const std::string& path) {
    std::vector<char> bytes = slurp(path);
    return parse_header(bytes, path).channels;
}

Image3 read_pfm_rgb(const std::string& path) {
    std::vector<char> bytes = slurp(path);
    PfmHeader h = parse_header(bytes, path);
    if (h.channels != 3) throw DataError(path + ": expected 3-channel PFM");
    std::vector<float> samples = read_samples(path, h, bytes);
    Image3 img(h.width, h.height);
    for (int y = 0; y < h.height; ++y) {
        const float* row = samples.data() + size_t(h.height - 1 - y) * h.width * 3;
        for (int x = 0; x < h.width; ++x) {
            img.at(x, y) = {row[x * 3], row[x * 3 + 1], row[x * 3 + 2]};
        }
    }
    return img;
}

Image1 read_pfm_gray(const std::string& path) {
    std::vector<char> bytes = slurp(path);
    PfmHeader h = parse_header(bytes, path);
    if (h.channels != 1) throw DataError(path + ": expected 1-channel PFM");
    std::vector<float> samples = read_samples(path, h, bytes);
    Image1 img(h.width, h.height);
    for (int y = 0; y < h.height; ++y) {
        const float* row = samples.data() + size_t(h.height - 1 - y) * h.width;
        for (int x = 0; x < h.width; ++x) img.at(x, y) = row[x];
    }
    return img;
}

}  // namespace matforge::io
