// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "matforge/core/errors.h"
#include "matforge/core/rng.h"
#include "matforge/io/config.h"
#include "matforge/io/pfm.h"
#include "matforge/io/png.h"
#include "test_util.h"

using namespace matforge;
using namespace matforge::io;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("ConfigFile parses sections, comments, and values") {
    ConfigFile f = ConfigFile::parse(
        "# header comment\n"
        "[schedule]\n"
        "timesteps = 500\n"
        "zero_snr = true ; trailing comment\n"
        "\n"
        "[run]\n"
        "seed=7\n");
    REQUIRE(f.find("schedule", "timesteps") != nullptr);
    CHECK(*f.find("schedule", "timesteps") == "500");
    CHECK(*f.find("schedule", "zero_snr") == "true");
    CHECK(*f.find("run", "seed") == "7");
    CHECK(f.find("run", "missing") == nullptr);
    CHECK(f.find("nope", "seed") == nullptr);
}

TEST_CASE("ConfigFile rejects malformed input with line numbers") {
    CHECK_THROWS_AS(ConfigFile::parse("[a]\nx = 1\nx = 2\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("[unterminated\nx = 1\n"), ParseError);
    CHECK_THROWS_AS(ConfigFile::parse("[a]\njustakey\n"), ParseError);
    try {
        ConfigFile::parse("[a]\nx = 1\nx = 2\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }
    // a key before any section lands in the unnamed section, which the
    // typed config then rejects as unknown
    ConfigFile stray = ConfigFile::parse("seed = 1\n");
    CHECK(stray.find("", "seed") != nullptr);
    CHECK_THROWS_AS(PipelineConfig::from_file(stray), ConfigError);
}

TEST_CASE("PipelineConfig defaults pass validation") {
    PipelineConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.timesteps == 1000);
    CHECK(cfg.sample_steps == 50);
    CHECK(cfg.guidance_base == 6.0);
    CHECK(cfg.view_count == 12);
    CHECK(cfg.zero_snr);
}

TEST_CASE("PipelineConfig reads overrides from a file") {
    ConfigFile f = ConfigFile::parse(
        "[schedule]\ntimesteps = 250\nzero_snr = false\n"
        "[model]\ndim = 32\nlatent_resolution = 16\n"
        "[loss]\npbr_norm = l2\n"
        "[run]\nseed = 99\n");
    PipelineConfig cfg = PipelineConfig::from_file(f);
    CHECK(cfg.timesteps == 250);
    CHECK_FALSE(cfg.zero_snr);
    CHECK(cfg.model_dim == 32);
    CHECK(cfg.latent_resolution == 16);
    CHECK(cfg.pbr_norm == LossNorm::kL2);
    CHECK(cfg.seed == 99);
}

TEST_CASE("PipelineConfig names the offending field") {
    ConfigFile unknown = ConfigFile::parse("[schedule]\nbogus = 1\n");
    try {
        PipelineConfig::from_file(unknown);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("schedule.bogus") != std::string::npos);
    }

    ConfigFile bad_value = ConfigFile::parse("[schedule]\ntimesteps = soon\n");
    try {
        PipelineConfig::from_file(bad_value);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("schedule.timesteps") != std::string::npos);
    }

    PipelineConfig cfg;
    cfg.timesteps = 1;
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("timesteps") != std::string::npos);
    }
}

TEST_CASE("PipelineConfig validate covers representative ranges") {
    auto reject = [](auto&& mutate) {
        PipelineConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    };
    reject([](PipelineConfig& c) { c.beta_start = 0.0; });
    reject([](PipelineConfig& c) { c.beta_end = c.beta_start / 2; });
    reject([](PipelineConfig& c) { c.sample_steps = 0; });
    reject([](PipelineConfig& c) { c.guidance_base = 0.5; });
    reject([](PipelineConfig& c) { c.view_count = 0; });
    reject([](PipelineConfig& c) { c.view_resolution = 0; });
    reject([](PipelineConfig& c) { c.uv_resolution = 0; });
    reject([](PipelineConfig& c) { c.light_count_min = 0; });
    reject([](PipelineConfig& c) { c.light_count_max = 2; });  // below the min
    reject([](PipelineConfig& c) { c.light_intensity_max = 0.5; });
    reject([](PipelineConfig& c) { c.model_dim = 0; });
    reject([](PipelineConfig& c) { c.model_dim = 30; });  // not divisible by heads
    reject([](PipelineConfig& c) { c.latent_resolution = 30; });  // patch mismatch
    reject([](PipelineConfig& c) { c.train_steps = -1; });
    reject([](PipelineConfig& c) { c.learning_rate = 0.0; });
    reject([](PipelineConfig& c) { c.bake_eps_face = 1.5; });
    reject([](PipelineConfig& c) { c.bake_eps_z = 0.0; });
    reject([](PipelineConfig& c) { c.bake_blend_power = -1.0; });
}

TEST_CASE("PFM round trip is bit-exact at float precision") {
    std::string dir = testutil::scratch_dir("io_pfm");
    Rng rng(3, 5);
    Image3 img(7, 5);
    for (Vec3& p : img.pixels)
        p = {rng.normal(), rng.uniform(0, 10), rng.uniform(-4, 4)};
    std::string path = dir + "/c3.pfm";
    write_pfm(path, img);
    CHECK(pfm_channels(path) == 3);
    Image3 back = read_pfm_rgb(path);
    REQUIRE(back.width == 7);
    REQUIRE(back.height == 5);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        CHECK(back.pixels[i].x == double(float(img.pixels[i].x)));
        CHECK(back.pixels[i].y == double(float(img.pixels[i].y)));
        CHECK(back.pixels[i].z == double(float(img.pixels[i].z)));
    }

    // writing the read-back image reproduces the file byte for byte
    std::string path2 = dir + "/c3b.pfm";
    write_pfm(path2, back);
    CHECK(slurp(path) == slurp(path2));

    Image1 gray(4, 3);
    for (double& v : gray.pixels) v = rng.normal();
    std::string gpath = dir + "/c1.pfm";
    write_pfm(gpath, gray);
    CHECK(pfm_channels(gpath) == 1);
    Image1 gback = read_pfm_gray(gpath);
    for (size_t i = 0; i < gray.pixels.size(); ++i)
        CHECK(gback.pixels[i] == double(float(gray.pixels[i])));
    CHECK_THROWS_AS(read_pfm_rgb(gpath), DataError);
    CHECK_THROWS_AS(read_pfm_gray(path), DataError);
}

TEST_CASE("PFM stores rows bottom to top in little-endian floats") {
    std::string dir = testutil::scratch_dir("io_pfm_layout");
    Image1 img(1, 2);
    img.at(0, 0) = 0.25;  // top row
    img.at(0, 1) = 0.5;   // bottom row
    std::string path = dir + "/layout.pfm";
    write_pfm(path, img);
    std::string bytes = slurp(path);
    // header: magic, dims, negative scale for little-endian
    CHECK(bytes.substr(0, 2) == "Pf");
    CHECK(bytes.find("1 2") != std::string::npos);
    CHECK(bytes.find("-1") != std::string::npos);
    REQUIRE(bytes.size() >= 8);
    float first, second;
    std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
    std::memcpy(&second, bytes.data() + bytes.size() - 4, 4);
    CHECK(first == 0.5f);    // bottom row first
    CHECK(second == 0.25f);  // top row last
}

TEST_CASE("PFM reader rejects malformed files") {
    std::string dir = testutil::scratch_dir("io_pfm_bad");
    std::string bad = dir + "/bad.pfm";
    std::ofstream(bad, std::ios::binary) << "P6\n1 1\n-1.0\nxxxx";
    CHECK_THROWS_AS(read_pfm_rgb(bad), DataError);
    std::string trunc = dir + "/trunc.pfm";
    std::ofstream(trunc, std::ios::binary) << "PF\n2 2\n-1.0\nxx";
    CHECK_THROWS_AS(read_pfm_rgb(trunc), DataError);
    CHECK_THROWS_AS(read_pfm_rgb(dir + "/missing.pfm"), DataError);
}

TEST_CASE("PNG eight-bit payload round trips exactly") {
    std::string dir = testutil::scratch_dir("io_png");
    Rng rng(9, 2);
    for (int channels : {1, 3}) {
        Png8 img;
        img.width = 9;
        img.height = 4;
        img.channels = channels;
        img.pixels.resize(size_t(9 * 4 * channels));
        for (uint8_t& b : img.pixels) b = uint8_t(rng.uniform_u32(256));
        std::string path = dir + "/c" + std::to_string(channels) + ".png";
        write_png(path, img);
        Png8 back = read_png(path);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.channels == channels);
        CHECK(back.pixels == img.pixels);
    }
}

TEST_CASE("gamma transfer is an exact byte round trip") {
    CHECK(encode_gamma8(0.0) == 0);
    CHECK(encode_gamma8(1.0) == 255);
    CHECK(encode_gamma8(2.0) == 255);  // clamped
    CHECK(encode_gamma8(-1.0) == 0);
    for (int b = 0; b < 256; ++b)
        REQUIRE(encode_gamma8(decode_gamma8(uint8_t(b))) == b);
}

TEST_CASE("linear PNG writer quantizes through the gamma curve") {
    std::string dir = testutil::scratch_dir("io_png_rgb");
    Image3 linear(5, 3);
    Rng rng(11, 7);
    for (Vec3& p : linear.pixels)
        p = {rng.uniform(), rng.uniform(), rng.uniform()};
    std::string path = dir + "/lin.png";
    write_png_rgb(path, linear);
    Image3 back = read_png_rgb(path);
    for (size_t i = 0; i < linear.pixels.size(); ++i) {
        CHECK(back.pixels[i].x == decode_gamma8(encode_gamma8(linear.pixels[i].x)));
        CHECK(back.pixels[i].y == decode_gamma8(encode_gamma8(linear.pixels[i].y)));
        CHECK(back.pixels[i].z == decode_gamma8(encode_gamma8(linear.pixels[i].z)));
    }
}
