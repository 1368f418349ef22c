// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "matforge/core/errors.h"
#include "matforge/geom/camera.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/render/render.h"
#include "test_util.h"

using namespace matforge;
using namespace matforge::render;
using testutil::make_sphere_mesh;

namespace {

// Independent transcription of the direct-lighting sum: inverse-square
// falloff with the 0.1 distance clamp over a hand-written Cook-Torrance.
Vec3 oracle_brdf(const Vec3& n, const Vec3& wi, const Vec3& wo, const Vec3& albedo,
                 double roughness, double metallic) {
    Vec3 h = normalize(wi + wo);
    double alpha = roughness * roughness;
    double nh = dot(n, h);
    double denom = nh * nh * (alpha * alpha - 1.0) + 1.0;
    double d = alpha * alpha / (M_PI * denom * denom);
    double nwi = dot(n, wi), nwo = dot(n, wo), woh = dot(wo, h);
    double g = std::min(1.0, std::min(2.0 * nh * nwo / woh, 2.0 * nh * nwi / woh));
    Vec3 f0 = albedo * metallic + Vec3{1, 1, 1} * (0.04 * (1.0 - metallic));
    Vec3 f = f0 + (Vec3{1, 1, 1} - f0) * std::pow(1.0 - woh, 5.0);
    Vec3 spec = f * (d * g / (4.0 * nwi * nwo));
    return albedo * ((1.0 - metallic) / M_PI) + spec;
}

Vec3 oracle_shade(const Vec3& n, const Vec3& p, const Vec3& eye,
                  const brdf::MaterialSample& mat, const std::vector<PointLight>& lights) {
    Vec3 wo = normalize(eye - p);
    if (dot(n, wo) <= 0.0) return {};
    Vec3 total{};
    for (const PointLight& l : lights) {
        Vec3 to_light = l.position - p;
        double dist = length(to_light);
        Vec3 wi = to_light / dist;
        double ci = dot(n, wi);
        if (ci <= 0.0) continue;
        double falloff = l.intensity / (std::max(dist, 0.1) * std::max(dist, 0.1));
        Vec3 f = oracle_brdf(n, wi, wo, mat.albedo,
                             std::max(mat.roughness, brdf::kMinRoughness), mat.metallic);
        total += f * l.color * (falloff * ci);
    }
    return total;
}

geom::GBuffer sphere_gbuffer(int res = 48) {
    geom::Camera cam;
    cam.width = res;
    cam.height = res;
    return rasterize_gbuffer(make_sphere_mesh(), cam);
}

}  // namespace

TEST_CASE("sample_lights stays in its configured ranges") {
    for (uint64_t seed : {0ull, 1ull, 99ull, 54321ull}) {
        auto lights = sample_lights(seed);
        REQUIRE(lights.size() >= 3);
        REQUIRE(lights.size() <= 10);
        for (const PointLight& l : lights) {
            CHECK(l.intensity >= 1.0);
            CHECK(l.intensity <= 10.0);
            double r = length(l.position);
            CHECK(r >= 2.0);
            CHECK(r <= 4.0);
            CHECK(l.color.x == 1.0);
        }
    }
}

TEST_CASE("sample_lights is deterministic in the seed") {
    auto a = sample_lights(1234);
    auto b = sample_lights(1234);
    REQUIRE(a.size() == b.size());
    CHECK(light_list_hash(a) == light_list_hash(b));
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].position == b[i].position);
        CHECK(a[i].intensity == b[i].intensity);
    }
    CHECK(light_list_hash(sample_lights(1235)) != light_list_hash(a));
}

TEST_CASE("sample_lights light count is uniform over its range") {
    // chi-squared over {3..10}, 7 degrees of freedom, p = 0.01 critical 18.475
    const int trials = 10000;
    int hist[8] = {};
    for (int s = 0; s < trials; ++s) hist[sample_lights(uint64_t(s)).size() - 3]++;
    double expected = trials / 8.0;
    double chi2 = 0.0;
    for (int k = 0; k < 8; ++k) {
        double d = hist[k] - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 < 18.475);
}

TEST_CASE("shade_pixel with no lights is black") {
    brdf::MaterialSample mat{{0.5, 0.5, 0.5}, 0.5, 0.0};
    Vec3 out = shade_pixel({0, 0, 1}, {0, 0, 0}, {0, 0, 2}, mat, {});
    CHECK(length(out) == 0.0);
}

TEST_CASE("shade_pixel head-on diffuse unit case") {
    // light at distance 1 along the normal with intensity pi on a white
    // Lambertian surface returns exactly (1,1,1)
    brdf::MaterialSample mat{{1, 1, 1}, 0.5, 0.0};
    std::vector<PointLight> lights{{{0, 0, 1}, M_PI, {1, 1, 1}}};
    Vec3 out = shade_pixel({0, 0, 1}, {0, 0, 0}, {0, 0, 2}, mat, lights, false);
    CHECK(out.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shade_pixel culls lights and viewers below the horizon") {
    brdf::MaterialSample mat{{1, 1, 1}, 0.5, 0.0};
    std::vector<PointLight> below{{{0, 0, -1}, 5.0, {1, 1, 1}}};
    CHECK(length(shade_pixel({0, 0, 1}, {}, {0, 0, 2}, mat, below)) == 0.0);
    std::vector<PointLight> above{{{0, 0, 1}, 5.0, {1, 1, 1}}};
    CHECK(length(shade_pixel({0, 0, 1}, {}, {0, 0, -2}, mat, above)) == 0.0);
}

TEST_CASE("shade_pixel agrees with an independent transcription") {
    Rng rng(21, 3);
    for (int i = 0; i < 300; ++i) {
        Vec3 n = normalize({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)});
        Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 eye = p + n * rng.uniform(0.5, 3.0) +
                   Vec3{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0};
        brdf::MaterialSample mat{{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                                  rng.uniform(0.05, 0.95)},
                                 rng.uniform(0.1, 0.95), rng.uniform(0, 1)};
        auto lights = sample_lights(uint64_t(i), {});
        Vec3 got = shade_pixel(n, p, eye, mat, lights);
        Vec3 want = oracle_shade(n, p, eye, mat, lights);
        REQUIRE(testutil::rel_err(got.x, want.x, 1e-9) < 1e-12);
        REQUIRE(testutil::rel_err(got.y, want.y, 1e-9) < 1e-12);
        REQUIRE(testutil::rel_err(got.z, want.z, 1e-9) < 1e-12);
    }
}

TEST_CASE("material_at clamps roughness into its valid range") {
    MaterialMaps maps;
    maps.albedo = Image3(2, 1, {0.5, 0.25, 0.125});
    maps.roughness = Image1(2, 1, 0.0);
    maps.metallic = Image1(2, 1, 0.5);
    maps.roughness.at(1, 0) = 2.0;
    CHECK(material_at(maps, 0, 0).roughness == brdf::kMinRoughness);
    CHECK(material_at(maps, 1, 0).roughness == 1.0);
    CHECK(material_at(maps, 0, 0).albedo.x == 0.5);
}

TEST_CASE("render_image of black Lambertian materials is black") {
    geom::GBuffer g = sphere_gbuffer();
    MaterialMaps maps;
    maps.albedo = Image3(g.width, g.height, {0, 0, 0});
    maps.roughness = Image1(g.width, g.height, 0.5);
    maps.metallic = Image1(g.width, g.height, 0.0);
    auto lights = sample_lights(7);
    RadianceImage img = render_image(g, maps, lights, false);
    for (const Vec3& px : img.rgb.pixels) CHECK(length(px) == 0.0);
}

TEST_CASE("render_image masked pixels stay zero and mask matches the gbuffer") {
    geom::GBuffer g = sphere_gbuffer();
    MaterialMaps maps = testutil::random_materials(g.width, g.height, 5);
    RadianceImage img = render_image(g, maps, sample_lights(3));
    REQUIRE(img.mask.pixels == g.mask.pixels);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (!g.covered(x, y)) REQUIRE(length(img.rgb.at(x, y)) == 0.0);
}

TEST_CASE("render_image is linear in light intensity") {
    geom::GBuffer g = sphere_gbuffer();
    MaterialMaps maps = testutil::random_materials(g.width, g.height, 8);
    auto lights = sample_lights(11);
    auto doubled = lights;
    for (PointLight& l : doubled) l.intensity *= 2.0;
    RadianceImage a = render_image(g, maps, lights);
    RadianceImage b = render_image(g, maps, doubled);
    for (size_t i = 0; i < a.rgb.pixels.size(); ++i) {
        REQUIRE(b.rgb.pixels[i].x == 2.0 * a.rgb.pixels[i].x);
        REQUIRE(b.rgb.pixels[i].y == 2.0 * a.rgb.pixels[i].y);
        REQUIRE(b.rgb.pixels[i].z == 2.0 * a.rgb.pixels[i].z);
    }
}

TEST_CASE("render_image doubles exactly when a light is repeated") {
    geom::GBuffer g = sphere_gbuffer();
    MaterialMaps maps = testutil::random_materials(g.width, g.height, 9);
    std::vector<PointLight> one{{{1.5, 2.0, 1.0}, 4.0, {1, 1, 1}}};
    std::vector<PointLight> two{one[0], one[0]};
    RadianceImage a = render_image(g, maps, one);
    RadianceImage b = render_image(g, maps, two);
    for (size_t i = 0; i < a.rgb.pixels.size(); ++i)
        REQUIRE(b.rgb.pixels[i].x == 2.0 * a.rgb.pixels[i].x);

    std::vector<PointLight> three{one[0], one[0], one[0]};
    RadianceImage c = render_image(g, maps, three);
    for (size_t i = 0; i < a.rgb.pixels.size(); ++i)
        REQUIRE(std::abs(c.rgb.pixels[i].x - 3.0 * a.rgb.pixels[i].x) <=
                1e-12 * std::abs(c.rgb.pixels[i].x));
}

TEST_CASE("render_image matches a per-pixel oracle on the sphere fixture") {
    geom::GBuffer g = sphere_gbuffer();
    MaterialMaps maps = testutil::synth_materials(g);
    auto lights = sample_lights(99);
    RadianceImage img = render_image(g, maps, lights);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            if (!g.covered(x, y)) continue;
            Vec3 want = oracle_shade(g.normal.at(x, y), g.position.at(x, y), g.eye,
                                     material_at(maps, x, y), lights);
            Vec3 got = img.rgb.at(x, y);
            REQUIRE(std::abs(got.x - want.x) < 1e-6);
            REQUIRE(std::abs(got.y - want.y) < 1e-6);
            REQUIRE(std::abs(got.z - want.z) < 1e-6);
        }
}

TEST_CASE("pbr_loss vanishes with zero gradient when prediction equals truth") {
    geom::GBuffer g = sphere_gbuffer(24);
    MaterialMaps maps = testutil::random_materials(g.width, g.height, 15);
    auto lights = sample_lights(2);
    PbrLossResult res = pbr_loss(maps, maps, g, lights);
    CHECK(res.loss == 0.0);
    for (const Vec3& v : res.d_albedo.pixels) CHECK(length(v) == 0.0);
    for (double v : res.d_roughness.pixels) CHECK(v == 0.0);
    for (double v : res.d_metallic.pixels) CHECK(v == 0.0);
}

TEST_CASE("pbr_loss value is symmetric under swapping prediction and truth") {
    geom::GBuffer g = sphere_gbuffer(24);
    MaterialMaps pred = testutil::random_materials(g.width, g.height, 16);
    MaterialMaps gt = testutil::random_materials(g.width, g.height, 17);
    auto lights = sample_lights(4);
    for (auto norm : {LossNorm::kL1, LossNorm::kL2}) {
        double a = pbr_loss(pred, gt, g, lights, norm).loss;
        double b = pbr_loss(gt, pred, g, lights, norm).loss;
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
        CHECK(a > 0.0);
    }
}

TEST_CASE("pbr_loss renders both sides under the identical light list") {
    geom::GBuffer g = sphere_gbuffer(24);
    MaterialMaps pred = testutil::random_materials(g.width, g.height, 18);
    MaterialMaps gt = testutil::random_materials(g.width, g.height, 19);
    auto lights = sample_lights(6);
    PbrLossResult res = pbr_loss(pred, gt, g, lights);
    CHECK(res.pred_light_hash == res.gt_light_hash);
    CHECK(res.pred_light_hash == light_list_hash(lights));
}

TEST_CASE("pbr_loss rejects a gbuffer with no covered pixels") {
    geom::GBuffer g = geom::GBuffer::make(8, 8);
    MaterialMaps maps = testutil::random_materials(8, 8, 20);
    CHECK_THROWS_AS(pbr_loss(maps, maps, g, sample_lights(1)), std::invalid_argument);
    CHECK_THROWS_AS(render_image(g, testutil::random_materials(4, 4, 21), {}),
                    std::invalid_argument);
}

TEST_CASE("pbr_loss gradients match finite differences on 16x16 maps") {
    geom::Camera cam;
    cam.width = 16;
    cam.height = 16;
    geom::GBuffer g = rasterize_gbuffer(make_sphere_mesh(), cam);
    REQUIRE(g.covered_count() > 40);
    MaterialMaps pred = testutil::random_materials(16, 16, 30);
    MaterialMaps gt = testutil::random_materials(16, 16, 31);
    auto lights = sample_lights(8);
    const double h = 1e-5;

    for (auto norm : {LossNorm::kL1, LossNorm::kL2}) {
        PbrLossResult res = pbr_loss(pred, gt, g, lights, norm);
        Rng rng(40, 2);
        int checked = 0;
        while (checked < 60) {
            int x = int(rng.uniform_u32(16));
            int y = int(rng.uniform_u32(16));
            if (!g.covered(x, y)) continue;
            int ch = int(rng.uniform_u32(5));
            auto poke = [&](MaterialMaps& m, double d) -> double* {
                switch (ch) {
                    case 0: m.albedo.at(x, y).x += d; return &m.albedo.at(x, y).x;
                    case 1: m.albedo.at(x, y).y += d; return &m.albedo.at(x, y).y;
                    case 2: m.albedo.at(x, y).z += d; return &m.albedo.at(x, y).z;
                    case 3: m.roughness.at(x, y) += d; return &m.roughness.at(x, y);
                    default: m.metallic.at(x, y) += d; return &m.metallic.at(x, y);
                }
            };
            MaterialMaps up = pred, dn = pred;
            poke(up, +h);
            poke(dn, -h);
            double fd = (pbr_loss(up, gt, g, lights, norm).loss -
                         pbr_loss(dn, gt, g, lights, norm).loss) /
                        (2.0 * h);
            double analytic = 0.0;
            switch (ch) {
                case 0: analytic = res.d_albedo.at(x, y).x; break;
                case 1: analytic = res.d_albedo.at(x, y).y; break;
                case 2: analytic = res.d_albedo.at(x, y).z; break;
                case 3: analytic = res.d_roughness.at(x, y); break;
                default: analytic = res.d_metallic.at(x, y); break;
            }
            REQUIRE(testutil::rel_err(analytic, fd) < 1e-4);
            ++checked;
        }
    }
}

TEST_CASE("relight reproduces direct shading through the UV chart") {
    using testutil::make_quad_mesh;
    geom::TriMesh quad = make_quad_mesh();
    MaterialMaps uv_maps;
    uv_maps.albedo = Image3(32, 32, {0.6, 0.4, 0.2});
    uv_maps.roughness = Image1(32, 32, 0.5);
    uv_maps.metallic = Image1(32, 32, 0.3);
    geom::Camera cam;
    cam.width = 48;
    cam.height = 48;
    auto lights = sample_lights(12);
    RadianceImage img = relight(quad, uv_maps, cam, lights);
    geom::GBuffer g = rasterize_gbuffer(quad, cam);
    REQUIRE(img.mask.pixels == g.mask.pixels);
    brdf::MaterialSample mat{{0.6, 0.4, 0.2}, 0.5, 0.3};
    for (int y = 0; y < 48; y += 5)
        for (int x = 0; x < 48; x += 5) {
            if (!g.covered(x, y)) continue;
            Vec3 want =
                shade_pixel(g.normal.at(x, y), g.position.at(x, y), g.eye, mat, lights);
            Vec3 got = img.rgb.at(x, y);
            REQUIRE(std::abs(got.x - want.x) < 1e-9);
            REQUIRE(std::abs(got.y - want.y) < 1e-9);
            REQUIRE(std::abs(got.z - want.z) < 1e-9);
        }
}

TEST_CASE("relight with no lights is black") {
    RadianceImage img =
        relight(make_sphere_mesh(), testutil::random_materials(16, 16, 50),
                geom::Camera{}, {});
    for (const Vec3& px : img.rgb.pixels) CHECK(length(px) == 0.0);
}

TEST_CASE("sample_environment is deterministic and well-formed") {
    EnvironmentMap env;
    env.latlong = Image3(16, 8, {1.0, 0.5, 0.25});
    auto a = sample_environment(env, 64, 9);
    auto b = sample_environment(env, 64, 9);
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == 64);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(length(a[i].direction) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(a[i].direction == b[i].direction);
        CHECK(a[i].radiance.x >= 0.0);
    }
}

TEST_CASE("relight_env under a zero environment is black") {
    EnvironmentMap env;
    env.latlong = Image3(8, 4, {0, 0, 0});
    RadianceImage img = relight_env(make_sphere_mesh(),
                                    testutil::random_materials(32, 32, 60),
                                    geom::Camera{}, env, 32, 5);
    for (const Vec3& px : img.rgb.pixels) CHECK(length(px) == 0.0);
}

TEST_CASE("relight_env uniform white environment shades a sphere evenly") {
    EnvironmentMap env;
    env.latlong = Image3(32, 16, {1, 1, 1});
    MaterialMaps uv_maps;
    uv_maps.albedo = Image3(16, 16, {0.5, 0.5, 0.5});
    uv_maps.roughness = Image1(16, 16, 1.0);
    uv_maps.metallic = Image1(16, 16, 0.0);
    geom::Camera cam;
    cam.width = 64;
    cam.height = 64;
    geom::TriMesh sphere = make_sphere_mesh(16, 32);
    RadianceImage img = relight_env(sphere, uv_maps, cam, env, 512, 3);
    geom::GBuffer g = rasterize_gbuffer(sphere, cam);

    // interior of the visible disc; toward the rim grazing Fresnel adds its
    // own systematic brightening on top of the MC noise
    double sum = 0.0;
    int count = 0;
    std::vector<double> vals;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (!g.covered(x, y)) continue;
            Vec3 view = normalize(g.eye - g.position.at(x, y));
            if (dot(g.normal.at(x, y), view) < 0.8) continue;
            double v = img.rgb.at(x, y).x;
            sum += v;
            vals.push_back(v);
            ++count;
        }
    REQUIRE(count > 100);
    double mean = sum / count;
    CHECK(mean > 0.1);  // roughly albedo * mean irradiance
    for (double v : vals) CHECK(std::abs(v - mean) / mean < 0.02);
}

TEST_CASE("relight_env is invariant to rotating an axially symmetric environment") {
    // rows constant in longitude; shifting columns is a rotation about the
    // vertical axis, which cannot change a sphere centered on that axis
    EnvironmentMap env;
    env.latlong = Image3(32, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) {
            double lat = (y + 0.5) / 16.0;
            env.latlong.at(x, y) = Vec3{1.5, 1.0, 0.5} * (0.2 + std::pow(1.0 - lat, 3.0));
        }
    EnvironmentMap rotated;
    rotated.latlong = Image3(32, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x)
            rotated.latlong.at(x, y) = env.latlong.at((x + 8) % 32, y);

    MaterialMaps uv_maps;
    uv_maps.albedo = Image3(8, 8, {0.5, 0.5, 0.5});
    uv_maps.roughness = Image1(8, 8, 0.8);
    uv_maps.metallic = Image1(8, 8, 0.2);
    geom::Camera cam;
    cam.width = 48;
    cam.height = 48;
    geom::TriMesh sphere = make_sphere_mesh(16, 32);
    RadianceImage a = relight_env(sphere, uv_maps, cam, env, 512, 7);
    RadianceImage b = relight_env(sphere, uv_maps, cam, rotated, 512, 7);

    double diff = 0.0, scale = 0.0;
    for (size_t i = 0; i < a.rgb.pixels.size(); ++i) {
        diff += std::abs(a.rgb.pixels[i].x - b.rgb.pixels[i].x) +
                std::abs(a.rgb.pixels[i].y - b.rgb.pixels[i].y) +
                std::abs(a.rgb.pixels[i].z - b.rgb.pixels[i].z);
        scale += std::abs(a.rgb.pixels[i].x) + std::abs(a.rgb.pixels[i].y) +
                 std::abs(a.rgb.pixels[i].z);
    }
    REQUIRE(scale > 0.0);
    CHECK(diff / scale < 0.02);
}

TEST_CASE("relight_env is deterministic in the seed") {
    EnvironmentMap env;
    env.latlong = Image3(16, 8, {0.8, 0.9, 1.0});
    MaterialMaps maps = testutil::random_materials(16, 16, 70);
    geom::Camera cam;
    cam.width = 32;
    cam.height = 32;
    geom::TriMesh sphere = make_sphere_mesh();
    RadianceImage a = relight_env(sphere, maps, cam, env, 64, 11);
    RadianceImage b = relight_env(sphere, maps, cam, env, 64, 11);
    for (size_t i = 0; i < a.rgb.pixels.size(); ++i)
        REQUIRE(a.rgb.pixels[i] == b.rgb.pixels[i]);
}
