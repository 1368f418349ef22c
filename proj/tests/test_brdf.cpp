// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "matforge/brdf/brdf.h"
#include "matforge/core/rng.h"
#include "test_util.h"

using namespace matforge;
using namespace matforge::brdf;

namespace {

// Straight-line transcription of the reflectance formulas, written
// independently of the library so agreement is meaningful.
Vec3 oracle_eval(const Vec3& n, const Vec3& wi, const Vec3& wo, const Vec3& albedo,
                 double roughness, double metallic, bool with_specular) {
    Vec3 h = normalize(wi + wo);
    double alpha = roughness * roughness;
    double ndoth = dot(n, h);
    double denom = ndoth * ndoth * (alpha * alpha - 1.0) + 1.0;
    double d = alpha * alpha / (M_PI * denom * denom);
    double ndotwi = dot(n, wi);
    double ndotwo = dot(n, wo);
    double wodoth = dot(wo, h);
    double g = std::min(1.0, std::min(2.0 * ndoth * ndotwo / wodoth,
                                      2.0 * ndoth * ndotwi / wodoth));
    Vec3 f0 = albedo * metallic + Vec3{1, 1, 1} * (0.04 * (1.0 - metallic));
    double sw = std::pow(1.0 - wodoth, 5.0);
    Vec3 f = f0 + (Vec3{1, 1, 1} - f0) * sw;
    Vec3 spec = f * (d * g / (4.0 * ndotwi * ndotwo));
    Vec3 diffuse = albedo * ((1.0 - metallic) / M_PI);
    return with_specular ? diffuse + spec : diffuse;
}

ShadingPoint random_point(Rng& rng, double min_cos = 0.1) {
    auto hemi = [&](double min_z) {
        double z = rng.uniform(min_z, 0.999);
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        return Vec3{s * std::cos(phi), s * std::sin(phi), z};
    };
    ShadingPoint sp;
    sp.n = {0, 0, 1};
    sp.wi = hemi(min_cos);
    sp.wo = hemi(min_cos);
    return sp;
}

MaterialSample random_material(Rng& rng) {
    MaterialSample mat;
    mat.albedo = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    mat.roughness = rng.uniform(0.1, 0.95);
    mat.metallic = rng.uniform(0.05, 0.95);
    return mat;
}

}  // namespace

TEST_CASE("half_vector matches hand values") {
    Vec3 h = half_vector({0, 0, 1}, {0, 0, 1});
    CHECK(h.z == doctest::Approx(1.0).epsilon(1e-12));
    h = half_vector({1, 0, 0}, {0, 1, 0});
    CHECK(h.x == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(h.y == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(h.z == doctest::Approx(0.0));
    CHECK_THROWS_AS(half_vector({0, 0, 1}, {0, 0, -1}), std::domain_error);
}

TEST_CASE("ndf_ggx spot values are exact") {
    CHECK(std::abs(ndf_ggx(1.0, 1.0) - 1.0 / M_PI) < 1e-12);
    CHECK(std::abs(ndf_ggx(0.0, 0.5) - 0.0625 / M_PI) < 1e-12);
}

TEST_CASE("ndf_ggx integrates to one over the projected hemisphere") {
    // Monte-Carlo of integral D(n.h) cos dOmega with uniform hemisphere samples.
    for (double r : {0.3, 0.6, 1.0}) {
        Rng rng(uint64_t(r * 1000), 11);
        const int n = 1'000'000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            double z = rng.uniform();  // uniform z is uniform hemisphere solid angle
            sum += ndf_ggx(z, r) * z;
        }
        double integral = 2.0 * M_PI * sum / n;
        CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("geometry_term matches hand values and rejects bad domain") {
    CHECK(geometry_term(1, 1, 1, 1) == doctest::Approx(1.0));
    CHECK(geometry_term(0.1, 1, 1, 1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(geometry_term(0.6, 0.9, 0.5, 0.8) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(geometry_term(0.5, 0.5, 0.5, 0.0), std::domain_error);
    CHECK_THROWS_AS(geometry_term(0.5, 0.5, 0.5, -0.2), std::domain_error);
}

TEST_CASE("fresnel_schlick endpoints and midpoint") {
    Vec3 f0{0.04, 0.04, 0.04};
    CHECK(fresnel_schlick(1.0, f0).x == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(fresnel_schlick(0.0, f0).x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fresnel_schlick(0.5, f0).x == doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("f0_of blends dielectric and metallic reflectance") {
    CHECK(f0_of({0.5, 0.5, 0.5}, 0.0).x == doctest::Approx(0.04).epsilon(1e-12));
    Vec3 a{0.9, 0.2, 0.1};
    Vec3 f = f0_of(a, 1.0);
    CHECK(f.x == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(f.y == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(f.z == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(f0_of({0.8, 0.8, 0.8}, 0.5).x == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("brdf_eval at metallic one is pure specular") {
    Rng rng(3, 21);
    for (int i = 0; i < 100; ++i) {
        ShadingPoint sp = random_point(rng);
        MaterialSample mat = random_material(rng);
        mat.metallic = 1.0;
        Vec3 got = brdf_eval(sp, mat);
        Vec3 diffuse_only = brdf_eval(sp, mat, false);
        CHECK(length(diffuse_only) == doctest::Approx(0.0));  // (1-m) kills diffuse
        Vec3 want = oracle_eval(sp.n, sp.wi, sp.wo, mat.albedo, mat.roughness, 1.0, true);
        CHECK(testutil::rel_err(got.x, want.x, 1e-12) < 1e-12);
        CHECK(testutil::rel_err(got.y, want.y, 1e-12) < 1e-12);
        CHECK(testutil::rel_err(got.z, want.z, 1e-12) < 1e-12);
    }
}

TEST_CASE("brdf_eval dielectric without specular is Lambertian") {
    Rng rng(5, 2);
    ShadingPoint sp = random_point(rng);
    MaterialSample mat{{0.3, 0.6, 0.9}, 0.5, 0.0};
    Vec3 got = brdf_eval(sp, mat, false);
    CHECK(got.x == doctest::Approx(0.3 / M_PI).epsilon(1e-12));
    CHECK(got.y == doctest::Approx(0.6 / M_PI).epsilon(1e-12));
    CHECK(got.z == doctest::Approx(0.9 / M_PI).epsilon(1e-12));
}

TEST_CASE("brdf_eval agrees with an independent transcription") {
    Rng rng(11, 4);
    for (int i = 0; i < 2000; ++i) {
        ShadingPoint sp = random_point(rng);
        MaterialSample mat = random_material(rng);
        Vec3 got = brdf_eval(sp, mat);
        Vec3 want = oracle_eval(sp.n, sp.wi, sp.wo, mat.albedo, mat.roughness,
                                mat.metallic, true);
        REQUIRE(testutil::rel_err(got.x, want.x, 1e-12) < 1e-12);
        REQUIRE(testutil::rel_err(got.y, want.y, 1e-12) < 1e-12);
        REQUIRE(testutil::rel_err(got.z, want.z, 1e-12) < 1e-12);
    }
}

TEST_CASE("brdf_eval is nonnegative") {
    Rng rng(13, 6);
    for (int i = 0; i < 2000; ++i) {
        ShadingPoint sp = random_point(rng, 0.02);
        MaterialSample mat = random_material(rng);
        Vec3 v = brdf_eval(sp, mat);
        REQUIRE(v.x >= 0.0);
        REQUIRE(v.y >= 0.0);
        REQUIRE(v.z >= 0.0);
    }
}

TEST_CASE("brdf_eval specular term is reciprocal") {
    Rng rng(17, 8);
    for (int i = 0; i < 500; ++i) {
        ShadingPoint sp = random_point(rng);
        MaterialSample mat = random_material(rng);
        mat.metallic = 1.0;  // isolates the specular lobe
        ShadingPoint swapped{sp.n, sp.wo, sp.wi};
        Vec3 a = brdf_eval(sp, mat);
        Vec3 b = brdf_eval(swapped, mat);
        REQUIRE(testutil::rel_err(a.x, b.x, 1e-12) < 1e-12);
        REQUIRE(testutil::rel_err(a.y, b.y, 1e-12) < 1e-12);
        REQUIRE(testutil::rel_err(a.z, b.z, 1e-12) < 1e-12);
    }
}

TEST_CASE("diffuse white furnace integrates to one") {
    // albedo (1,1,1), no specular: integral (a/pi) cos dOmega over the hemisphere.
    Rng rng(23, 9);
    const int n = 1'000'000;
    ShadingPoint sp;
    sp.n = {0, 0, 1};
    sp.wo = {0, 0, 1};
    MaterialSample mat{{1, 1, 1}, 0.5, 0.0};
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.uniform();
        sp.wi = {std::sqrt(std::max(0.0, 1.0 - z * z)), 0.0, z};
        sum += brdf_eval(sp, mat, false).x * z;
    }
    CHECK(2.0 * M_PI * sum / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("brdf_grad closed forms at dielectric limit") {
    Rng rng(29, 10);
    for (int i = 0; i < 50; ++i) {
        ShadingPoint sp = random_point(rng);
        MaterialSample mat = random_material(rng);
        mat.metallic = 0.0;
        BrdfGrad g = brdf_grad(sp, mat);
        CHECK(std::abs(g.d_albedo.x - 1.0 / M_PI) < 1e-12);
        CHECK(std::abs(g.d_albedo.y - 1.0 / M_PI) < 1e-12);
        CHECK(std::abs(g.d_albedo.z - 1.0 / M_PI) < 1e-12);
        // without specular the metallic partial is exactly -albedo/pi
        BrdfGrad gd = brdf_grad(sp, mat, false);
        CHECK(std::abs(gd.d_metallic.x + mat.albedo.x / M_PI) < 1e-12);
        CHECK(std::abs(gd.d_metallic.y + mat.albedo.y / M_PI) < 1e-12);
        CHECK(std::abs(gd.d_metallic.z + mat.albedo.z / M_PI) < 1e-12);
    }
}

TEST_CASE("brdf_grad matches central differences on 1000 samples") {
    Rng rng(31, 12);
    const double h = 1e-4;
    const double tol = 1e-4;
    int accepted = 0;
    int attempts = 0;
    while (accepted < 1000 && attempts < 8000) {
        ++attempts;
        ShadingPoint sp = random_point(rng);
        MaterialSample mat = random_material(rng);
        BrdfGrad g = brdf_grad(sp, mat);
        if (g.subgradient) continue;
        MaterialSample up = mat, dn = mat;
        up.roughness += h;
        dn.roughness -= h;
        if (brdf_grad(sp, up).subgradient || brdf_grad(sp, dn).subgradient) continue;
        ++accepted;

        auto probe = [&](auto&& set, double analytic_x, double analytic_y,
                         double analytic_z) {
            MaterialSample p = mat, q = mat;
            set(p, +h);
            set(q, -h);
            Vec3 fp = brdf_eval(sp, p), fq = brdf_eval(sp, q);
            Vec3 fd = (fp - fq) / (2.0 * h);
            REQUIRE(testutil::rel_err(analytic_x, fd.x) < tol);
            REQUIRE(testutil::rel_err(analytic_y, fd.y) < tol);
            REQUIRE(testutil::rel_err(analytic_z, fd.z) < tol);
        };
        probe([](MaterialSample& m, double d) { m.roughness += d; }, g.d_roughness.x,
              g.d_roughness.y, g.d_roughness.z);
        probe([](MaterialSample& m, double d) { m.metallic += d; }, g.d_metallic.x,
              g.d_metallic.y, g.d_metallic.z);

        // albedo is diagonal: channel c of the output against albedo channel c
        for (int c = 0; c < 3; ++c) {
            MaterialSample p = mat, q = mat;
            (c == 0 ? p.albedo.x : c == 1 ? p.albedo.y : p.albedo.z) += h;
            (c == 0 ? q.albedo.x : c == 1 ? q.albedo.y : q.albedo.z) -= h;
            double fd = (brdf_eval(sp, p)[c] - brdf_eval(sp, q)[c]) / (2.0 * h);
            double analytic = g.d_albedo[c];
            REQUIRE(testutil::rel_err(analytic, fd) < tol);
        }
    }
    CHECK(accepted >= 1000);
}

TEST_CASE("brdf_grad flags subgradient near ties and the roughness clamp") {
    // mirrored wi/wo make masking equal shadowing exactly
    ShadingPoint sp;
    sp.n = {0, 0, 1};
    sp.wi = {0.6, 0, 0.8};
    sp.wo = {-0.6, 0, 0.8};
    MaterialSample mat{{0.5, 0.5, 0.5}, 0.5, 0.5};
    CHECK(brdf_grad(sp, mat).subgradient);

    ShadingPoint sp2 = sp;
    sp2.wo = {-0.3, 0.2, 0.933};  // breaks the tie
    sp2.wo = normalize(sp2.wo);
    MaterialSample low = mat;
    low.roughness = kMinRoughness + 1e-5;
    CHECK(brdf_grad(sp2, low).subgradient);
    MaterialSample high = mat;
    high.roughness = 0.99995;
    CHECK(brdf_grad(sp2, high).subgradient);
}
