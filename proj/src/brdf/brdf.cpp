// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/brdf/brdf.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace matforge::brdf {

namespace {

constexpr double kPi = std::numbers::pi;

double pow5(double x) {
    double x2 = x * x;
    return x2 * x2 * x;
}

}  // namespace

Vec3 half_vector(const Vec3& wi, const Vec3& wo) {
    Vec3 sum = wi + wo;
    double len = length(sum);
    if (len < 1e-8) throw std::domain_error("degenerate half-vector: wi opposes wo");
    return sum / len;
}

double ndf_ggx(double n_dot_h, double roughness) {
    double alpha = roughness * roughness;
    double a2 = alpha * alpha;
    double k = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    return a2 / (kPi * k * k);
}

double geometry_term(double n_dot_h, double n_dot_wo, double n_dot_wi,
                     double wo_dot_h) {
    if (wo_dot_h <= 0.0) {
        throw std::domain_error("geometry_term: wo_dot_h must be positive");
    }
    double masking = 2.0 * n_dot_h * n_dot_wo / wo_dot_h;
    double shadowing = 2.0 * n_dot_h * n_dot_wi / wo_dot_h;
    return std::min(1.0, std::min(masking, shadowing));
}

Vec3 fresnel_schlick(double h_dot_wo, const Vec3& f0) {
    double q = pow5(1.0 - h_dot_wo);
    return f0 + (Vec3{1.0, 1.0, 1.0} - f0) * q;
}

Vec3 f0_of(const Vec3& albedo, double metallic) {
    return albedo * metallic + Vec3{1.0, 1.0, 1.0} * ((1.0 - metallic) * kDielectricF0);
}

Vec3 brdf_eval(const ShadingPoint& sp, const MaterialSample& mat,
               bool with_specular) {
    Vec3 diffuse = mat.albedo * ((1.0 - mat.metallic) / kPi);
    if (!with_specular) return diffuse;

    Vec3 h = half_vector(sp.wi, sp.wo);
    double n_dot_h = dot(sp.n, h);
    double n_dot_wi = dot(sp.n, sp.wi);
    double n_dot_wo = dot(sp.n, sp.wo);
    double wo_dot_h = dot(sp.wo, h);

    double r = std::clamp(mat.roughness, kMinRoughness, 1.0);
    double d = ndf_ggx(n_dot_h, r);
    double g = geometry_term(n_dot_h, n_dot_wo, n_dot_wi, wo_dot_h);
    Vec3 f = fresnel_schlick(wo_dot_h, f0_of(mat.albedo, mat.metallic));
    double s = g / (4.0 * n_dot_wi * n_dot_wo);
    return diffuse + f * (d * s);
}

BrdfGrad brdf_grad(const ShadingPoint& sp, const MaterialSample& mat,
                   bool with_specular) {
    BrdfGrad grad;
    double inv_pi = 1.0 / kPi;
    double one_minus_m = 1.0 - mat.metallic;
    grad.d_albedo = {one_minus_m * inv_pi, one_minus_m * inv_pi, one_minus_m * inv_pi};
    grad.d_roughness = {0.0, 0.0, 0.0};
    grad.d_metallic = mat.albedo * -inv_pi;
    if (!with_specular) return grad;

    Vec3 h = half_vector(sp.wi, sp.wo);
    double n_dot_h = dot(sp.n, h);
    double n_dot_wi = dot(sp.n, sp.wi);
    double n_dot_wo = dot(sp.n, sp.wo);
    double wo_dot_h = dot(sp.wo, h);

    double r = std::clamp(mat.roughness, kMinRoughness, 1.0);
    double alpha = r * r;
    double a2 = alpha * alpha;
    double k = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    double d = a2 / (kPi * k * k);
    double g = geometry_term(n_dot_h, n_dot_wo, n_dot_wi, wo_dot_h);
    double s = g / (4.0 * n_dot_wi * n_dot_wo);

    double q = pow5(1.0 - wo_dot_h);
    Vec3 f0 = f0_of(mat.albedo, mat.metallic);
    Vec3 f = f0 * (1.0 - q) + Vec3{q, q, q};

    // D depends on alpha = r^2 only; G carries no material dependence.
    double dD_dalpha =
        2.0 * alpha * (k - 2.0 * a2 * n_dot_h * n_dot_h) / (kPi * k * k * k);
    double dD_dr = dD_dalpha * 2.0 * r;

    double fresnel_scale = d * s * (1.0 - q);
    grad.d_albedo = grad.d_albedo + Vec3{1.0, 1.0, 1.0} * (fresnel_scale * mat.metallic);
    grad.d_roughness = f * (dD_dr * s);
    grad.d_metallic =
        grad.d_metallic + (mat.albedo - Vec3{1.0, 1.0, 1.0} * kDielectricF0) * fresnel_scale;

    double masking = 2.0 * n_dot_h * n_dot_wo / wo_dot_h;
    double shadowing = 2.0 * n_dot_h * n_dot_wi / wo_dot_h;
    bool near_tie = std::abs(masking - 1.0) < kSubgradientDelta ||
                    std::abs(shadowing - 1.0) < kSubgradientDelta ||
                    std::abs(masking - shadowing) < kSubgradientDelta;
    bool near_clamp = mat.roughness < kMinRoughness + kSubgradientDelta ||
                      mat.roughness > 1.0 - kSubgradientDelta;
    grad.subgradient = near_tie || near_clamp;
    return grad;
}

}  // namespace matforge::brdf
