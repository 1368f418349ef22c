// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "matforge/core/vec.h"

namespace matforge::brdf {

/// GGX blows up toward a delta distribution as roughness -> 0; materials are
/// clamped here so D and its derivatives stay finite.
inline constexpr double kMinRoughness = 0.04;

/// Dielectric reflectance at normal incidence.
inline constexpr double kDielectricF0 = 0.04;

/// Distance (in parameter or min-argument space) below which gradients are
/// reported as subgradients.
inline constexpr double kSubgradientDelta = 1e-4;

/// Unit vectors in a common frame. Evaluation assumes n.wi > 0 and n.wo > 0;
/// the shading layer culls the rest.
struct ShadingPoint {
    Vec3 n;
    Vec3 wi;
    Vec3 wo;
};

struct MaterialSample {
    Vec3 albedo;       // [0,1] per channel
    double roughness;  // [kMinRoughness, 1]
    double metallic;   // [0,1]
};

/// Partials of each output channel. d_albedo is the diagonal (channel c of
/// the output w.r.t. channel c of albedo); cross-channel terms are zero.
struct BrdfGrad {
    Vec3 d_albedo;
    Vec3 d_roughness;
    Vec3 d_metallic;
    bool subgradient = false;  // set near min-term ties or roughness clamp
};

/// h = (wi + wo) / |wi + wo|. Throws std::domain_error when wi ~ -wo.
Vec3 half_vector(const Vec3& wi, const Vec3& wo);

/// GGX normal distribution, alpha = roughness^2.
double ndf_ggx(double n_dot_h, double roughness);

/// min(1, 2(n.h)(n.wo)/(wo.h), 2(n.h)(n.wi)/(wo.h)).
/// Throws std::domain_error when wo_dot_h <= 0.
double geometry_term(double n_dot_h, double n_dot_wo, double n_dot_wi,
                     double wo_dot_h);

/// Schlick approximation, componentwise.
Vec3 fresnel_schlick(double h_dot_wo, const Vec3& f0);

/// F0 = metallic * albedo + (1 - metallic) * 0.04.
Vec3 f0_of(const Vec3& albedo, double metallic);

/// Cook-Torrance: (1-m) * albedo/pi + D*G*F / (4 (n.wi)(n.wo)).
/// with_specular=false drops the microfacet term (test hook for Lambertian
/// limits; production shading always keeps it).
Vec3 brdf_eval(const ShadingPoint& sp, const MaterialSample& mat,
               bool with_specular = true);

/// Closed-form partials of brdf_eval w.r.t. albedo, roughness, metallic.
BrdfGrad brdf_grad(const ShadingPoint& sp, const MaterialSample& mat,
                   bool with_specular = true);

}  // namespace matforge::brdf
