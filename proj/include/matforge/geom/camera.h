// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "matforge/core/rng.h"
#include "matforge/core/vec.h"

namespace matforge::geom {

struct Camera {
    Vec3 eye{0.0, 0.0, 3.0};
    Vec3 target{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double vertical_fov = 0.9599310885968813;  // 55 degrees
    double near_plane = 0.1;
    double far_plane = 100.0;
    int width = 256;
    int height = 256;

    void validate() const;

    /// World -> camera frame (right-handed, camera looks down -z).
    Vec3 to_view(const Vec3& p) const;
    /// Camera frame basis vectors in world space.
    void basis(Vec3& right, Vec3& up_out, Vec3& back) const;

    /// Projects a world point to pixel coordinates (origin top-left, pixel
    /// centers at half-integers) plus positive view depth. Returns false when
    /// the point is behind the near plane.
    bool project(const Vec3& p, Vec2& pixel, double& depth) const;
};

/// view_count cameras on an azimuth ring looking at the origin. Azimuths are
/// 2*pi*k/view_count; azimuth 0 places the eye on +z. Elevation in radians
/// above the horizontal plane.
std::vector<Camera> camera_ring(int view_count, double radius, double elevation,
                                int width, int height,
                                double vertical_fov = 0.9599310885968813);

/// Seeded random viewpoints (uniform azimuth, elevation uniform in
/// [min_elevation, max_elevation]); the stochastic counterpart of the ring.
std::vector<Camera> camera_random(int view_count, double radius, uint64_t seed,
                                  int width, int height,
                                  double min_elevation, double max_elevation,
                                  double vertical_fov = 0.9599310885968813);

}  // namespace matforge::geom
