// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/geom/camera.h"

#include <cmath>
#include <numbers>

#include "matforge/core/errors.h"

namespace matforge::geom {

void Camera::validate() const {
    if (!(near_plane > 0.0) || !(far_plane > near_plane)) {
        throw DataError("camera: requires 0 < near < far");
    }
    if (!(vertical_fov > 0.0) || !(vertical_fov < std::numbers::pi)) {
        throw DataError("camera: vertical_fov must be in (0, pi)");
    }
    if (width < 1 || height < 1) {
        throw DataError("camera: resolution must be at least 1x1");
    }
}

void Camera::basis(Vec3& right, Vec3& up_out, Vec3& back) const {
    back = normalize(eye - target);  // camera looks down -back
    right = normalize(cross(up, back));
    up_out = cross(back, right);
}

Vec3 Camera::to_view(const Vec3& p) const {
    Vec3 right, upv, back;
    basis(right, upv, back);
    Vec3 d = p - eye;
    return {dot(d, right), dot(d, upv), dot(d, back)};
}

bool Camera::project(const Vec3& p, Vec2& pixel, double& depth) const {
    Vec3 v = to_view(p);
    depth = -v.z;
    if (depth < near_plane) return false;
    double sy = 1.0 / std::tan(vertical_fov * 0.5);
    double sx = sy * double(height) / double(width);
    double ndc_x = sx * v.x / depth;
    double ndc_y = sy * v.y / depth;
    pixel.x = (ndc_x + 1.0) * 0.5 * width;
    pixel.y = (1.0 - ndc_y) * 0.5 * height;
    return true;
}

std::vector<Camera> camera_ring(int view_count, double radius, double elevation,
                                int width, int height, double vertical_fov) {
    if (view_count < 1) throw DataError("camera_ring: view_count must be >= 1");
    if (!(radius > 0.0)) throw DataError("camera_ring: radius must be positive");
    std::vector<Camera> cameras;
    cameras.reserve(view_count);
    for (int k = 0; k < view_count; ++k) {
        double azimuth = 2.0 * std::numbers::pi * double(k) / double(view_count);
        Camera cam;
        cam.eye = {radius * std::cos(elevation) * std::sin(azimuth),
                   radius * std::sin(elevation),
                   radius * std::cos(elevation) * std::cos(azimuth)};
        cam.target = {0.0, 0.0, 0.0};
        cam.up = {0.0, 1.0, 0.0};
        cam.vertical_fov = vertical_fov;
        cam.width = width;
        cam.height = height;
        cam.validate();
        cameras.push_back(cam);
    }
    return cameras;
}

std::vector<Camera> camera_random(int view_count, double radius, uint64_t seed,
                                  int width, int height,
                                  double min_elevation, double max_elevation,
                                  double vertical_fov) {
    if (view_count < 1) throw DataError("camera_random: view_count must be >= 1");
    Rng rng(seed, /*stream=*/0x9a7eu);
    std::vector<Camera> cameras;
    cameras.reserve(view_count);
    for (int k = 0; k < view_count; ++k) {
        double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double elevation = rng.uniform(min_elevation, max_elevation);
        Camera cam;
        cam.eye = {radius * std::cos(elevation) * std::sin(azimuth),
                   radius * std::sin(elevation),
                   radius * std::cos(elevation) * std::cos(azimuth)};
        cam.vertical_fov = vertical_fov;
        cam.width = width;
        cam.height = height;
        cam.validate();
        cameras.push_back(cam);
    }
    return cameras;
}

}  // namespace matforge::geom
