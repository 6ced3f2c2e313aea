#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsim/types.hpp"

namespace gsim {

struct PlaneEstimate {
    Plane plane;
    int inlier_count = 0;
    std::string source_view;
    int points_used = 0;
};

struct RansacConfig {
    int max_iterations = 1000;
    double distance_threshold = 0.1;
    int min_points = 500;
    uint64_t seed = 0;
};

// Householder matrix I - 2 n n^T for the plane's normal.
Mat3 householder(const Vec3& normal);

Vec3 reflect_point(const Vec3& x, const Plane& plane);

// Virtual camera: [R'|t'] = [I - 2nn^T, 2on] * [R|t]. R' has det -1.
CameraExtrinsics reflect_extrinsics(const CameraExtrinsics& cam, const Plane& plane);

// Mirror image of the whole scene. Covariances transform exactly; rotations
// are fixed back to det +1 keeping the shortest-axis column equal to the
// reflected normal; SH band-1 coefficients are reflected as vectors.
GaussianScene reflect_scene(const GaussianScene& scene, const Plane& plane);

// World points for masked pixels with positive depth. Pixel (u,v) maps to
// camera point ((u-cx)/fx*d, (v-cy)/fy*d, d).
std::vector<Vec3> backproject(const Buffer& depth, const MaskBuffer& mask,
                              const CameraIntrinsics& intr, const CameraExtrinsics& extr);

// Rotate a composited camera-frame normal map back to world, renormalizing
// per pixel; pixels with near-zero normals stay zero.
Buffer normals_to_world(const Buffer& normal_cam, const CameraExtrinsics& extr);

// Supplementary-style plane fit: n = renormalized mean of masked world
// normals (sign fixed toward the camera center), o found by 1-point RANSAC
// over n.x hypotheses and refined as the inlier mean.
// Throws std::runtime_error on "insufficient mirror pixels" or
// "degenerate normals".
PlaneEstimate estimate_plane(const Buffer& depth, const Buffer& normal_world,
                             const MaskBuffer& mask, const CameraIntrinsics& intr,
                             const CameraExtrinsics& extr, const RansacConfig& cfg);

// Hard per-pixel select: virtual inside the mask, real outside.
Buffer fuse_images(const Buffer& real, const Buffer& virt, const MaskBuffer& mask);

// Subset of the scene strictly on the camera side of the mirror. Virtual
// renders must exclude the mirror surface itself (and any "virtual space"
// built up behind it), which would otherwise occlude the reflected room.
// `indices` maps culled-scene positions back to the source scene.
struct MirrorCulledScene {
    GaussianScene scene;
    std::vector<size_t> indices;
};
MirrorCulledScene cull_mirror_backside(const GaussianScene& scene, const Plane& plane,
                                       double margin);

}  // namespace gsim
