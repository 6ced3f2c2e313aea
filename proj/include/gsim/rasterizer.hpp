#pragma once

#include <optional>
#include <vector>

#include "gsim/types.hpp"

namespace gsim {

// Screen-space footprint of one Gaussian for a given view.
struct ProjectedGaussian {
    Vec2 screen_mean = Vec2::Zero();
    double z_depth = 0.0;
    Mat2 cov2d = Mat2::Identity();
    Mat2 cov2d_inv = Mat2::Identity();
    Vec3 color = Vec3::Zero();      // SH evaluated for this view, clamped [0,1]
    double opacity = 0.0;           // activated
    Vec3 normal_cam = Vec3::Zero(); // shortest-axis normal, camera frame, camera-facing
    int world_index = -1;
};

struct TileGrid {
    int tile_size = 16;
    int tiles_x = 0, tiles_y = 0;
    // per tile: projected-gaussian indices sorted by (z_depth, world_index)
    std::vector<std::vector<int>> tiles;
};

struct RasterConfig {
    double near_plane = 0.01;
    double cov_lowpass = 0.3;
    double alpha_clamp = 0.99;
    double alpha_skip = 1.0 / 255.0;
    double transmittance_cutoff = 1e-4;
    int tile_size = 16;
    int threads = 1;
};

// Real first-order spherical harmonics; DC gets a +0.5 offset and the result
// is clamped to [0,1].
Vec3 evaluate_sh(const std::vector<Vec3>& coeffs, int degree, const Vec3& view_dir);

// EWA projection Jacobian. x/z and y/z are clamped to 1.3x the view frustum
// before linearization so near-camera, far-off-axis Gaussians cannot blow up
// the screen covariance; the flags gate the corresponding gradients.
struct ProjectionJacobian {
    Eigen::Matrix<double, 2, 3> j;
    bool clamped_x = false, clamped_y = false;
};
ProjectionJacobian projection_jacobian(const CameraIntrinsics& intr, const Vec3& t_cam);

std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, int sh_degree,
                                                  const CameraIntrinsics& intr,
                                                  const CameraExtrinsics& extr,
                                                  const RasterConfig& cfg = {});

double blend_weight(const ProjectedGaussian& pg, const Vec2& pixel);

std::vector<ProjectedGaussian> project_scene(const GaussianScene& scene,
                                             const CameraIntrinsics& intr,
                                             const CameraExtrinsics& extr,
                                             const RasterConfig& cfg = {});

TileGrid build_tile_grid(const std::vector<ProjectedGaussian>& projected,
                         const CameraIntrinsics& intr, const RasterConfig& cfg = {});

RenderOutput render(const GaussianScene& scene, const CameraIntrinsics& intr,
                    const CameraExtrinsics& extr, const RasterConfig& cfg = {});

}  // namespace gsim
