#pragma once

#include <functional>

#include "gsim/mirror.hpp"
#include "gsim/rasterizer.hpp"
#include "gsim/types.hpp"

namespace gsim {

struct SceneGrads {
    std::vector<Vec3> mean;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rotation;  // w.r.t. the raw (unnormalized) quaternion
    std::vector<double> opacity_logit;
    std::vector<std::vector<Vec3>> color_coeffs;
    std::vector<double> screen_grad_norm;  // densification statistic

    void resize(const GaussianScene& scene);
    void add(const SceneGrads& other, double factor = 1.0);
    void scale(double factor);
};

// Per-pixel upstream gradients for the composited channels. Empty buffers
// mean "no gradient flows through this channel".
struct RenderUpstream {
    Buffer color;   // H x W x 3
    Buffer depth;   // H x W
    Buffer normal;  // H x W x 3
};

struct PoseGrads {
    Eigen::Matrix<double, 6, 1> tangent =
        Eigen::Matrix<double, 6, 1>::Zero();  // (rotation, translation), left-multiplied
    Mat3 d_rotation = Mat3::Zero();           // raw matrix gradients, for chaining
    Vec3 d_translation = Vec3::Zero();
};

struct PlaneGrads {
    Vec2 d_normal_tangent = Vec2::Zero();
    double d_offset = 0.0;
    Vec3 tangent_e1 = Vec3::Zero(), tangent_e2 = Vec3::Zero();
};

// Deterministic orthonormal basis of the tangent plane at unit n.
void plane_tangent_basis(const Vec3& n, Vec3& e1, Vec3& e2);

// Reverse-mode gradients of the composited color/depth/normal pipeline with
// respect to every Gaussian attribute. Throws on non-finite upstream values.
SceneGrads backward_scene(const GaussianScene& scene, const CameraIntrinsics& intr,
                          const CameraExtrinsics& extr, const RenderUpstream& upstream,
                          const RasterConfig& cfg = {});

// Gradient of a photometric loss w.r.t. the camera pose only (color channel;
// Gaussian attributes receive no gradient).
PoseGrads backward_pose(const GaussianScene& scene, const CameraIntrinsics& intr,
                        const CameraExtrinsics& extr, const Buffer& upstream_color,
                        const RasterConfig& cfg = {});

// Chain virtual-pose matrix gradients through reflect_extrinsics to the
// plane's (normal tangent, offset) coordinates.
PlaneGrads chain_pose_to_plane(const PoseGrads& virtual_pose_grads,
                               const CameraExtrinsics& real_cam, const Plane& plane);

struct FiniteDiffReport {
    struct Entry {
        int coordinate;
        double analytic, numeric, rel_error;
        bool skipped;
    };
    std::vector<Entry> entries;
    double max_rel_error = 0.0;
    bool pass = true;
};

FiniteDiffReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x0, const Eigen::VectorXd& analytic,
                                   double h, double tolerance, double skip_below = 1e-8);

}  // namespace gsim
