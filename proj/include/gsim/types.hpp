#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One anisotropic Gaussian primitive. Scale is stored as log-scale and
// opacity as a logit so unconstrained optimizer steps stay valid.
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Quat rotation = Quat::Identity();  // renormalized on read
    double opacity_logit = 0.0;
    // (degree+1)^2 RGB coefficient triples, DC first.
    std::vector<Vec3> color_coeffs;

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Quat unit_rotation() const { return rotation.normalized(); }
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    int sh_degree = 0;  // 0 or 1

    int coeffs_per_channel() const { return (sh_degree + 1) * (sh_degree + 1); }
    size_t size() const { return gaussians.size(); }
};

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
};

// World-to-camera transform: x_cam = R * x_world + t.
struct CameraExtrinsics {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 to_camera(const Vec3& x_world) const { return rotation * x_world + translation; }
    Vec3 center() const { return -(rotation.transpose() * translation); }
};

// Mirror plane: a point x lies on the plane iff n.x - o == 0.
struct Plane {
    Vec3 normal = Vec3::UnitZ();
    double offset = 0.0;

    double signed_distance(const Vec3& x) const { return normal.dot(x) - offset; }
};

// Row-major H x W x C buffer of doubles.
struct Buffer {
    int height = 0, width = 0, channels = 1;
    std::vector<double> data;

    Buffer() = default;
    Buffer(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    Vec3 pixel3(int y, int x) const { return Vec3(at(y, x, 0), at(y, x, 1), at(y, x, 2)); }
    void set_pixel3(int y, int x, const Vec3& v) {
        at(y, x, 0) = v[0];
        at(y, x, 1) = v[1];
        at(y, x, 2) = v[2];
    }
    bool same_shape(const Buffer& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    size_t count() const { return data.size(); }
};

struct MaskBuffer {
    int height = 0, width = 0;
    std::vector<uint8_t> data;

    MaskBuffer() = default;
    MaskBuffer(int h, int w, bool fill = false)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill ? 1 : 0) {}

    bool at(int y, int x) const { return data[static_cast<size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t count_true() const {
        size_t n = 0;
        for (uint8_t v : data) n += (v != 0);
        return n;
    }
};

struct RenderOutput {
    Buffer color;   // H x W x 3
    Buffer depth;   // H x W
    Buffer normal;  // H x W x 3, alpha-composited camera-frame normals, not renormalized
    Buffer alpha;   // H x W
};

struct MirrorDatasetView {
    Buffer image;     // ground truth, [0,1]
    MaskBuffer mask;  // true = mirror pixel
    CameraIntrinsics intrinsics;
    CameraExtrinsics extrinsics;
    std::string name;
};

struct TrainConfig {
    int total_steps = 60000;
    int stage1_steps = 3000;  // vanilla init
    int mpp_steps = 1000;
    int vco_steps = 10000;

    double lambda_s = 0.01;
    double lambda_n = 0.005;
    double lambda_pc = 0.01;
    double gamma = 0.1;
    double vco_learning_rate = 0.0005;
    double rgb_dssim_weight = 0.2;
    double mask_fill_color = 0.5;
    int np_normal_samples = 64;

    // Gaussian-group Adam rates (3D-GS defaults).
    double lr_mean = 1.6e-4;
    double lr_mean_final = 1.6e-6;
    double lr_opacity = 0.05;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_sh = 2.5e-3;

    // Adaptive density control.
    int densify_interval = 100;
    int densify_from_step = 300;
    double densify_grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    double percent_dense = 0.01;
    double scene_extent = 2.0;
    int max_gaussians = 20000;
    bool densify_in_mpp = true;

    // RANSAC plane estimation.
    int ransac_iterations = 1000;
    double ransac_threshold = 0.1;
    double min_mask_fraction = 0.046;
    int min_mask_pixels_floor = 500;
    bool plane_view_random = false;  // default: largest mask area

    int sh_degree = 1;
    int init_gaussians = 800;
    uint64_t seed = 0;
    int threads = 1;
    bool joint_camera_gaussians = false;
    bool mirror_enabled = true;  // false = plain splatting baseline (no plane/fusion)
    // Gaussians within this distance of (or behind) the mirror plane are
    // dropped from virtual renders so the mirror surface cannot occlude them.
    double virtual_cull_margin = 0.05;
    bool mpp_losses_in_finetune = false;
    int holdout_eval_interval = 500;

    int finetune_steps() const { return total_steps - stage1_steps - mpp_steps - vco_steps; }
};

// Returns R * diag(scale^2) * R^T.
Mat3 build_covariance(const Vec3& scale, const Quat& rotation);

// Unit direction of the shortest covariance axis; ties break to the lowest
// axis index.
Vec3 shortest_axis_normal(const Gaussian& g);
int shortest_axis_index(const Vec3& scale);

// Diagnostic scan; empty result means every Gaussian invariant holds.
std::vector<std::string> validate_scene(const GaussianScene& scene);

}  // namespace gsim
