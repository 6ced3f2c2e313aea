#include "gsim/mirror.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace gsim {

Mat3 householder(const Vec3& normal) {
    return Mat3::Identity() - 2.0 * normal * normal.transpose();
}

Vec3 reflect_point(const Vec3& x, const Plane& plane) {
    return x - 2.0 * plane.signed_distance(x) * plane.normal;
}

CameraExtrinsics reflect_extrinsics(const CameraExtrinsics& cam, const Plane& plane) {
    // [R'|t'] = [R|t] * [A | 2on]: the virtual camera sees world point x the
    // way the real camera sees reflect_point(x), so its center is the
    // reflected real center.
    Mat3 a = householder(plane.normal);
    CameraExtrinsics virt;
    virt.rotation = cam.rotation * a;
    virt.translation = cam.translation + 2.0 * plane.offset * (cam.rotation * plane.normal);
    return virt;
}

GaussianScene reflect_scene(const GaussianScene& scene, const Plane& plane) {
    Mat3 a = householder(plane.normal);
    GaussianScene out;
    out.sh_degree = scene.sh_degree;
    out.gaussians.reserve(scene.size());
    for (const Gaussian& g : scene.gaussians) {
        Gaussian r = g;
        r.mean = reflect_point(g.mean, plane);
        // A*R has det -1; flipping one non-shortest column restores det +1
        // without touching diag(scale^2) or the shortest-axis normal.
        Mat3 rot = a * g.unit_rotation().toRotationMatrix();
        int k = shortest_axis_index(g.scale());
        rot.col((k + 1) % 3) *= -1.0;
        r.rotation = Quat(rot).normalized();
        if (scene.sh_degree >= 1 && g.color_coeffs.size() >= 4) {
            // band-1 contribution is a dot product <w, dir>; reflect w.
            for (int ch = 0; ch < 3; ++ch) {
                Vec3 w(-g.color_coeffs[3][ch], -g.color_coeffs[1][ch], g.color_coeffs[2][ch]);
                Vec3 wr = a * w;
                r.color_coeffs[1][ch] = -wr[1];
                r.color_coeffs[2][ch] = wr[2];
                r.color_coeffs[3][ch] = -wr[0];
            }
        }
        out.gaussians.push_back(std::move(r));
    }
    return out;
}

std::vector<Vec3> backproject(const Buffer& depth, const MaskBuffer& mask,
                              const CameraIntrinsics& intr, const CameraExtrinsics& extr) {
    std::vector<Vec3> points;
    Mat3 rt = extr.rotation.transpose();
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!mask.at(y, x)) continue;
            double d = depth.at(y, x);
            if (d <= 0.0) continue;
            Vec3 cam_pt((x - intr.cx) / intr.fx * d, (y - intr.cy) / intr.fy * d, d);
            points.push_back(rt * (cam_pt - extr.translation));
        }
    }
    return points;
}

Buffer normals_to_world(const Buffer& normal_cam, const CameraExtrinsics& extr) {
    Buffer out(normal_cam.height, normal_cam.width, 3);
    Mat3 rt = extr.rotation.transpose();
    for (int y = 0; y < normal_cam.height; ++y) {
        for (int x = 0; x < normal_cam.width; ++x) {
            Vec3 n = normal_cam.pixel3(y, x);
            double len = n.norm();
            if (len < 1e-9) continue;
            out.set_pixel3(y, x, rt * (n / len));
        }
    }
    return out;
}

PlaneEstimate estimate_plane(const Buffer& depth, const Buffer& normal_world,
                             const MaskBuffer& mask, const CameraIntrinsics& intr,
                             const CameraExtrinsics& extr, const RansacConfig& cfg) {
    std::vector<Vec3> points = backproject(depth, mask, intr, extr);
    if (static_cast<int>(points.size()) < cfg.min_points)
        throw std::runtime_error("insufficient mirror pixels: " + std::to_string(points.size()) +
                                 " < " + std::to_string(cfg.min_points));

    // mean of per-pixel unit normals over masked pixels with valid depth
    Vec3 mean_n = Vec3::Zero();
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!mask.at(y, x) || depth.at(y, x) <= 0.0) continue;
            Vec3 n = normal_world.pixel3(y, x);
            double len = n.norm();
            if (len < 1e-9) continue;
            mean_n += n / len;
        }
    }
    if (mean_n.norm() < 1e-6) throw std::runtime_error("degenerate normals");
    Vec3 n = mean_n.normalized();

    // sign toward the querying camera center
    Vec3 center = extr.center();
    std::vector<double> proj(points.size());
    for (size_t i = 0; i < points.size(); ++i) proj[i] = n.dot(points[i]);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<size_t> pick(0, points.size() - 1);
    int best_inliers = -1;
    double best_o = 0.0;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        double o = proj[pick(rng)];
        int inliers = 0;
        for (double p : proj) inliers += std::abs(p - o) < cfg.distance_threshold;
        if (inliers > best_inliers) {
            best_inliers = inliers;
            best_o = o;
        }
    }
    // refine as the inlier mean of the best hypothesis
    double sum = 0.0;
    int count = 0;
    for (double p : proj) {
        if (std::abs(p - best_o) < cfg.distance_threshold) {
            sum += p;
            ++count;
        }
    }
    double o = count > 0 ? sum / count : best_o;

    if (n.dot(center) - o < 0.0) {
        n = -n;
        o = -o;
    }

    PlaneEstimate est;
    est.plane = Plane{n, o};
    est.inlier_count = count;
    est.points_used = static_cast<int>(points.size());
    return est;
}

MirrorCulledScene cull_mirror_backside(const GaussianScene& scene, const Plane& plane,
                                       double margin) {
    MirrorCulledScene out;
    out.scene.sh_degree = scene.sh_degree;
    for (size_t i = 0; i < scene.size(); ++i) {
        if (plane.signed_distance(scene.gaussians[i].mean) <= margin) continue;
        out.scene.gaussians.push_back(scene.gaussians[i]);
        out.indices.push_back(i);
    }
    return out;
}

Buffer fuse_images(const Buffer& real, const Buffer& virt, const MaskBuffer& mask) {
    if (!real.same_shape(virt) || real.height != mask.height || real.width != mask.width)
        throw std::runtime_error("fuse_images: dimension mismatch");
    Buffer out = real;
    for (int y = 0; y < real.height; ++y)
        for (int x = 0; x < real.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < real.channels; ++c) out.at(y, x, c) = virt.at(y, x, c);
    return out;
}

}  // namespace gsim
