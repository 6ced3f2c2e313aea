#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gsim/mirror.hpp"
#include "gsim/rasterizer.hpp"

using namespace gsim;

namespace {

std::mt19937_64& rng() {
    static std::mt19937_64 r(91);
    return r;
}

double uni(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng());
}

Vec3 random_unit() {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 v(g(rng()), g(rng()), g(rng()));
    return v.norm() < 1e-9 ? Vec3::UnitX() : v.normalized();
}

Plane random_plane() { return Plane{random_unit(), uni(-1.5, 1.5)}; }

CameraExtrinsics random_camera() {
    CameraExtrinsics extr;
    extr.rotation = Quat(Eigen::AngleAxisd(uni(0, M_PI), random_unit())).toRotationMatrix();
    extr.translation = Vec3(uni(-1, 1), uni(-1, 1), uni(-1, 1));
    return extr;
}

GaussianScene random_scene(int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    GaussianScene scene;
    scene.sh_degree = 1;
    for (int i = 0; i < n; ++i) {
        Gaussian gs;
        gs.mean = Vec3(g(rng()), g(rng()), g(rng()));
        gs.log_scale = 0.3 * Vec3(g(rng()), g(rng()), g(rng())) + Vec3::Constant(std::log(0.1));
        Vec4 q(g(rng()), g(rng()), g(rng()), g(rng()));
        q.normalize();
        gs.rotation = Quat(q[0], q[1], q[2], q[3]);
        gs.opacity_logit = logit(uni(0.1, 0.95));
        gs.color_coeffs.assign(4, Vec3::Zero());
        gs.color_coeffs[0] = 0.5 * Vec3(g(rng()), g(rng()), g(rng()));
        for (int c = 1; c < 4; ++c) gs.color_coeffs[c] = 0.15 * Vec3(g(rng()), g(rng()), g(rng()));
        scene.gaussians.push_back(gs);
    }
    return scene;
}

}  // namespace

TEST_CASE("reflect_point closed forms") {
    Plane p{Vec3(0, 0, 1), 0.0};
    CHECK((reflect_point(Vec3(1, 2, 3), p) - Vec3(1, 2, -3)).norm() < 1e-15);
    CHECK((reflect_point(Vec3(4, -7, 0), p) - Vec3(4, -7, 0)).norm() < 1e-15);  // on plane
}

TEST_CASE("reflection algebra properties over 1e4 draws") {
    double max_invol = 0, max_iso = 0, max_fixed = 0, max_cam_invol = 0;
    for (int i = 0; i < 10000; ++i) {
        Plane p = random_plane();
        Vec3 x(uni(-3, 3), uni(-3, 3), uni(-3, 3));
        Vec3 y(uni(-3, 3), uni(-3, 3), uni(-3, 3));
        max_invol = std::max(max_invol, (reflect_point(reflect_point(x, p), p) - x).norm());
        max_iso = std::max(max_iso, std::abs((reflect_point(x, p) - reflect_point(y, p)).norm() -
                                             (x - y).norm()));
        // project x onto the plane; it must be a fixed point
        Vec3 on_plane = x - p.signed_distance(x) * p.normal;
        max_fixed = std::max(max_fixed, (reflect_point(on_plane, p) - on_plane).norm());

        CameraExtrinsics cam = random_camera();
        CameraExtrinsics twice = reflect_extrinsics(reflect_extrinsics(cam, p), p);
        max_cam_invol = std::max(max_cam_invol, (twice.rotation - cam.rotation).norm() +
                                                    (twice.translation - cam.translation).norm());
    }
    CHECK(max_invol < 1e-12);
    CHECK(max_iso < 1e-12);
    CHECK(max_fixed < 1e-12);
    CHECK(max_cam_invol < 1e-12);
}

TEST_CASE("reflect_extrinsics closed forms") {
    Plane p{Vec3(0, 0, 1), 0.0};
    CameraExtrinsics cam;
    cam.translation = Vec3(0, 0, -2);
    CameraExtrinsics v = reflect_extrinsics(cam, p);
    CHECK((v.rotation - Vec3(1, 1, -1).asDiagonal().toDenseMatrix()).norm() < 1e-12);
    // real center (0,0,2) reflects across z=0 to (0,0,-2)
    CHECK((v.center() - Vec3(0, 0, -2)).norm() < 1e-12);
    CHECK(v.rotation.determinant() == doctest::Approx(-1.0));

    // camera center reflects like a point
    Plane p2{Vec3(1, 0, 0), 3.0};
    CameraExtrinsics cam2 = random_camera();
    cam2.translation = -(cam2.rotation * Vec3(1, 0, 0));  // center at (1,0,0)
    CameraExtrinsics v2 = reflect_extrinsics(cam2, p2);
    CHECK((v2.center() - Vec3(5, 0, 0)).norm() < 1e-12);
}

TEST_CASE("householder matrix") {
    Vec3 n = random_unit();
    Mat3 h = householder(n);
    CHECK((h * h - Mat3::Identity()).norm() < 1e-12);
    CHECK((h * n + n).norm() < 1e-12);
    CHECK(h.determinant() == doctest::Approx(-1.0));
}

TEST_CASE("reflect_scene involution and axis-aligned case") {
    Plane p{Vec3(0, 0, 1), 0.0};
    GaussianScene scene = random_scene(1);
    scene.gaussians[0].mean = Vec3(0, 0, 3);
    scene.gaussians[0].rotation = Quat::Identity();
    scene.gaussians[0].log_scale = Vec3(0.3, 0.2, 0.1).array().log();
    GaussianScene r = reflect_scene(scene, p);
    CHECK((r.gaussians[0].mean - Vec3(0, 0, -3)).norm() < 1e-12);
    Mat3 cov = build_covariance(scene.gaussians[0].scale(), scene.gaussians[0].unit_rotation());
    Mat3 rcov = build_covariance(r.gaussians[0].scale(), r.gaussians[0].unit_rotation());
    CHECK((cov - rcov).norm() < 1e-12);  // diagonal covariance invariant under z-flip
    CHECK(r.gaussians[0].unit_rotation().toRotationMatrix().determinant() ==
          doctest::Approx(1.0).epsilon(1e-12));

    GaussianScene many = random_scene(30);
    Plane q = random_plane();
    GaussianScene twice = reflect_scene(reflect_scene(many, q), q);
    for (size_t i = 0; i < many.size(); ++i) {
        CHECK((twice.gaussians[i].mean - many.gaussians[i].mean).norm() < 1e-12);
        Mat3 a = build_covariance(many.gaussians[i].scale(), many.gaussians[i].unit_rotation());
        Mat3 b = build_covariance(twice.gaussians[i].scale(), twice.gaussians[i].unit_rotation());
        CHECK((a - b).norm() < 1e-11);
        for (int c = 0; c < 4; ++c)
            CHECK((twice.gaussians[i].color_coeffs[c] - many.gaussians[i].color_coeffs[c]).norm() <
                  1e-12);
    }
}

TEST_CASE("virtual-camera equivalence on random scenes") {
    CameraIntrinsics intr;
    intr.width = intr.height = 48;
    intr.fx = intr.fy = 50;
    intr.cx = 25.0;
    intr.cy = 23.0;
    for (int trial = 0; trial < 20; ++trial) {
        GaussianScene scene = random_scene(40);
        Plane plane = random_plane();
        CameraExtrinsics cam = random_camera();
        RenderOutput a = render(scene, intr, reflect_extrinsics(cam, plane));
        RenderOutput b = render(reflect_scene(scene, plane), intr, cam);
        double m = 0;
        for (size_t i = 0; i < a.color.data.size(); ++i)
            m = std::max(m, std::abs(a.color.data[i] - b.color.data[i]));
        CHECK(m < 1e-4);
    }
}

TEST_CASE("backproject closed forms") {
    CameraIntrinsics intr;
    intr.width = intr.height = 4;
    intr.fx = intr.fy = 1;
    intr.cx = intr.cy = 0;
    CameraExtrinsics extr;  // identity

    Buffer depth(4, 4, 1, 0.0);
    depth.at(0, 0) = 2.0;
    MaskBuffer mask(4, 4);
    mask.set(0, 0, true);
    auto pts = backproject(depth, mask, intr, extr);
    REQUIRE(pts.size() == 1);
    CHECK((pts[0] - Vec3(0, 0, 2)).norm() < 1e-12);

    extr.translation = Vec3(0, 0, -5);
    pts = backproject(depth, mask, intr, extr);
    REQUIRE(pts.size() == 1);
    CHECK((pts[0] - Vec3(0, 0, 7)).norm() < 1e-12);

    // zero depth skipped, empty mask empty result
    mask.set(0, 0, false);
    CHECK(backproject(depth, mask, intr, extr).empty());
}

TEST_CASE("estimate_plane exact and outlier cases") {
    // synthesize a depth/normal/mask snapshot seen by an identity camera
    CameraIntrinsics intr;
    intr.width = 100;
    intr.height = 100;
    intr.fx = intr.fy = 100;
    intr.cx = intr.cy = 50;
    CameraExtrinsics extr;

    Buffer depth(100, 100, 1, 1.0);  // plane z=1, fronto-parallel
    Buffer normal(100, 100, 3, 0.0);
    MaskBuffer mask(100, 100, true);
    for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x) normal.set_pixel3(y, x, Vec3(0, 0, 1));

    RansacConfig cfg;
    cfg.min_points = 100;
    cfg.seed = 5;
    PlaneEstimate est = estimate_plane(depth, normal, mask, intr, extr, cfg);
    // sign fixed toward the camera center (origin): n.center - o > 0
    CHECK((est.plane.normal - Vec3(0, 0, -1)).norm() < 1e-9);
    CHECK(est.plane.offset == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(est.inlier_count == est.points_used);

    // 30% gross outliers shifted 1.0 along the normal
    std::mt19937_64 r(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Buffer depth2 = depth;
    int n_out = 0;
    for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x)
            if (u(r) < 0.3) {
                depth2.at(y, x) += 1.0;
                ++n_out;
            }
    PlaneEstimate est2 = estimate_plane(depth2, normal, mask, intr, extr, cfg);
    CHECK(std::abs(est2.plane.offset - (-1.0)) < 0.01);
    double frac = static_cast<double>(est2.inlier_count) / est2.points_used;
    CHECK(frac == doctest::Approx(1.0 - n_out / 10000.0).epsilon(0.05));
}

TEST_CASE("estimate_plane with noisy normals and noisy depth") {
    // acceptance-style robustness: sigma=0.01 depth noise, 30% outliers,
    // +-2 degree normal noise, 1e4 points
    CameraIntrinsics intr;
    intr.width = 100;
    intr.height = 100;
    intr.fx = intr.fy = 100;
    intr.cx = intr.cy = 50;
    CameraExtrinsics extr;

    std::mt19937_64 r(13);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Buffer depth(100, 100, 1, 0.0);
    Buffer normal(100, 100, 3, 0.0);
    MaskBuffer mask(100, 100, true);
    const Vec3 true_n(0, 0, 1);
    for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x) {
            double d = 1.0 + 0.01 * g(r);
            if (u(r) < 0.3) d += (u(r) < 0.5 ? 1.0 : -0.7);  // gross outliers
            depth.at(y, x) = d;
            // tilt the true normal by ~2 degrees in a random direction
            double ang = (2.0 * M_PI / 180.0) * u(r);
            double phi = 2.0 * M_PI * u(r);
            Vec3 n = Eigen::AngleAxisd(ang, Vec3(std::cos(phi), std::sin(phi), 0)) * true_n;
            normal.set_pixel3(y, x, n);
        }
    RansacConfig cfg;
    cfg.min_points = 100;
    cfg.seed = 99;
    PlaneEstimate est = estimate_plane(depth, normal, mask, intr, extr, cfg);
    double angle = std::acos(std::clamp(std::abs(est.plane.normal.z()), 0.0, 1.0)) * 180.0 / M_PI;
    CHECK(angle < 0.5);
    CHECK(std::abs(std::abs(est.plane.offset) - 1.0) < 0.01);
}

TEST_CASE("estimate_plane error cases") {
    CameraIntrinsics intr;
    intr.width = intr.height = 10;
    intr.fx = intr.fy = 10;
    intr.cx = intr.cy = 5;
    CameraExtrinsics extr;
    Buffer depth(10, 10, 1, 1.0);
    Buffer normal(10, 10, 3, 0.0);
    MaskBuffer small_mask(10, 10);
    small_mask.set(0, 0, true);
    RansacConfig cfg;
    cfg.min_points = 50;
    CHECK_THROWS_WITH_AS(estimate_plane(depth, normal, small_mask, intr, extr, cfg),
                         doctest::Contains("insufficient mirror pixels"), std::runtime_error);

    MaskBuffer full(10, 10, true);
    cfg.min_points = 10;
    // zero normals everywhere -> degenerate mean
    CHECK_THROWS_WITH_AS(estimate_plane(depth, normal, full, intr, extr, cfg),
                         doctest::Contains("degenerate normals"), std::runtime_error);
}

TEST_CASE("ransac determinism and threshold monotonicity") {
    CameraIntrinsics intr;
    intr.width = intr.height = 50;
    intr.fx = intr.fy = 50;
    intr.cx = intr.cy = 25;
    CameraExtrinsics extr;
    std::mt19937_64 r(21);
    std::normal_distribution<double> g(0.0, 1.0);
    Buffer depth(50, 50, 1, 0.0);
    Buffer normal(50, 50, 3, 0.0);
    MaskBuffer mask(50, 50, true);
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 50; ++x) {
            depth.at(y, x) = 1.0 + 0.05 * g(r);
            normal.set_pixel3(y, x, Vec3(0, 0, 1));
        }
    RansacConfig cfg;
    cfg.min_points = 50;
    cfg.seed = 123;
    PlaneEstimate a = estimate_plane(depth, normal, mask, intr, extr, cfg);
    PlaneEstimate b = estimate_plane(depth, normal, mask, intr, extr, cfg);
    CHECK(a.plane.offset == b.plane.offset);
    CHECK(a.inlier_count == b.inlier_count);

    RansacConfig tight = cfg;
    tight.distance_threshold = 0.02;
    PlaneEstimate c = estimate_plane(depth, normal, mask, intr, extr, tight);
    CHECK(c.inlier_count <= a.inlier_count);
}

TEST_CASE("normals_to_world renormalizes and rotates") {
    CameraExtrinsics extr;
    extr.rotation = Quat(Eigen::AngleAxisd(1.1, Vec3(1, 1, 0).normalized())).toRotationMatrix();
    Buffer cam_n(2, 2, 3, 0.0);
    cam_n.set_pixel3(0, 0, Vec3(0, 0, -0.4));  // composited, not unit
    Buffer world = normals_to_world(cam_n, extr);
    Vec3 expect = extr.rotation.transpose() * Vec3(0, 0, -1);
    CHECK((world.pixel3(0, 0) - expect).norm() < 1e-12);
    CHECK(world.pixel3(1, 1).norm() == doctest::Approx(0.0));  // zero stays zero
}

TEST_CASE("fuse_images hard select") {
    Buffer real(4, 4, 3, 0.2), virt(4, 4, 3, 0.8);
    MaskBuffer mask(4, 4);
    CHECK(fuse_images(real, virt, mask).data == real.data);
    MaskBuffer full(4, 4, true);
    CHECK(fuse_images(real, virt, full).data == virt.data);

    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) mask.set(y, x, (x + y) % 2 == 0);
    Buffer fused = fuse_images(real, virt, mask);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            CHECK(fused.at(y, x, 0) == ((x + y) % 2 == 0 ? 0.8 : 0.2));

    Buffer bad(3, 4, 3, 0.0);
    CHECK_THROWS_AS((void)fuse_images(real, bad, mask), std::runtime_error);
}
