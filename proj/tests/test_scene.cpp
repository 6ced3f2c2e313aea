#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gsim/types.hpp"

using namespace gsim;

namespace {
Gaussian make_gaussian() {
    Gaussian g;
    g.color_coeffs.assign(1, Vec3::Zero());
    return g;
}
}  // namespace

TEST_CASE("build_covariance identity cases") {
    Mat3 c = build_covariance(Vec3(1, 1, 1), Quat::Identity());
    CHECK((c - Mat3::Identity()).norm() == doctest::Approx(0.0).epsilon(1e-12));

    c = build_covariance(Vec3(2, 1, 1), Quat::Identity());
    CHECK((c - Vec3(4, 1, 1).asDiagonal().toDenseMatrix()).norm() ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("build_covariance 90 degree z rotation permutes axes") {
    Quat q(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
    Mat3 c = build_covariance(Vec3(1, 2, 3), q);
    Mat3 expect = Vec3(4, 1, 9).asDiagonal();
    CHECK((c - expect).norm() < 1e-12);
}

TEST_CASE("build_covariance is symmetric with eigenvalues scale^2") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 s(uni(rng), uni(rng), uni(rng));
        Quat q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
        q.normalize();
        Mat3 c = build_covariance(s, q);
        CHECK((c - c.transpose()).norm() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat3> es(c);
        Vec3 ev = es.eigenvalues();
        Vec3 expect = s.cwiseProduct(s);
        std::sort(expect.data(), expect.data() + 3);
        CHECK((ev - expect).cwiseAbs().maxCoeff() < 1e-9);
        // SPD
        CHECK(ev.minCoeff() > 0.0);
    }
}

TEST_CASE("shortest_axis_normal picks the flat direction") {
    Gaussian g = make_gaussian();
    g.log_scale = Vec3(1, 1, 0.1).array().log();
    CHECK((shortest_axis_normal(g) - Vec3(0, 0, 1)).norm() < 1e-12);

    g.log_scale = Vec3(0.1, 1, 1).array().log();
    CHECK((shortest_axis_normal(g) - Vec3(1, 0, 0)).norm() < 1e-12);

    g.log_scale = Vec3(1, 1, 1).array().log();  // tie-break to index 0
    CHECK((shortest_axis_normal(g) - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("shortest_axis_normal orthogonal to longer eigenvectors") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Gaussian g = make_gaussian();
        g.log_scale = Vec3(0.4, 0.9, 0.05).array().log();
        Quat q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
        q.normalize();
        g.rotation = q;
        Vec3 n = shortest_axis_normal(g);
        CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
        Mat3 cov = build_covariance(g.scale(), q);
        Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
        // eigenvalues ascending: columns 1 and 2 are the longer axes
        CHECK(std::abs(n.dot(es.eigenvectors().col(1))) < 1e-9);
        CHECK(std::abs(n.dot(es.eigenvectors().col(2))) < 1e-9);
    }
}

TEST_CASE("validate_scene diagnostics") {
    GaussianScene scene;
    scene.sh_degree = 0;
    for (int i = 0; i < 10; ++i) {
        Gaussian g = make_gaussian();
        g.mean = Vec3(i * 0.1, 0, 0);
        scene.gaussians.push_back(g);
    }
    CHECK(validate_scene(scene).empty());

    scene.gaussians[3].mean.x() = std::nan("");
    auto v = validate_scene(scene);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("3") != std::string::npos);

    scene.gaussians[3].mean.x() = 0.3;
    scene.gaussians[5].rotation = Quat(1.5, 0, 0, 0);
    v = validate_scene(scene);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("5") != std::string::npos);
}

TEST_CASE("camera center inverts world-to-camera transform") {
    CameraExtrinsics extr;
    extr.rotation = Quat(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized())).toRotationMatrix();
    extr.translation = Vec3(0.4, -0.2, 1.1);
    CHECK(extr.to_camera(extr.center()).norm() < 1e-12);
}

TEST_CASE("plane signed distance sign convention") {
    Plane p{Vec3(0, 0, 1), 2.0};
    CHECK(p.signed_distance(Vec3(5, 5, 2)) == doctest::Approx(0.0));
    CHECK(p.signed_distance(Vec3(0, 0, 3)) == doctest::Approx(1.0));
    CHECK(p.signed_distance(Vec3(0, 0, 0)) == doctest::Approx(-2.0));
}

TEST_CASE("activation round trips") {
    CHECK(sigmoid(logit(0.37)) == doctest::Approx(0.37).epsilon(1e-12));
    Gaussian g = make_gaussian();
    g.opacity_logit = logit(0.9);
    CHECK(g.opacity() == doctest::Approx(0.9).epsilon(1e-12));
    g.log_scale = Vec3(0.2, 0.5, 1.5).array().log();
    CHECK((g.scale() - Vec3(0.2, 0.5, 1.5)).norm() < 1e-12);
    CHECK(g.scale().minCoeff() > 0.0);
}
