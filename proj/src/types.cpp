#include "gsim/types.hpp"

#include <cmath>
#include <sstream>

namespace gsim {

Mat3 build_covariance(const Vec3& scale, const Quat& rotation) {
    Mat3 r = rotation.normalized().toRotationMatrix();
    Mat3 cov = r * scale.array().square().matrix().asDiagonal() * r.transpose();
    // symmetrize away float noise
    return 0.5 * (cov + cov.transpose());
}

int shortest_axis_index(const Vec3& scale) {
    int k = 0;
    for (int i = 1; i < 3; ++i)
        if (scale[i] < scale[k]) k = i;
    return k;
}

Vec3 shortest_axis_normal(const Gaussian& g) {
    Mat3 r = g.unit_rotation().toRotationMatrix();
    return r.col(shortest_axis_index(g.scale()));
}

std::vector<std::string> validate_scene(const GaussianScene& scene) {
    std::vector<std::string> violations;
    auto flag = [&](size_t i, const std::string& what) {
        std::ostringstream os;
        os << "gaussian " << i << ": " << what;
        violations.push_back(os.str());
    };
    const int expect_coeffs = scene.coeffs_per_channel();
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        if (!g.mean.allFinite()) flag(i, "non-finite mean");
        if (!g.log_scale.allFinite()) flag(i, "non-finite log-scale");
        if (!std::isfinite(g.opacity_logit)) flag(i, "non-finite opacity logit");
        double qn = g.rotation.norm();
        if (!std::isfinite(qn) || qn < 1e-12)
            flag(i, "degenerate quaternion");
        else if (std::abs(qn - 1.0) > 1e-6)
            flag(i, "non-unit quaternion");
        if (static_cast<int>(g.color_coeffs.size()) != expect_coeffs)
            flag(i, "color_coeffs length mismatch");
        for (const Vec3& c : g.color_coeffs)
            if (!c.allFinite()) {
                flag(i, "non-finite color coefficient");
                break;
            }
    }
    return violations;
}

}  // namespace gsim
