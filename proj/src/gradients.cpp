#include "gsim/gradients.hpp"

#include <cmath>
#include <stdexcept>

#include "gsim/parallel.hpp"

namespace gsim {

namespace {
constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;

// Accumulated screen-space gradients for one projected Gaussian.
struct ProjGrad {
    Vec2 d_screen = Vec2::Zero();
    Mat2 d_cov2d = Mat2::Zero();
    Vec3 d_color = Vec3::Zero();
    double d_depth = 0.0;
    Vec3 d_normal = Vec3::Zero();
    double d_opacity = 0.0;  // activated opacity
};

struct SplatSample {
    int proj_index;
    double alpha;
    bool clamped;
};

// Replays the forward compositing per pixel and back-propagates the
// channel upstreams into per-projected-Gaussian screen-space gradients.
// Empty upstream buffers contribute nothing.
void composite_backward(const std::vector<ProjectedGaussian>& projected, const TileGrid& grid,
                        const CameraIntrinsics& intr, const RenderUpstream& up,
                        const RasterConfig& cfg, std::vector<ProjGrad>& out) {
    const bool has_c = up.color.count() > 0;
    const bool has_d = up.depth.count() > 0;
    const bool has_n = up.normal.count() > 0;
    for (const Buffer* b : {&up.color, &up.depth, &up.normal})
        for (size_t i = 0; i < b->count(); ++i)
            if (!std::isfinite(b->data[i]))
                throw std::runtime_error("non-finite upstream gradient at buffer offset " +
                                         std::to_string(i));

    const int n_tiles = grid.tiles_x * grid.tiles_y;
    const int n_workers = std::max(1, std::min(cfg.threads, n_tiles));
    std::vector<std::vector<ProjGrad>> partial(n_workers,
                                               std::vector<ProjGrad>(projected.size()));

    auto run_tile = [&](std::vector<ProjGrad>& acc, int tile_index) {
        const auto& tile = grid.tiles[tile_index];
        if (tile.empty()) return;
        int ty = tile_index / grid.tiles_x;
        int tx = tile_index % grid.tiles_x;
        int y0 = ty * cfg.tile_size, y1 = std::min(intr.height, y0 + cfg.tile_size);
        int x0 = tx * cfg.tile_size, x1 = std::min(intr.width, x0 + cfg.tile_size);
        std::vector<SplatSample> stack;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                Vec3 uc = has_c ? up.color.pixel3(y, x) : Vec3::Zero();
                double ud = has_d ? up.depth.at(y, x) : 0.0;
                Vec3 un = has_n ? up.normal.pixel3(y, x) : Vec3::Zero();
                if (uc.isZero() && ud == 0.0 && un.isZero()) continue;

                // forward replay
                stack.clear();
                Vec2 px(x, y);
                double t = 1.0;
                for (int idx : tile) {
                    const ProjectedGaussian& pg = projected[idx];
                    double alpha = blend_weight(pg, px);
                    if (alpha < cfg.alpha_skip) continue;
                    bool clamped = pg.opacity * std::exp(-0.5 * (px - pg.screen_mean)
                                                                    .dot(pg.cov2d_inv *
                                                                         (px - pg.screen_mean))) >
                                   0.99;
                    stack.push_back({idx, alpha, clamped});
                    t *= 1.0 - alpha;
                    if (t < cfg.transmittance_cutoff) break;
                }

                // reverse sweep with suffix sums; t currently holds the final
                // transmittance, recover per-splat T by dividing back out.
                Vec3 suffix_c = Vec3::Zero(), suffix_n = Vec3::Zero();
                double suffix_d = 0.0;
                for (size_t s = stack.size(); s-- > 0;) {
                    const SplatSample& sp = stack[s];
                    const ProjectedGaussian& pg = projected[sp.proj_index];
                    double one_minus = 1.0 - sp.alpha;
                    double t_before = t / one_minus;  // transmittance seen by this splat
                    t = t_before;
                    double w = sp.alpha * t_before;

                    ProjGrad& g = acc[sp.proj_index];
                    g.d_color += uc * w;
                    g.d_depth += ud * w;
                    g.d_normal += un * w;

                    double d_alpha = uc.dot(pg.color) * t_before + ud * pg.z_depth * t_before +
                                     un.dot(pg.normal_cam) * t_before -
                                     (uc.dot(suffix_c) + ud * suffix_d + un.dot(suffix_n)) /
                                         one_minus;

                    suffix_c += pg.color * w;
                    suffix_d += pg.z_depth * w;
                    suffix_n += pg.normal_cam * w;

                    if (sp.clamped) continue;  // hard gate at the 0.99 clamp
                    // alpha = O * exp(-m/2), m = delta^T Sigma^-1 delta
                    g.d_opacity += d_alpha * sp.alpha / pg.opacity;
                    double d_m = -0.5 * sp.alpha * d_alpha;
                    Vec2 delta = px - pg.screen_mean;
                    Vec2 a_delta = pg.cov2d_inv * delta;
                    g.d_screen += -2.0 * d_m * a_delta;
                    g.d_cov2d += -d_m * (a_delta * a_delta.transpose());
                }
            }
        }
    };

    if (n_workers <= 1) {
        for (int i = 0; i < n_tiles; ++i) run_tile(partial[0], i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&, w]() {
                for (int i = w; i < n_tiles; i += n_workers) run_tile(partial[w], i);
            });
        for (auto& th : pool) th.join();
    }
    out.assign(projected.size(), ProjGrad{});
    for (int w = 0; w < n_workers; ++w)
        for (size_t i = 0; i < projected.size(); ++i) {
            out[i].d_screen += partial[w][i].d_screen;
            out[i].d_cov2d += partial[w][i].d_cov2d;
            out[i].d_color += partial[w][i].d_color;
            out[i].d_depth += partial[w][i].d_depth;
            out[i].d_normal += partial[w][i].d_normal;
            out[i].d_opacity += partial[w][i].d_opacity;
        }
}

// dR/dq for a unit quaternion (w,x,y,z); index order matches Vec4 grads.
void rotation_quat_jacobians(const Quat& q, Mat3 dr[4]) {
    double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    dr[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    dr[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dr[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dr[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (int i = 0; i < 4; ++i) dr[i] *= 2.0;
}

Vec4 quat_as_vec(const Quat& q) { return Vec4(q.w(), q.x(), q.y(), q.z()); }

// Chain a gradient w.r.t. the unit quaternion back to the raw stored one.
Vec4 normalize_backward(const Quat& raw, const Vec4& d_unit) {
    Vec4 qr = quat_as_vec(raw);
    double n = qr.norm();
    Vec4 qh = qr / n;
    return (d_unit - qh * qh.dot(d_unit)) / n;
}

struct ShState {
    Vec3 dir;
    Vec3 raw;  // pre-clamp value per channel
};

ShState sh_forward_state(const Gaussian& g, int degree, const Vec3& cam_center) {
    ShState st;
    st.dir = (g.mean - cam_center).normalized();
    Vec3 c = kSH0 * g.color_coeffs[0];
    if (degree >= 1) {
        c += -kSH1 * st.dir.y() * g.color_coeffs[1];
        c += kSH1 * st.dir.z() * g.color_coeffs[2];
        c += -kSH1 * st.dir.x() * g.color_coeffs[3];
    }
    c.array() += 0.5;
    st.raw = c;
    return st;
}
}  // namespace

void SceneGrads::resize(const GaussianScene& scene) {
    size_t n = scene.size();
    mean.assign(n, Vec3::Zero());
    log_scale.assign(n, Vec3::Zero());
    rotation.assign(n, Vec4::Zero());
    opacity_logit.assign(n, 0.0);
    color_coeffs.assign(n, std::vector<Vec3>(scene.coeffs_per_channel(), Vec3::Zero()));
    screen_grad_norm.assign(n, 0.0);
}

void SceneGrads::add(const SceneGrads& other, double factor) {
    for (size_t i = 0; i < mean.size(); ++i) {
        mean[i] += factor * other.mean[i];
        log_scale[i] += factor * other.log_scale[i];
        rotation[i] += factor * other.rotation[i];
        opacity_logit[i] += factor * other.opacity_logit[i];
        for (size_t k = 0; k < color_coeffs[i].size(); ++k)
            color_coeffs[i][k] += factor * other.color_coeffs[i][k];
        screen_grad_norm[i] += std::abs(factor) * other.screen_grad_norm[i];
    }
}

void SceneGrads::scale(double factor) {
    for (size_t i = 0; i < mean.size(); ++i) {
        mean[i] *= factor;
        log_scale[i] *= factor;
        rotation[i] *= factor;
        opacity_logit[i] *= factor;
        for (auto& c : color_coeffs[i]) c *= factor;
        screen_grad_norm[i] *= std::abs(factor);
    }
}

SceneGrads backward_scene(const GaussianScene& scene, const CameraIntrinsics& intr,
                          const CameraExtrinsics& extr, const RenderUpstream& upstream,
                          const RasterConfig& cfg) {
    auto projected = project_scene(scene, intr, extr, cfg);
    TileGrid grid = build_tile_grid(projected, intr, cfg);
    std::vector<ProjGrad> pg_grads;
    composite_backward(projected, grid, intr, upstream, cfg, pg_grads);

    SceneGrads grads;
    grads.resize(scene);
    const Mat3 w = extr.rotation;
    const Vec3 cam_center = extr.center();

    parallel_for(static_cast<int>(projected.size()), cfg.threads, [&](int pi) {
        const ProjectedGaussian& pg = projected[pi];
        const ProjGrad& up = pg_grads[pi];
        int gi = pg.world_index;
        const Gaussian& g = scene.gaussians[gi];

        Vec3 t_cam = extr.to_camera(g.mean);
        double z = t_cam.z();
        ProjectionJacobian pj = projection_jacobian(intr, t_cam);
        const auto& jac = pj.j;
        Quat q = g.unit_rotation();
        Mat3 rot = q.toRotationMatrix();
        Vec3 scale = g.scale();
        Mat3 sigma = build_covariance(scale, q);

        // screen mean + depth channel -> camera point
        Vec3 d_tcam = jac.transpose() * up.d_screen;
        d_tcam.z() += up.d_depth;

        // 2D covariance -> camera covariance V and Jacobian entries
        Mat2 d_cov2d = 0.5 * (up.d_cov2d + up.d_cov2d.transpose());
        Mat3 v = w * sigma * w.transpose();
        Mat3 d_v = jac.transpose() * d_cov2d * jac;
        Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov2d * jac * v;

        double z2 = z * z;
        // when the frustum clamp is active J(:,2) = -f*c/z with c constant,
        // so the x/y dependence gates off and the z power drops by one
        if (!pj.clamped_x) d_tcam.x() += d_jac(0, 2) * (-intr.fx / z2);
        if (!pj.clamped_y) d_tcam.y() += d_jac(1, 2) * (-intr.fy / z2);
        d_tcam.z() += d_jac(0, 0) * (-intr.fx / z2) + d_jac(1, 1) * (-intr.fy / z2) +
                      d_jac(0, 2) * (-jac(0, 2) / z) * (pj.clamped_x ? 1.0 : 2.0) +
                      d_jac(1, 2) * (-jac(1, 2) / z) * (pj.clamped_y ? 1.0 : 2.0);

        Vec3 d_mean = w.transpose() * d_tcam;
        Mat3 d_sigma = w.transpose() * d_v * w;

        // SH color
        ShState sh = sh_forward_state(g, scene.sh_degree, cam_center);
        Vec3 d_raw;
        for (int ch = 0; ch < 3; ++ch)
            d_raw[ch] = (sh.raw[ch] > 0.0 && sh.raw[ch] < 1.0) ? up.d_color[ch] : 0.0;
        grads.color_coeffs[gi][0] += kSH0 * d_raw;
        Vec3 d_dir = Vec3::Zero();
        if (scene.sh_degree >= 1) {
            grads.color_coeffs[gi][1] += -kSH1 * sh.dir.y() * d_raw;
            grads.color_coeffs[gi][2] += kSH1 * sh.dir.z() * d_raw;
            grads.color_coeffs[gi][3] += -kSH1 * sh.dir.x() * d_raw;
            d_dir.x() = -kSH1 * d_raw.dot(g.color_coeffs[3]);
            d_dir.y() = -kSH1 * d_raw.dot(g.color_coeffs[1]);
            d_dir.z() = kSH1 * d_raw.dot(g.color_coeffs[2]);
            Vec3 u = g.mean - cam_center;
            double un = u.norm();
            d_mean += (d_dir - sh.dir * sh.dir.dot(d_dir)) / un;
        }

        // opacity logit
        double o = pg.opacity;
        grads.opacity_logit[gi] += up.d_opacity * o * (1.0 - o);

        // covariance -> (rotation, scale); Sigma = M M^T with M = R S
        Mat3 d_sigma_sym = 0.5 * (d_sigma + d_sigma.transpose());
        Mat3 m = rot * scale.asDiagonal();
        Mat3 d_m = 2.0 * d_sigma_sym * m;
        Mat3 d_rot = d_m * scale.asDiagonal();
        Vec3 d_scale = (rot.transpose() * d_m).diagonal();

        // normal channel: n_cam = s * W * R[:,k]
        int k = shortest_axis_index(scale);
        Vec3 n_cam_unflipped = w * rot.col(k);
        double sflip = n_cam_unflipped.z() > 0.0 ? -1.0 : 1.0;
        d_rot.col(k) += sflip * (w.transpose() * up.d_normal);

        Mat3 dr[4];
        rotation_quat_jacobians(q, dr);
        Vec4 d_q_unit;
        for (int i = 0; i < 4; ++i) d_q_unit[i] = (d_rot.array() * dr[i].array()).sum();
        grads.rotation[gi] += normalize_backward(g.rotation, d_q_unit);

        grads.log_scale[gi] += d_scale.cwiseProduct(scale);
        grads.mean[gi] += d_mean;
        grads.screen_grad_norm[gi] += up.d_screen.norm();
    });
    return grads;
}

PoseGrads backward_pose(const GaussianScene& scene, const CameraIntrinsics& intr,
                        const CameraExtrinsics& extr, const Buffer& upstream_color,
                        const RasterConfig& cfg) {
    auto projected = project_scene(scene, intr, extr, cfg);
    TileGrid grid = build_tile_grid(projected, intr, cfg);
    RenderUpstream up;
    up.color = upstream_color;
    std::vector<ProjGrad> pg_grads;
    composite_backward(projected, grid, intr, up, cfg, pg_grads);

    const Mat3 w = extr.rotation;
    const Vec3 t = extr.translation;
    const Vec3 cam_center = extr.center();

    Mat3 d_w = Mat3::Zero();
    Vec3 d_t = Vec3::Zero();

    for (size_t pi = 0; pi < projected.size(); ++pi) {
        const ProjectedGaussian& pg = projected[pi];
        const ProjGrad& upg = pg_grads[pi];
        const Gaussian& g = scene.gaussians[pg.world_index];

        Vec3 t_cam = extr.to_camera(g.mean);
        double z = t_cam.z();
        ProjectionJacobian pj = projection_jacobian(intr, t_cam);
        const auto& jac = pj.j;
        Mat3 sigma = build_covariance(g.scale(), g.unit_rotation());

        Vec3 d_tcam = jac.transpose() * upg.d_screen;

        Mat2 d_cov2d = 0.5 * (upg.d_cov2d + upg.d_cov2d.transpose());
        Mat3 v = w * sigma * w.transpose();
        Mat3 d_v = jac.transpose() * d_cov2d * jac;
        Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov2d * jac * v;
        double z2 = z * z;
        if (!pj.clamped_x) d_tcam.x() += d_jac(0, 2) * (-intr.fx / z2);
        if (!pj.clamped_y) d_tcam.y() += d_jac(1, 2) * (-intr.fy / z2);
        d_tcam.z() += d_jac(0, 0) * (-intr.fx / z2) + d_jac(1, 1) * (-intr.fy / z2) +
                      d_jac(0, 2) * (-jac(0, 2) / z) * (pj.clamped_x ? 1.0 : 2.0) +
                      d_jac(1, 2) * (-jac(1, 2) / z) * (pj.clamped_y ? 1.0 : 2.0);

        // t_cam = W mu + t
        d_w += d_tcam * g.mean.transpose();
        d_t += d_tcam;

        // V = W Sigma W^T
        d_w += 2.0 * d_v * w * sigma;

        // SH view direction via the camera center
        if (scene.sh_degree >= 1) {
            ShState sh = sh_forward_state(g, scene.sh_degree, cam_center);
            Vec3 d_raw;
            for (int ch = 0; ch < 3; ++ch)
                d_raw[ch] = (sh.raw[ch] > 0.0 && sh.raw[ch] < 1.0) ? upg.d_color[ch] : 0.0;
            Vec3 d_dir(-kSH1 * d_raw.dot(g.color_coeffs[3]), -kSH1 * d_raw.dot(g.color_coeffs[1]),
                       kSH1 * d_raw.dot(g.color_coeffs[2]));
            Vec3 u = g.mean - cam_center;
            Vec3 d_u = (d_dir - sh.dir * sh.dir.dot(d_dir)) / u.norm();
            Vec3 d_center = -d_u;
            // center = -W^T t
            d_w += -t * d_center.transpose();
            d_t += -(w * d_center);
        }
    }

    PoseGrads out;
    out.d_rotation = d_w;
    out.d_translation = d_t;
    // left-multiplied tangent: W(eps) = Exp(omega) W, t(eps) = Exp(omega) t + v
    for (int k = 0; k < 3; ++k) {
        Mat3 gen = Mat3::Zero();
        int a = (k + 1) % 3, b = (k + 2) % 3;
        gen(b, a) = 1.0;
        gen(a, b) = -1.0;
        out.tangent[k] = (d_w.array() * (gen * w).array()).sum() + d_t.dot(gen * t);
    }
    out.tangent.tail<3>() = d_t;
    return out;
}

void plane_tangent_basis(const Vec3& n, Vec3& e1, Vec3& e2) {
    int k = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(n[i]) < std::abs(n[k])) k = i;
    e1 = n.cross(Vec3::Unit(k)).normalized();
    e2 = n.cross(e1);
}

PlaneGrads chain_pose_to_plane(const PoseGrads& vg, const CameraExtrinsics& real_cam,
                               const Plane& plane) {
    const Vec3& n = plane.normal;
    // R' = R A, t' = t + 2 o R n with A = I - 2 n n^T
    Mat3 d_a = real_cam.rotation.transpose() * vg.d_rotation;
    Vec3 rt_dt = real_cam.rotation.transpose() * vg.d_translation;
    Vec3 d_n = -2.0 * (d_a + d_a.transpose()) * n + 2.0 * plane.offset * rt_dt;
    double d_o = 2.0 * n.dot(rt_dt);

    PlaneGrads out;
    plane_tangent_basis(n, out.tangent_e1, out.tangent_e2);
    out.d_normal_tangent = Vec2(out.tangent_e1.dot(d_n), out.tangent_e2.dot(d_n));
    out.d_offset = d_o;
    return out;
}

FiniteDiffReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x0, const Eigen::VectorXd& analytic,
                                   double h, double tolerance, double skip_below) {
    FiniteDiffReport report;
    for (int i = 0; i < x0.size(); ++i) {
        Eigen::VectorXd xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        double numeric = (f(xp) - f(xm)) / (2.0 * h);
        double a = analytic[i];
        FiniteDiffReport::Entry e;
        e.coordinate = i;
        e.analytic = a;
        e.numeric = numeric;
        e.skipped = std::abs(a) < skip_below && std::abs(numeric) < skip_below;
        e.rel_error =
            e.skipped ? 0.0 : std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
        report.entries.push_back(e);
        if (!e.skipped) {
            report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            if (e.rel_error > tolerance) report.pass = false;
        }
    }
    return report;
}

}  // namespace gsim
