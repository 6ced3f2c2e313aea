#include "gsim/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "gsim/parallel.hpp"

namespace gsim {

namespace {
constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;
}  // namespace

Vec3 evaluate_sh(const std::vector<Vec3>& coeffs, int degree, const Vec3& view_dir) {
    Vec3 c = kSH0 * coeffs[0];
    if (degree >= 1) {
        c += -kSH1 * view_dir.y() * coeffs[1];
        c += kSH1 * view_dir.z() * coeffs[2];
        c += -kSH1 * view_dir.x() * coeffs[3];
    }
    c.array() += 0.5;
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

ProjectionJacobian projection_jacobian(const CameraIntrinsics& intr, const Vec3& t_cam) {
    double z = t_cam.z();
    double lim_x = 1.3 * (0.5 * intr.width / intr.fx);
    double lim_y = 1.3 * (0.5 * intr.height / intr.fy);
    double txz = t_cam.x() / z, tyz = t_cam.y() / z;
    ProjectionJacobian pj;
    pj.clamped_x = std::abs(txz) > lim_x;
    pj.clamped_y = std::abs(tyz) > lim_y;
    double tx = std::clamp(txz, -lim_x, lim_x) * z;
    double ty = std::clamp(tyz, -lim_y, lim_y) * z;
    pj.j << intr.fx / z, 0, -intr.fx * tx / (z * z),
            0, intr.fy / z, -intr.fy * ty / (z * z);
    return pj;
}

// Mahalanobis radius beyond which the blend weight falls under the skip
// threshold; the screen footprint is the circumscribing circle.
static double footprint_radius(const ProjectedGaussian& pg, const RasterConfig& cfg) {
    if (pg.opacity <= cfg.alpha_skip) return 0.0;
    double rho = std::sqrt(2.0 * std::log(pg.opacity / cfg.alpha_skip));
    Eigen::SelfAdjointEigenSolver<Mat2> es(pg.cov2d);
    double lmax = es.eigenvalues().maxCoeff();
    return rho * std::sqrt(std::max(lmax, 0.0));
}

std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, int sh_degree,
                                                  const CameraIntrinsics& intr,
                                                  const CameraExtrinsics& extr,
                                                  const RasterConfig& cfg) {
    Vec3 t_cam = extr.to_camera(g.mean);
    double z = t_cam.z();
    if (z <= cfg.near_plane) return std::nullopt;

    ProjectedGaussian pg;
    pg.z_depth = z;
    pg.screen_mean =
        Vec2(intr.fx * t_cam.x() / z + intr.cx, intr.fy * t_cam.y() / z + intr.cy);
    pg.opacity = g.opacity();

    Mat3 cov = build_covariance(g.scale(), g.unit_rotation());
    Mat3 v = extr.rotation * cov * extr.rotation.transpose();
    auto jac = projection_jacobian(intr, t_cam).j;
    pg.cov2d = jac * v * jac.transpose() + cfg.cov_lowpass * Mat2::Identity();
    double det = pg.cov2d.determinant();
    if (det <= 0.0 || !std::isfinite(det)) return std::nullopt;
    pg.cov2d_inv = pg.cov2d.inverse();

    double r = footprint_radius(pg, cfg);
    if (r <= 0.0) return std::nullopt;
    if (pg.screen_mean.x() + r < 0 || pg.screen_mean.x() - r > intr.width - 1 ||
        pg.screen_mean.y() + r < 0 || pg.screen_mean.y() - r > intr.height - 1)
        return std::nullopt;

    Vec3 dir = (g.mean - extr.center()).normalized();
    pg.color = evaluate_sh(g.color_coeffs, sh_degree, dir);

    Vec3 n_cam = extr.rotation * shortest_axis_normal(g);
    if (n_cam.z() > 0.0) n_cam = -n_cam;  // camera-facing
    pg.normal_cam = n_cam;
    return pg;
}

double blend_weight(const ProjectedGaussian& pg, const Vec2& pixel) {
    Vec2 d = pixel - pg.screen_mean;
    double m = d.dot(pg.cov2d_inv * d);
    double alpha = pg.opacity * std::exp(-0.5 * m);
    return std::min(alpha, 0.99);
}

std::vector<ProjectedGaussian> project_scene(const GaussianScene& scene,
                                             const CameraIntrinsics& intr,
                                             const CameraExtrinsics& extr,
                                             const RasterConfig& cfg) {
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        auto pg = project_gaussian(scene.gaussians[i], scene.sh_degree, intr, extr, cfg);
        if (pg) {
            pg->world_index = static_cast<int>(i);
            out.push_back(*pg);
        }
    }
    return out;
}

TileGrid build_tile_grid(const std::vector<ProjectedGaussian>& projected,
                         const CameraIntrinsics& intr, const RasterConfig& cfg) {
    TileGrid grid;
    grid.tile_size = cfg.tile_size;
    grid.tiles_x = (intr.width + cfg.tile_size - 1) / cfg.tile_size;
    grid.tiles_y = (intr.height + cfg.tile_size - 1) / cfg.tile_size;
    grid.tiles.assign(static_cast<size_t>(grid.tiles_x) * grid.tiles_y, {});

    for (size_t i = 0; i < projected.size(); ++i) {
        const ProjectedGaussian& pg = projected[i];
        double r = footprint_radius(pg, cfg);
        int tx0 = std::max(0, static_cast<int>(std::floor((pg.screen_mean.x() - r) / cfg.tile_size)));
        int tx1 = std::min(grid.tiles_x - 1,
                           static_cast<int>(std::floor((pg.screen_mean.x() + r) / cfg.tile_size)));
        int ty0 = std::max(0, static_cast<int>(std::floor((pg.screen_mean.y() - r) / cfg.tile_size)));
        int ty1 = std::min(grid.tiles_y - 1,
                           static_cast<int>(std::floor((pg.screen_mean.y() + r) / cfg.tile_size)));
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                grid.tiles[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(
                    static_cast<int>(i));
    }
    // front-to-back order; ties by source index for determinism
    for (auto& tile : grid.tiles) {
        std::sort(tile.begin(), tile.end(), [&](int a, int b) {
            if (projected[a].z_depth != projected[b].z_depth)
                return projected[a].z_depth < projected[b].z_depth;
            return projected[a].world_index < projected[b].world_index;
        });
    }
    return grid;
}

RenderOutput render(const GaussianScene& scene, const CameraIntrinsics& intr,
                    const CameraExtrinsics& extr, const RasterConfig& cfg) {
    RenderOutput out;
    out.color = Buffer(intr.height, intr.width, 3);
    out.depth = Buffer(intr.height, intr.width, 1);
    out.normal = Buffer(intr.height, intr.width, 3);
    out.alpha = Buffer(intr.height, intr.width, 1);

    auto projected = project_scene(scene, intr, extr, cfg);
    TileGrid grid = build_tile_grid(projected, intr, cfg);

    const int n_tiles = grid.tiles_x * grid.tiles_y;
    auto raster_tile = [&](int tile_index) {
        int ty = tile_index / grid.tiles_x;
        int tx = tile_index % grid.tiles_x;
        {
            const auto& tile = grid.tiles[tile_index];
            if (tile.empty()) return;
            int y0 = ty * cfg.tile_size, y1 = std::min(intr.height, y0 + cfg.tile_size);
            int x0 = tx * cfg.tile_size, x1 = std::min(intr.width, x0 + cfg.tile_size);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    double t = 1.0;
                    Vec3 c = Vec3::Zero(), n = Vec3::Zero();
                    double d = 0.0;
                    Vec2 px(x, y);
                    for (int idx : tile) {
                        const ProjectedGaussian& pg = projected[idx];
                        double alpha = blend_weight(pg, px);
                        if (alpha < cfg.alpha_skip) continue;
                        double w = alpha * t;
                        c += pg.color * w;
                        d += pg.z_depth * w;
                        n += pg.normal_cam * w;
                        t *= 1.0 - alpha;
                        if (t < cfg.transmittance_cutoff) break;
                    }
                    out.color.set_pixel3(y, x, c);
                    out.depth.at(y, x) = d;
                    out.normal.set_pixel3(y, x, n);
                    out.alpha.at(y, x) = 1.0 - t;
                }
            }
        }
    };
    parallel_for(n_tiles, cfg.threads, raster_tile);
    return out;
}

}  // namespace gsim
