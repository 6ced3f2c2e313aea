#include "gsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "gsim/gradients.hpp"
#include "gsim/rasterizer.hpp"

namespace fs = std::filesystem;

namespace gsim {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

double masked_psnr(const Buffer& pred, const Buffer& gt, const MaskBuffer& mask, bool inside) {
    double mse = 0.0;
    size_t n = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (mask.at(y, x) != inside) continue;
            for (int c = 0; c < pred.channels; ++c) {
                double d = pred.at(y, x, c) - gt.at(y, x, c);
                mse += d * d;
                ++n;
            }
        }
    if (n == 0) return -1.0;
    mse /= static_cast<double>(n);
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}
void scatter_add_grads(SceneGrads& dst, const SceneGrads& src,
                       const std::vector<size_t>& indices) {
    for (size_t k = 0; k < indices.size(); ++k) {
        size_t i = indices[k];
        dst.mean[i] += src.mean[k];
        dst.log_scale[i] += src.log_scale[k];
        dst.rotation[i] += src.rotation[k];
        dst.opacity_logit[i] += src.opacity_logit[k];
        for (size_t c = 0; c < src.color_coeffs[k].size(); ++c)
            dst.color_coeffs[i][c] += src.color_coeffs[k][c];
        dst.screen_grad_norm[i] += src.screen_grad_norm[k];
    }
}
}  // namespace

StageFlags stage_flags(StageId id, const TrainConfig& cfg) {
    StageFlags f;
    switch (id) {
        case StageId::Init:
            break;
        case StageId::MirrorPlanePrediction:
            f.use_mask_fill = true;
            f.enable_depth_normal_losses = true;
            break;
        case StageId::VirtualCameraOptimization:
            f.enable_fusion = true;
            f.grads_to_gaussians = cfg.joint_camera_gaussians;
            f.grads_to_plane = true;
            break;
        case StageId::FineTune:
            f.enable_fusion = true;
            f.enable_depth_normal_losses = cfg.mpp_losses_in_finetune;
            f.use_mask_fill = cfg.mpp_losses_in_finetune;
            break;
    }
    return f;
}

Buffer render_view_fused(const GaussianScene& scene, const std::optional<Plane>& plane,
                         const MirrorDatasetView& view, const RasterConfig& rcfg,
                         double cull_margin) {
    RenderOutput real = render(scene, view.intrinsics, view.extrinsics, rcfg);
    if (!plane || view.mask.count_true() == 0) return real.color;
    MirrorCulledScene culled = cull_mirror_backside(scene, *plane, cull_margin);
    RenderOutput virt =
        render(culled.scene, view.intrinsics, reflect_extrinsics(view.extrinsics, *plane), rcfg);
    return fuse_images(real.color, virt.color, view.mask);
}

ViewMetrics compute_view_metrics(const Buffer& pred, const MirrorDatasetView& view) {
    ViewMetrics m;
    m.psnr = psnr(pred, view.image);
    m.ssim = ssim(pred, view.image);
    if (view.mask.count_true() > 0) {
        m.psnr_mirror = masked_psnr(pred, view.image, view.mask, true);
        Buffer smap = ssim_map(pred, view.image);
        double sum = 0.0;
        size_t n = 0;
        for (int y = 0; y < smap.height; ++y)
            for (int x = 0; x < smap.width; ++x)
                if (view.mask.at(y, x)) {
                    sum += smap.at(y, x);
                    ++n;
                }
        m.ssim_mirror = sum / static_cast<double>(n);
    }
    return m;
}

Trainer::Trainer(Dataset dataset, TrainConfig config)
    : dataset_(std::move(dataset)), config_(config), rng_(config.seed) {
    scene_.sh_degree = config_.sh_degree;
    init_scene();
}

RasterConfig Trainer::rcfg() const {
    RasterConfig c;
    c.threads = config_.threads;
    return c;
}

size_t Trainer::param_stride() const {
    return 11 + 3 * static_cast<size_t>(scene_.coeffs_per_channel());
}

void Trainer::init_scene() {
    std::uniform_real_distribution<double> pos(-0.45 * config_.scene_extent,
                                               0.45 * config_.scene_extent);
    std::normal_distribution<double> gauss(0.0, 1.0);
    scene_.gaussians.clear();
    double init_scale = 0.03 * config_.scene_extent;
    for (int i = 0; i < config_.init_gaussians; ++i) {
        Gaussian g;
        g.mean = Vec3(pos(rng_), pos(rng_), pos(rng_));
        g.log_scale = Vec3::Constant(std::log(init_scale));
        Vec4 q(gauss(rng_), gauss(rng_), gauss(rng_), gauss(rng_));
        q.normalize();
        g.rotation = Quat(q[0], q[1], q[2], q[3]);
        g.opacity_logit = logit(0.1);
        g.color_coeffs.assign(scene_.coeffs_per_channel(), Vec3::Zero());
        g.color_coeffs[0] = 0.1 * Vec3(gauss(rng_), gauss(rng_), gauss(rng_));
        scene_.gaussians.push_back(g);
    }
    adam_.m.assign(scene_.size() * param_stride(), 0.0);
    adam_.v.assign(scene_.size() * param_stride(), 0.0);
    grad_accum_.assign(scene_.size(), 0.0);
    grad_count_.assign(scene_.size(), 0);
}

const MirrorDatasetView& Trainer::next_view() {
    if (view_cursor_ >= view_order_.size()) {
        view_order_.resize(dataset_.train.size());
        for (size_t i = 0; i < view_order_.size(); ++i) view_order_[i] = i;
        std::shuffle(view_order_.begin(), view_order_.end(), rng_);
        view_cursor_ = 0;
    }
    return dataset_.train[view_order_[view_cursor_++]];
}

const MirrorDatasetView* Trainer::next_mirror_view() {
    for (size_t tries = 0; tries <= dataset_.train.size(); ++tries) {
        const MirrorDatasetView& v = next_view();
        if (v.mask.count_true() > 0) return &v;
    }
    return nullptr;
}

void Trainer::adam_step_scene(const SceneGrads& grads) {
    ++adam_steps_;
    double t = static_cast<double>(adam_steps_);
    double bc1 = 1.0 - std::pow(kBeta1, t);
    double bc2 = 1.0 - std::pow(kBeta2, t);
    double progress =
        std::min(1.0, static_cast<double>(step_) / std::max(1, config_.total_steps));
    double lr_mean = config_.lr_mean > 0.0
                         ? config_.lr_mean *
                               std::pow(config_.lr_mean_final / config_.lr_mean, progress)
                         : 0.0;

    const size_t stride = param_stride();
    const int cpc = scene_.coeffs_per_channel();
    for (size_t i = 0; i < scene_.size(); ++i) {
        Gaussian& g = scene_.gaussians[i];
        double* m = &adam_.m[i * stride];
        double* v = &adam_.v[i * stride];
        size_t k = 0;
        auto upd = [&](double& param, double grad, double lr) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * grad;
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * grad * grad;
            param -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kEps);
            ++k;
        };
        for (int d = 0; d < 3; ++d) upd(g.mean[d], grads.mean[i][d], lr_mean);
        for (int d = 0; d < 3; ++d) upd(g.log_scale[d], grads.log_scale[i][d], config_.lr_scale);
        upd(g.rotation.w(), grads.rotation[i][0], config_.lr_rotation);
        upd(g.rotation.x(), grads.rotation[i][1], config_.lr_rotation);
        upd(g.rotation.y(), grads.rotation[i][2], config_.lr_rotation);
        upd(g.rotation.z(), grads.rotation[i][3], config_.lr_rotation);
        upd(g.opacity_logit, grads.opacity_logit[i], config_.lr_opacity);
        for (int c = 0; c < cpc; ++c) {
            double lr = c == 0 ? config_.lr_sh : config_.lr_sh / 20.0;
            for (int d = 0; d < 3; ++d) upd(g.color_coeffs[c][d], grads.color_coeffs[i][c][d], lr);
        }
    }
}

void Trainer::adam_step_plane(const Vec2& d_normal_tangent, double d_offset, const Vec3& e1,
                              const Vec3& e2) {
    if (!plane_) return;
    ++plane_adam_steps_;
    double t = static_cast<double>(plane_adam_steps_);
    double bc1 = 1.0 - std::pow(kBeta1, t);
    double bc2 = 1.0 - std::pow(kBeta2, t);
    Vec3 grad(d_normal_tangent[0], d_normal_tangent[1], d_offset);
    Vec3 update;
    for (int i = 0; i < 3; ++i) {
        plane_m_[i] = kBeta1 * plane_m_[i] + (1.0 - kBeta1) * grad[i];
        plane_v_[i] = kBeta2 * plane_v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        update[i] = config_.vco_learning_rate * (plane_m_[i] / bc1) /
                    (std::sqrt(plane_v_[i] / bc2) + kEps);
    }
    // retraction back to the unit sphere
    plane_->normal = (plane_->normal - update[0] * e1 - update[1] * e2).normalized();
    plane_->offset -= update[2];
}

void Trainer::accumulate_densify_stats(const SceneGrads& grads) {
    for (size_t i = 0; i < scene_.size(); ++i) {
        if (grads.screen_grad_norm[i] > 0.0) {
            grad_accum_[i] += grads.screen_grad_norm[i];
            grad_count_[i] += 1;
        }
    }
}

void Trainer::append_metrics(StageId stage, const LossBreakdown& loss) {
    MetricsRow row;
    row.step = step_;
    row.stage = stage;
    row.loss_total = loss.total;
    row.loss_rgb = loss.rgb;
    row.loss_n = loss.normal_consistency;
    row.loss_smooth = loss.smooth;
    row.loss_pc = loss.planar_constraint;
    row.psnr_holdout = last_holdout_psnr_;
    metrics_.push_back(row);
    if (!std::isfinite(loss.total))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step_) +
                                 " (stage " + stage_name(stage) + ")");
}

LossBreakdown Trainer::train_step_init(const MirrorDatasetView& view) {
    ++step_;
    RenderOutput out = render(scene_, view.intrinsics, view.extrinsics, rcfg());
    LossResult lr = loss_rgb(out.color, view.image, config_.rgb_dssim_weight);
    LossBreakdown breakdown;
    breakdown.rgb = lr.value;
    breakdown.total = lr.value;
    breakdown.upstream.color = lr.grad;
    SceneGrads grads =
        backward_scene(scene_, view.intrinsics, view.extrinsics, breakdown.upstream, rcfg());
    accumulate_densify_stats(grads);
    adam_step_scene(grads);
    append_metrics(StageId::Init, breakdown);
    return breakdown;
}

LossBreakdown Trainer::train_step_mpp(const MirrorDatasetView& view) {
    ++step_;
    RenderOutput out = render(scene_, view.intrinsics, view.extrinsics, rcfg());
    Buffer cgt = mask_fill(view.image, view.mask, config_.mask_fill_color);

    LossBreakdown breakdown;
    LossResult lr = loss_rgb(out.color, cgt, config_.rgb_dssim_weight);
    breakdown.rgb = lr.value;
    breakdown.upstream.color = lr.grad;

    LossResult ls = loss_smooth(out.depth, cgt, config_.gamma);
    breakdown.smooth = ls.value;
    breakdown.upstream.depth = ls.grad;
    for (double& g : breakdown.upstream.depth.data) g *= config_.lambda_s;

    Buffer pseudo = pseudo_normal(out.depth, view.intrinsics, &out.alpha);
    LossResult ln = loss_normal(out.normal, pseudo);
    breakdown.normal_consistency = ln.value;
    breakdown.upstream.normal = ln.grad;
    for (double& g : breakdown.upstream.normal.data) g *= config_.lambda_n;

    // planar constraint over sampled mirror-region normals
    if (view.mask.count_true() > 0) {
        std::vector<std::pair<int, int>> mask_pixels;
        for (int y = 0; y < view.mask.height; ++y)
            for (int x = 0; x < view.mask.width; ++x)
                if (view.mask.at(y, x)) mask_pixels.emplace_back(y, x);
        std::vector<std::pair<int, int>> sampled;
        std::sample(mask_pixels.begin(), mask_pixels.end(), std::back_inserter(sampled),
                    static_cast<size_t>(config_.np_normal_samples), rng_);
        std::vector<Vec3> normals;
        std::vector<std::pair<int, int>> kept;
        for (auto [y, x] : sampled) {
            Vec3 n = out.normal.pixel3(y, x);
            if (n.norm() > 1e-9) {
                normals.push_back(n);
                kept.emplace_back(y, x);
            }
        }
        PlanarLossResult pc = loss_planar(normals);
        breakdown.planar_constraint = pc.value;
        for (size_t k = 0; k < kept.size(); ++k)
            for (int c = 0; c < 3; ++c)
                breakdown.upstream.normal.at(kept[k].first, kept[k].second, c) +=
                    config_.lambda_pc * pc.grad[k][c];
    }

    breakdown.total = breakdown.rgb + config_.lambda_n * breakdown.normal_consistency +
                      config_.lambda_s * breakdown.smooth +
                      config_.lambda_pc * breakdown.planar_constraint;

    SceneGrads grads =
        backward_scene(scene_, view.intrinsics, view.extrinsics, breakdown.upstream, rcfg());
    accumulate_densify_stats(grads);
    adam_step_scene(grads);
    append_metrics(StageId::MirrorPlanePrediction, breakdown);
    return breakdown;
}

std::optional<PlaneEstimate> Trainer::run_plane_initialization() {
    if (plane_initialized_) throw std::runtime_error("plane already set");

    const int area_min = static_cast<int>(config_.min_mask_fraction *
                                          dataset_.train.front().intrinsics.width *
                                          dataset_.train.front().intrinsics.height);
    const int min_pixels = std::max(config_.min_mask_pixels_floor, area_min);

    std::vector<size_t> candidates;
    bool any_mask = false;
    for (size_t i = 0; i < dataset_.train.size(); ++i) {
        size_t n = dataset_.train[i].mask.count_true();
        any_mask = any_mask || n > 0;
        if (static_cast<int>(n) >= min_pixels) candidates.push_back(i);
    }
    if (!any_mask) return std::nullopt;  // mirror-free dataset: degrade gracefully
    if (candidates.empty())
        throw std::runtime_error("insufficient mirror pixels in every view (floor " +
                                 std::to_string(min_pixels) + ")");

    size_t pick;
    if (config_.plane_view_random) {
        std::uniform_int_distribution<size_t> d(0, candidates.size() - 1);
        pick = candidates[d(rng_)];
    } else {
        pick = candidates[0];
        for (size_t i : candidates)
            if (dataset_.train[i].mask.count_true() > dataset_.train[pick].mask.count_true())
                pick = i;
    }

    const MirrorDatasetView& view = dataset_.train[pick];
    RenderOutput out = render(scene_, view.intrinsics, view.extrinsics, rcfg());
    Buffer normal_world = normals_to_world(out.normal, view.extrinsics);
    RansacConfig rc;
    rc.max_iterations = config_.ransac_iterations;
    rc.distance_threshold = config_.ransac_threshold;
    rc.min_points = min_pixels / 2;  // some masked pixels may lack depth
    rc.seed = config_.seed ^ 0x9e3779b97f4a7c15ull;
    PlaneEstimate est =
        estimate_plane(out.depth, normal_world, view.mask, view.intrinsics, view.extrinsics, rc);
    est.source_view = view.name;
    plane_ = est.plane;
    plane_initialized_ = true;
    return est;
}

LossBreakdown Trainer::train_step_vco(const MirrorDatasetView& view) {
    if (!plane_) throw std::runtime_error("vco step without a plane");
    ++step_;
    CameraExtrinsics virt_extr = reflect_extrinsics(view.extrinsics, *plane_);
    MirrorCulledScene culled =
        cull_mirror_backside(scene_, *plane_, config_.virtual_cull_margin);
    RenderOutput real = render(scene_, view.intrinsics, view.extrinsics, rcfg());
    RenderOutput virt = render(culled.scene, view.intrinsics, virt_extr, rcfg());
    Buffer fused = fuse_images(real.color, virt.color, view.mask);
    LossResult lv = loss_vco(fused, view.image, view.mask, config_.rgb_dssim_weight);

    LossBreakdown breakdown;
    breakdown.rgb = lv.value;
    breakdown.total = lv.value;
    breakdown.upstream.color = lv.grad;

    PoseGrads pose = backward_pose(culled.scene, view.intrinsics, virt_extr, lv.grad, rcfg());
    PlaneGrads pg = chain_pose_to_plane(pose, view.extrinsics, *plane_);

    if (config_.joint_camera_gaussians) {
        Buffer real_up = lv.grad;
        Buffer virt_up = lv.grad;
        for (int y = 0; y < fused.height; ++y)
            for (int x = 0; x < fused.width; ++x)
                for (int c = 0; c < 3; ++c)
                    (view.mask.at(y, x) ? real_up : virt_up).at(y, x, c) = 0.0;
        RenderUpstream ru, vu;
        ru.color = real_up;
        vu.color = virt_up;
        SceneGrads grads = backward_scene(scene_, view.intrinsics, view.extrinsics, ru, rcfg());
        scatter_add_grads(grads, backward_scene(culled.scene, view.intrinsics, virt_extr, vu, rcfg()),
                          culled.indices);
        adam_step_scene(grads);
    }

    adam_step_plane(pg.d_normal_tangent, pg.d_offset, pg.tangent_e1, pg.tangent_e2);
    append_metrics(StageId::VirtualCameraOptimization, breakdown);
    return breakdown;
}

LossBreakdown Trainer::train_step_finetune(const MirrorDatasetView& view) {
    ++step_;
    bool fuse = plane_ && view.mask.count_true() > 0;
    RenderOutput real = render(scene_, view.intrinsics, view.extrinsics, rcfg());
    CameraExtrinsics virt_extr;
    Buffer fused = real.color;
    MirrorCulledScene culled;
    if (fuse) {
        virt_extr = reflect_extrinsics(view.extrinsics, *plane_);
        culled = cull_mirror_backside(scene_, *plane_, config_.virtual_cull_margin);
        RenderOutput virt = render(culled.scene, view.intrinsics, virt_extr, rcfg());
        fused = fuse_images(real.color, virt.color, view.mask);
    }
    LossResult lr = loss_rgb(fused, view.image, config_.rgb_dssim_weight);

    LossBreakdown breakdown;
    breakdown.rgb = lr.value;
    breakdown.total = lr.value;
    breakdown.upstream.color = lr.grad;

    SceneGrads grads;
    if (fuse) {
        Buffer real_up = lr.grad;
        Buffer virt_up = lr.grad;
        for (int y = 0; y < fused.height; ++y)
            for (int x = 0; x < fused.width; ++x)
                for (int c = 0; c < 3; ++c)
                    (view.mask.at(y, x) ? real_up : virt_up).at(y, x, c) = 0.0;
        RenderUpstream ru, vu;
        ru.color = real_up;
        vu.color = virt_up;
        grads = backward_scene(scene_, view.intrinsics, view.extrinsics, ru, rcfg());
        scatter_add_grads(grads, backward_scene(culled.scene, view.intrinsics, virt_extr, vu, rcfg()),
                          culled.indices);
    } else {
        grads = backward_scene(scene_, view.intrinsics, view.extrinsics, breakdown.upstream,
                               rcfg());
    }
    accumulate_densify_stats(grads);
    adam_step_scene(grads);
    append_metrics(StageId::FineTune, breakdown);
    return breakdown;
}

void Trainer::densify_and_prune() {
    const size_t n_before = scene_.size();
    const size_t stride = param_stride();
    const double split_size = config_.percent_dense * config_.scene_extent;
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<bool> keep(n_before, true);
    std::vector<Gaussian> appended;
    std::vector<size_t> appended_parent;

    for (size_t i = 0; i < n_before; ++i) {
        const Gaussian& g = scene_.gaussians[i];
        if (g.opacity() < config_.prune_opacity) {
            keep[i] = false;
            continue;
        }
        double avg = grad_count_[i] > 0 ? grad_accum_[i] / grad_count_[i] : 0.0;
        if (avg <= config_.densify_grad_threshold) continue;
        if (n_before + appended.size() >= static_cast<size_t>(config_.max_gaussians)) continue;

        Mat3 cov = build_covariance(g.scale(), g.unit_rotation());
        Eigen::LLT<Mat3> llt(cov);
        auto sample_offset = [&]() {
            Vec3 z(gauss(rng_), gauss(rng_), gauss(rng_));
            return Vec3(llt.matrixL() * z);
        };
        if (g.scale().maxCoeff() < split_size) {
            // clone
            Gaussian child = g;
            child.mean += sample_offset();
            child.rotation = g.unit_rotation();
            appended.push_back(child);
            appended_parent.push_back(i);
        } else {
            // split into two smaller children, retire the parent
            for (int c = 0; c < 2; ++c) {
                Gaussian child = g;
                child.mean = g.mean + sample_offset();
                child.log_scale = g.log_scale.array() - std::log(1.6);
                child.rotation = g.unit_rotation();
                appended.push_back(child);
                appended_parent.push_back(i);
            }
            keep[i] = false;
        }
    }

    std::vector<Gaussian> next;
    std::vector<double> next_m, next_v;
    next.reserve(n_before + appended.size());
    for (size_t i = 0; i < n_before; ++i) {
        if (!keep[i]) continue;
        Gaussian g = scene_.gaussians[i];
        g.rotation = g.unit_rotation();
        next.push_back(g);
        next_m.insert(next_m.end(), adam_.m.begin() + i * stride, adam_.m.begin() + (i + 1) * stride);
        next_v.insert(next_v.end(), adam_.v.begin() + i * stride, adam_.v.begin() + (i + 1) * stride);
    }
    for (const Gaussian& g : appended) {
        next.push_back(g);
        next_m.insert(next_m.end(), stride, 0.0);
        next_v.insert(next_v.end(), stride, 0.0);
    }
    scene_.gaussians = std::move(next);
    adam_.m = std::move(next_m);
    adam_.v = std::move(next_v);
    grad_accum_.assign(scene_.size(), 0.0);
    grad_count_.assign(scene_.size(), 0);
}

double Trainer::holdout_psnr() const {
    if (dataset_.test.empty()) return -1.0;
    double sum = 0.0;
    for (const auto& view : dataset_.test) {
        Buffer pred = render_view_fused(scene_, plane_, view, rcfg(), config_.virtual_cull_margin);
        sum += psnr(pred, view.image);
    }
    return sum / dataset_.test.size();
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint ckpt;
    ckpt.scene = scene_;
    ckpt.plane = plane_;
    ckpt.step = step_;
    ckpt.config_hash = hash_config(config_);
    ckpt.optimizer.step_count = adam_steps_;
    ckpt.optimizer.plane_step_count = plane_adam_steps_;
    ckpt.optimizer.m.assign(adam_.m.begin(), adam_.m.end());
    ckpt.optimizer.v.assign(adam_.v.begin(), adam_.v.end());
    for (int i = 0; i < 3; ++i) {
        ckpt.optimizer.plane_m[i] = static_cast<float>(plane_m_[i]);
        ckpt.optimizer.plane_v[i] = static_cast<float>(plane_v_[i]);
    }
    return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
    scene_ = ckpt.scene;
    plane_ = ckpt.plane;
    plane_initialized_ = ckpt.plane.has_value();
    step_ = ckpt.step;
    adam_steps_ = ckpt.optimizer.step_count;
    plane_adam_steps_ = ckpt.optimizer.plane_step_count;
    adam_.m.assign(ckpt.optimizer.m.begin(), ckpt.optimizer.m.end());
    adam_.v.assign(ckpt.optimizer.v.begin(), ckpt.optimizer.v.end());
    if (adam_.m.size() != scene_.size() * param_stride()) {
        adam_.m.assign(scene_.size() * param_stride(), 0.0);
        adam_.v.assign(scene_.size() * param_stride(), 0.0);
    }
    for (int i = 0; i < 3; ++i) {
        plane_m_[i] = ckpt.optimizer.plane_m[i];
        plane_v_[i] = ckpt.optimizer.plane_v[i];
    }
    grad_accum_.assign(scene_.size(), 0.0);
    grad_count_.assign(scene_.size(), 0);
}

Checkpoint Trainer::run_training(const std::string& out_dir) {
    std::ofstream csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        csv.open(fs::path(out_dir) / "metrics.csv");
        csv << "step,stage,loss_total,loss_rgb,loss_n,loss_smooth,loss_pc,psnr_holdout\n";
        csv.precision(10);
    }
    auto log_row = [&]() {
        if (!csv.is_open() || metrics_.empty()) return;
        const MetricsRow& r = metrics_.back();
        csv << r.step << ',' << stage_name(r.stage) << ',' << r.loss_total << ',' << r.loss_rgb
            << ',' << r.loss_n << ',' << r.loss_smooth << ',' << r.loss_pc << ','
            << r.psnr_holdout << "\n";
    };
    auto maybe_eval = [&]() {
        if (config_.holdout_eval_interval > 0 && step_ % config_.holdout_eval_interval == 0)
            last_holdout_psnr_ = holdout_psnr();
    };
    auto maybe_densify = [&](bool allowed) {
        if (!allowed) return;
        if (step_ < config_.densify_from_step) return;
        if (step_ % config_.densify_interval != 0) return;
        densify_and_prune();
    };

    try {
        for (int s = 0; s < config_.stage1_steps; ++s) {
            train_step_init(next_view());
            maybe_eval();
            log_row();
            maybe_densify(true);
        }
        for (int s = 0; s < config_.mpp_steps; ++s) {
            train_step_mpp(next_view());
            maybe_eval();
            log_row();
            maybe_densify(config_.densify_in_mpp);
        }
        if (config_.mirror_enabled) run_plane_initialization();
        if (plane_) {
            bool have_mirror_views = false;
            for (const auto& v : dataset_.train)
                if (v.mask.count_true() > 0) have_mirror_views = true;
            for (int s = 0; s < config_.vco_steps && have_mirror_views; ++s) {
                const MirrorDatasetView* view = next_mirror_view();
                if (!view) break;
                train_step_vco(*view);
                maybe_eval();
                log_row();
            }
        }
        for (int s = 0; s < config_.finetune_steps(); ++s) {
            train_step_finetune(next_view());
            maybe_eval();
            log_row();
            maybe_densify(true);
        }
    } catch (...) {
        if (!out_dir.empty())
            save_checkpoint(make_checkpoint(), (fs::path(out_dir) / "checkpoint.ckpt").string());
        throw;
    }

    last_holdout_psnr_ = holdout_psnr();
    Checkpoint ckpt = make_checkpoint();
    ckpt.stage = StageId::FineTune;
    if (!out_dir.empty())
        save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint.ckpt").string());
    return ckpt;
}

}  // namespace gsim
