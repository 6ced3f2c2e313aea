#pragma once

#include <optional>
#include <random>
#include <string>

#include "gsim/checkpoint.hpp"
#include "gsim/data_io.hpp"
#include "gsim/losses.hpp"
#include "gsim/mirror.hpp"
#include "gsim/types.hpp"

namespace gsim {

struct StageFlags {
    bool use_mask_fill = false;
    bool enable_depth_normal_losses = false;
    bool enable_fusion = false;
    bool grads_to_gaussians = true;
    bool grads_to_plane = false;
};

StageFlags stage_flags(StageId id, const TrainConfig& cfg);

struct MetricsRow {
    int64_t step = 0;
    StageId stage = StageId::Init;
    double loss_total = 0, loss_rgb = 0, loss_n = 0, loss_smooth = 0, loss_pc = 0;
    double psnr_holdout = -1.0;
};

struct ViewMetrics {
    double psnr = 0, ssim = 0;
    double psnr_mirror = -1, ssim_mirror = -1;  // -1 when the view has no mask
};

// Fused render when a plane is available and the view has mirror pixels,
// otherwise the plain real-camera render.
Buffer render_view_fused(const GaussianScene& scene, const std::optional<Plane>& plane,
                         const MirrorDatasetView& view, const RasterConfig& rcfg = {},
                         double cull_margin = 0.05);

ViewMetrics compute_view_metrics(const Buffer& pred, const MirrorDatasetView& view);

class Trainer {
  public:
    Trainer(Dataset dataset, TrainConfig config);

    LossBreakdown train_step_init(const MirrorDatasetView& view);
    LossBreakdown train_step_mpp(const MirrorDatasetView& view);
    LossBreakdown train_step_vco(const MirrorDatasetView& view);
    LossBreakdown train_step_finetune(const MirrorDatasetView& view);

    // Called once between MPP and VCO; repeated calls throw. Returns nullopt
    // when no view reaches the mask-pixel floor (the pipeline then degrades
    // to plain splatting).
    std::optional<PlaneEstimate> run_plane_initialization();

    void densify_and_prune();

    // Full progressive schedule. Writes metrics.csv (+ checkpoint.ckpt) into
    // out_dir when non-empty; on failure saves the last good state and
    // rethrows.
    Checkpoint run_training(const std::string& out_dir = "");

    double holdout_psnr() const;

    GaussianScene& scene() { return scene_; }
    const GaussianScene& scene() const { return scene_; }
    std::optional<Plane>& plane() { return plane_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    const TrainConfig& config() const { return config_; }
    int64_t step() const { return step_; }

    Checkpoint make_checkpoint() const;
    void restore(const Checkpoint& ckpt);

  private:
    struct AdamBuffers {
        std::vector<double> m, v;
    };

    void init_scene();
    void adam_step_scene(const SceneGrads& grads);
    void adam_step_plane(const Vec2& d_normal_tangent, double d_offset, const Vec3& e1,
                         const Vec3& e2);
    void accumulate_densify_stats(const SceneGrads& grads);
    const MirrorDatasetView& next_view();
    const MirrorDatasetView* next_mirror_view();
    void append_metrics(StageId stage, const LossBreakdown& loss);
    RasterConfig rcfg() const;
    size_t param_stride() const;

    Dataset dataset_;
    TrainConfig config_;
    GaussianScene scene_;
    std::optional<Plane> plane_;
    bool plane_initialized_ = false;

    AdamBuffers adam_;
    Vec3 plane_m_ = Vec3::Zero(), plane_v_ = Vec3::Zero();
    int64_t adam_steps_ = 0, plane_adam_steps_ = 0;

    std::vector<double> grad_accum_;
    std::vector<int> grad_count_;

    std::mt19937_64 rng_;
    std::vector<size_t> view_order_;
    size_t view_cursor_ = 0;

    int64_t step_ = 0;
    double last_holdout_psnr_ = -1.0;
    std::vector<MetricsRow> metrics_;
};

}  // namespace gsim
