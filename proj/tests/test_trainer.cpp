#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gsim/data_io.hpp"
#include "gsim/rasterizer.hpp"
#include "gsim/trainer.hpp"

using namespace gsim;
namespace fs = std::filesystem;

namespace {

const Dataset& shared_dataset() {
    static Dataset ds = [] {
        fs::path dir = fs::temp_directory_path() / ("gsim_trainer_ds_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        SyntheticSceneSpec spec;
        spec.image_size = 32;
        spec.focal = 35.0;
        spec.gaussians_per_wall_side = 12;
        spec.train_views = 8;
        spec.test_views = 2;
        generate_synthetic(spec, 17, dir.string());
        Dataset d = load_dataset((dir / "manifest.json").string());
        fs::remove_all(dir);
        return d;
    }();
    return ds;
}

GaussianScene ground_truth_scene() {
    SyntheticSceneSpec spec;
    spec.image_size = 32;
    spec.focal = 35.0;
    spec.gaussians_per_wall_side = 12;
    spec.train_views = 8;
    spec.test_views = 2;
    return generate_room_scene(spec, 17);
}

Plane true_plane() {
    SyntheticSceneSpec spec;
    spec.image_size = 32;
    return synthetic_true_plane(spec);
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.init_gaussians = 150;
    cfg.min_mask_pixels_floor = 50;
    cfg.seed = 9;
    cfg.total_steps = 200;
    cfg.stage1_steps = 120;
    cfg.mpp_steps = 30;
    cfg.vco_steps = 30;
    cfg.holdout_eval_interval = 100;
    cfg.densify_from_step = 40;
    cfg.densify_interval = 60;
    return cfg;
}

const MirrorDatasetView& mirror_view(const Dataset& ds) {
    for (const auto& v : ds.train)
        if (v.mask.count_true() > 0) return v;
    throw std::runtime_error("no mirror view");
}

const MirrorDatasetView& empty_mask_view(const Dataset& ds) {
    for (const auto& v : ds.train)
        if (v.mask.count_true() == 0) return v;
    throw std::runtime_error("no mirror-free view");
}

bool scenes_identical(const GaussianScene& a, const GaussianScene& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const Gaussian &x = a.gaussians[i], &y = b.gaussians[i];
        if (x.mean != y.mean || x.log_scale != y.log_scale ||
            x.rotation.coeffs() != y.rotation.coeffs() || x.opacity_logit != y.opacity_logit)
            return false;
        for (size_t k = 0; k < x.color_coeffs.size(); ++k)
            if (x.color_coeffs[k] != y.color_coeffs[k]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("stage_flags per stage") {
    TrainConfig cfg;
    StageFlags init = stage_flags(StageId::Init, cfg);
    CHECK_FALSE(init.use_mask_fill);
    CHECK_FALSE(init.enable_fusion);
    CHECK(init.grads_to_gaussians);
    CHECK_FALSE(init.grads_to_plane);

    StageFlags mpp = stage_flags(StageId::MirrorPlanePrediction, cfg);
    CHECK(mpp.use_mask_fill);
    CHECK(mpp.enable_depth_normal_losses);
    CHECK_FALSE(mpp.enable_fusion);

    StageFlags vco = stage_flags(StageId::VirtualCameraOptimization, cfg);
    CHECK(vco.enable_fusion);
    CHECK(vco.grads_to_plane);
    CHECK_FALSE(vco.grads_to_gaussians);
    cfg.joint_camera_gaussians = true;
    CHECK(stage_flags(StageId::VirtualCameraOptimization, cfg).grads_to_gaussians);

    cfg.mpp_losses_in_finetune = false;
    StageFlags ft = stage_flags(StageId::FineTune, cfg);
    CHECK(ft.enable_fusion);
    CHECK_FALSE(ft.enable_depth_normal_losses);
    CHECK_FALSE(ft.grads_to_plane);
    cfg.mpp_losses_in_finetune = true;
    CHECK(stage_flags(StageId::FineTune, cfg).enable_depth_normal_losses);
}

TEST_CASE("trainer init is seeded and reproducible") {
    TrainConfig cfg = small_config();
    Trainer a(shared_dataset(), cfg);
    Trainer b(shared_dataset(), cfg);
    CHECK(scenes_identical(a.scene(), b.scene()));
    CHECK(a.scene().size() == 150);
    CHECK(validate_scene(a.scene()).empty());

    cfg.seed = 10;
    Trainer c(shared_dataset(), cfg);
    CHECK_FALSE(scenes_identical(a.scene(), c.scene()));
}

TEST_CASE("zero learning rates leave the scene bit-identical") {
    TrainConfig cfg = small_config();
    cfg.lr_mean = cfg.lr_mean_final = 0.0;
    cfg.lr_opacity = cfg.lr_scale = cfg.lr_rotation = cfg.lr_sh = 0.0;
    Trainer t(shared_dataset(), cfg);
    GaussianScene before = t.scene();
    t.train_step_init(mirror_view(shared_dataset()));
    t.train_step_init(empty_mask_view(shared_dataset()));
    CHECK(scenes_identical(before, t.scene()));
}

TEST_CASE("mpp step with zero aux weights matches init step on a mirror-free view") {
    TrainConfig cfg = small_config();
    cfg.lambda_s = cfg.lambda_n = cfg.lambda_pc = 0.0;
    Trainer a(shared_dataset(), cfg);
    Trainer b(shared_dataset(), cfg);
    const MirrorDatasetView& v = empty_mask_view(shared_dataset());
    LossBreakdown la = a.train_step_init(v);
    LossBreakdown lb = b.train_step_mpp(v);
    CHECK(la.rgb == doctest::Approx(lb.rgb).epsilon(1e-12));
    CHECK(lb.smooth >= 0.0);
    for (size_t i = 0; i < a.scene().size(); ++i) {
        CHECK((a.scene().gaussians[i].mean - b.scene().gaussians[i].mean).norm() < 1e-12);
        CHECK((a.scene().gaussians[i].log_scale - b.scene().gaussians[i].log_scale).norm() < 1e-12);
        CHECK(std::abs(a.scene().gaussians[i].opacity_logit -
                       b.scene().gaussians[i].opacity_logit) < 1e-12);
    }
}

TEST_CASE("plane initialization guards") {
    // no masks anywhere: degrade to nullopt
    Dataset no_masks = shared_dataset();
    for (auto& v : no_masks.train) v.mask = MaskBuffer(v.image.height, v.image.width);
    Trainer t1(no_masks, small_config());
    CHECK_FALSE(t1.run_plane_initialization().has_value());
    CHECK_FALSE(t1.plane().has_value());

    // masks exist but all below the floor: hard error
    TrainConfig strict = small_config();
    strict.min_mask_pixels_floor = 1000000;
    Trainer t2(shared_dataset(), strict);
    CHECK_THROWS_WITH_AS(t2.run_plane_initialization(),
                         doctest::Contains("insufficient mirror pixels"), std::runtime_error);
}

TEST_CASE("plane initialization recovers the true plane once geometry sits on it") {
    // The room scene has a hole where the mirror is (the reflection is not
    // real geometry); mask-fill training normally settles gaussians onto the
    // mirror surface. Emulate that end state with a thin grid on the plane.
    GaussianScene scene = ground_truth_scene();
    SyntheticSceneSpec spec;
    for (int iy = 0; iy < 12; ++iy)
        for (int iz = 0; iz < 12; ++iz) {
            Gaussian g;
            double fy = (iy + 0.5) / 12.0, fz = (iz + 0.5) / 12.0;
            g.mean = Vec3(spec.room_half_extent,
                          spec.mirror_center_y + (2.0 * fy - 1.0) * spec.mirror_half_y,
                          spec.mirror_center_z + (2.0 * fz - 1.0) * spec.mirror_half_z);
            g.log_scale = Vec3(std::log(0.004), std::log(0.08), std::log(0.08));
            g.opacity_logit = logit(0.95);
            g.color_coeffs.assign(scene.coeffs_per_channel(), Vec3::Zero());
            g.color_coeffs[0] = Vec3::Constant(0.5);
            scene.gaussians.push_back(g);
        }

    Trainer t(shared_dataset(), small_config());
    t.scene() = scene;
    std::optional<PlaneEstimate> est = t.run_plane_initialization();
    REQUIRE(est.has_value());
    Plane truth = true_plane();
    double cosang = std::clamp(est->plane.normal.dot(truth.normal), -1.0, 1.0);
    CHECK(std::acos(cosang) < 2.0 * M_PI / 180.0);
    CHECK(std::abs(est->plane.offset - truth.offset) < 0.05);
    CHECK(est->inlier_count > 0);

    // second call throws
    CHECK_THROWS_WITH_AS(t.run_plane_initialization(), doctest::Contains("plane already set"),
                         std::runtime_error);
}

TEST_CASE("vco step moves the plane but not the gaussians") {
    TrainConfig cfg = small_config();
    cfg.joint_camera_gaussians = false;
    Trainer t(shared_dataset(), cfg);
    Plane start = true_plane();
    start.offset += 0.05;  // slightly off so gradients are nonzero
    t.plane() = start;
    GaussianScene before = t.scene();
    t.train_step_vco(mirror_view(shared_dataset()));
    CHECK(scenes_identical(before, t.scene()));
    bool plane_moved = (t.plane()->normal - start.normal).norm() > 0.0 ||
                       t.plane()->offset != start.offset;
    CHECK(plane_moved);
    CHECK(t.plane()->normal.norm() == doctest::Approx(1.0).epsilon(1e-12));

    // joint mode also updates the gaussians
    cfg.joint_camera_gaussians = true;
    Trainer tj(shared_dataset(), cfg);
    tj.plane() = start;
    GaussianScene before_j = tj.scene();
    tj.train_step_vco(mirror_view(shared_dataset()));
    CHECK_FALSE(scenes_identical(before_j, tj.scene()));
}

TEST_CASE("vco step without a plane throws") {
    Trainer t(shared_dataset(), small_config());
    CHECK_THROWS_AS(t.train_step_vco(mirror_view(shared_dataset())), std::runtime_error);
}

TEST_CASE("finetune step moves gaussians but not the plane") {
    Trainer t(shared_dataset(), small_config());
    Plane p = true_plane();
    t.plane() = p;
    GaussianScene before = t.scene();
    t.train_step_finetune(mirror_view(shared_dataset()));
    CHECK_FALSE(scenes_identical(before, t.scene()));
    CHECK((t.plane()->normal - p.normal).norm() == 0.0);
    CHECK(t.plane()->offset == p.offset);
}

TEST_CASE("densify_and_prune basics") {
    TrainConfig cfg = small_config();
    Trainer t(shared_dataset(), cfg);
    size_t n = t.scene().size();
    // no accumulated stats, healthy opacities: no-op
    t.densify_and_prune();
    CHECK(t.scene().size() == n);

    // transparent gaussians are pruned
    t.scene().gaussians[3].opacity_logit = logit(0.001);
    t.scene().gaussians[7].opacity_logit = logit(0.001);
    t.densify_and_prune();
    CHECK(t.scene().size() == n - 2);
    for (const auto& g : t.scene().gaussians) CHECK(g.opacity() >= cfg.prune_opacity);
    CHECK(validate_scene(t.scene()).empty());
}

TEST_CASE("densification grows the scene under training gradients") {
    TrainConfig cfg = small_config();
    cfg.densify_grad_threshold = 1e-7;  // force clones/splits from real gradients
    Trainer t(shared_dataset(), cfg);
    size_t n = t.scene().size();
    for (int i = 0; i < 10; ++i) t.train_step_init(mirror_view(shared_dataset()));
    t.densify_and_prune();
    CHECK(t.scene().size() > n);
    CHECK(t.scene().size() <= static_cast<size_t>(cfg.max_gaussians));
    CHECK(validate_scene(t.scene()).empty());
}

TEST_CASE("checkpoint round trip through disk restores bit-identical state") {
    fs::path dir = fs::temp_directory_path() / ("gsim_trainer_ck_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    TrainConfig cfg = small_config();
    Trainer t(shared_dataset(), cfg);
    t.plane() = true_plane();
    for (int i = 0; i < 3; ++i) t.train_step_finetune(mirror_view(shared_dataset()));

    Checkpoint ck = t.make_checkpoint();
    std::string path = (dir / "state.ckpt").string();
    save_checkpoint(ck, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.step == ck.step);
    REQUIRE(back.plane.has_value());

    Trainer t2(shared_dataset(), cfg);
    t2.restore(back);
    Checkpoint again = t2.make_checkpoint();
    CHECK(again.optimizer.m == back.optimizer.m);
    CHECK(again.optimizer.v == back.optimizer.v);
    CHECK(again.optimizer.plane_m == back.optimizer.plane_m);
    CHECK(again.step == back.step);
    CHECK(scenes_identical(t2.scene(), back.scene));
    fs::remove_all(dir);
}

TEST_CASE("config hash tracks every field that changes training") {
    TrainConfig a = small_config();
    TrainConfig b = a;
    CHECK(hash_config(a) == hash_config(b));
    b.mirror_enabled = false;
    CHECK(hash_config(a) != hash_config(b));
    b = a;
    b.lambda_pc *= 2.0;
    CHECK(hash_config(a) != hash_config(b));
    b = a;
    b.seed += 1;
    CHECK(hash_config(a) != hash_config(b));
}

TEST_CASE("non-finite state raises instead of corrupting metrics") {
    Trainer t(shared_dataset(), small_config());
    for (auto& g : t.scene().gaussians)
        g.color_coeffs[0] = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(t.train_step_init(mirror_view(shared_dataset())), std::runtime_error);
}

TEST_CASE("render_view_fused and view metrics") {
    const Dataset& ds = shared_dataset();
    const MirrorDatasetView& mv = mirror_view(ds);
    GaussianScene gt = ground_truth_scene();

    Buffer plain = render_view_fused(gt, std::nullopt, mv);
    CHECK(plain.data == render(gt, mv.intrinsics, mv.extrinsics).color.data);

    Buffer fused = render_view_fused(gt, true_plane(), mv);
    // fusing the true scene with the true plane reproduces the gt image
    ViewMetrics m = compute_view_metrics(fused, mv);
    CHECK(m.psnr > 40.0);
    CHECK(m.psnr_mirror > 35.0);
    CHECK(m.ssim > 0.95);
    CHECK(m.ssim_mirror > 0.9);

    // plain render misses the reflection: mirror-region psnr clearly worse
    ViewMetrics mp = compute_view_metrics(plain, mv);
    CHECK(mp.psnr_mirror < m.psnr_mirror);

    const MirrorDatasetView& ev = empty_mask_view(ds);
    ViewMetrics me = compute_view_metrics(render_view_fused(gt, true_plane(), ev), ev);
    CHECK(me.psnr_mirror == -1.0);
    CHECK(me.ssim_mirror == -1.0);
}

TEST_CASE("full training schedule lowers the loss and logs consistent metrics") {
    fs::path dir = fs::temp_directory_path() / ("gsim_trainer_run_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    TrainConfig cfg = small_config();
    Trainer t(shared_dataset(), cfg);
    Checkpoint final = t.run_training(dir.string());
    CHECK(fs::exists(dir / "metrics.csv"));
    CHECK(fs::exists(dir / "checkpoint.ckpt"));
    CHECK(final.step == cfg.total_steps);
    CHECK(t.plane().has_value());

    const auto& rows = t.metrics();
    REQUIRE(static_cast<int>(rows.size()) == cfg.total_steps);
    for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].step == rows[i - 1].step + 1);
    // stages appear in schedule order with the configured budgets
    for (int i = 0; i < cfg.stage1_steps; ++i) CHECK(rows[i].stage == StageId::Init);
    for (int i = cfg.stage1_steps; i < cfg.stage1_steps + cfg.mpp_steps; ++i)
        CHECK(rows[i].stage == StageId::MirrorPlanePrediction);
    for (int i = cfg.stage1_steps + cfg.mpp_steps;
         i < cfg.stage1_steps + cfg.mpp_steps + cfg.vco_steps; ++i)
        CHECK(rows[i].stage == StageId::VirtualCameraOptimization);
    for (int i = cfg.stage1_steps + cfg.mpp_steps + cfg.vco_steps; i < cfg.total_steps; ++i)
        CHECK(rows[i].stage == StageId::FineTune);

    // photometric loss drops over the init stage
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 20; ++i) early += rows[i].loss_rgb;
    for (int i = cfg.stage1_steps - 20; i < cfg.stage1_steps; ++i) late += rows[i].loss_rgb;
    CHECK(late < early);
    CHECK(t.holdout_psnr() > 10.0);
    fs::remove_all(dir);
}

TEST_CASE("mirror-disabled training matches a mask-free dataset run") {
    TrainConfig cfg = small_config();
    cfg.total_steps = 60;
    cfg.stage1_steps = 30;
    cfg.mpp_steps = 10;
    cfg.vco_steps = 10;
    cfg.holdout_eval_interval = 1000;

    Dataset stripped = shared_dataset();
    for (auto& v : stripped.train) v.mask = MaskBuffer(v.image.height, v.image.width);
    for (auto& v : stripped.test) v.mask = MaskBuffer(v.image.height, v.image.width);

    Trainer a(stripped, cfg);
    a.run_training();

    TrainConfig off = cfg;
    off.mirror_enabled = false;
    Trainer b(stripped, off);
    b.run_training();
    CHECK(scenes_identical(a.scene(), b.scene()));
    CHECK_FALSE(b.plane().has_value());
}
