#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "gsim/checkpoint.hpp"
#include "gsim/data_io.hpp"
#include "gsim/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gsim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct ConfigField {
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
    std::string description;
};

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::runtime_error("expected true/false, got '" + s + "'");
}

const std::map<std::string, ConfigField>& config_fields() {
    static std::map<std::string, ConfigField> fields;
    if (!fields.empty()) return fields;
    auto num = [&](const std::string& name, auto TrainConfig::* member, const std::string& desc) {
        fields[name] = {
            [member](TrainConfig& c, const std::string& v) {
                using T = std::decay_t<decltype(c.*member)>;
                if constexpr (std::is_same_v<T, bool>)
                    c.*member = parse_bool(v);
                else if constexpr (std::is_integral_v<T>)
                    c.*member = static_cast<T>(std::stoll(v));
                else
                    c.*member = std::stod(v);
            },
            [member](const TrainConfig& c) {
                std::ostringstream os;
                os.precision(12);
                using T = std::decay_t<decltype(c.*member)>;
                if constexpr (std::is_same_v<T, bool>)
                    os << ((c.*member) ? "true" : "false");
                else
                    os << c.*member;
                return os.str();
            },
            desc};
    };
    num("total_steps", &TrainConfig::total_steps, "total optimizer steps across all stages");
    num("stage1_steps", &TrainConfig::stage1_steps, "vanilla init stage length");
    num("mpp_steps", &TrainConfig::mpp_steps, "mirror plane prediction stage length");
    num("vco_steps", &TrainConfig::vco_steps, "virtual camera optimization budget");
    num("lambda_s", &TrainConfig::lambda_s, "depth smoothness weight");
    num("lambda_n", &TrainConfig::lambda_n, "normal consistency weight");
    num("lambda_pc", &TrainConfig::lambda_pc, "planar constraint weight");
    num("gamma", &TrainConfig::gamma, "edge sensitivity of the smoothness weight");
    num("vco_learning_rate", &TrainConfig::vco_learning_rate, "plane Adam learning rate");
    num("virtual_cull_margin", &TrainConfig::virtual_cull_margin,
        "drop gaussians closer than this to the mirror plane from virtual renders");
    num("rgb_dssim_weight", &TrainConfig::rgb_dssim_weight, "DSSIM share of the photometric loss");
    num("mask_fill_color", &TrainConfig::mask_fill_color, "gray fill for masked GT pixels");
    num("np_normal_samples", &TrainConfig::np_normal_samples, "normals sampled for the planar loss");
    num("lr_mean", &TrainConfig::lr_mean, "position learning rate (initial)");
    num("lr_mean_final", &TrainConfig::lr_mean_final, "position learning rate (final)");
    num("lr_opacity", &TrainConfig::lr_opacity, "opacity learning rate");
    num("lr_scale", &TrainConfig::lr_scale, "log-scale learning rate");
    num("lr_rotation", &TrainConfig::lr_rotation, "rotation learning rate");
    num("lr_sh", &TrainConfig::lr_sh, "color coefficient learning rate");
    num("densify_interval", &TrainConfig::densify_interval, "steps between density control passes");
    num("densify_from_step", &TrainConfig::densify_from_step, "first step eligible for densification");
    num("densify_grad_threshold", &TrainConfig::densify_grad_threshold,
        "mean screen-gradient norm that triggers clone/split");
    num("prune_opacity", &TrainConfig::prune_opacity, "prune Gaussians below this opacity");
    num("percent_dense", &TrainConfig::percent_dense, "clone/split size threshold (x scene extent)");
    num("scene_extent", &TrainConfig::scene_extent, "nominal scene radius");
    num("max_gaussians", &TrainConfig::max_gaussians, "hard cap on the Gaussian count");
    num("densify_in_mpp", &TrainConfig::densify_in_mpp, "allow density control during MPP");
    num("ransac_iterations", &TrainConfig::ransac_iterations, "RANSAC offset hypotheses");
    num("ransac_threshold", &TrainConfig::ransac_threshold, "RANSAC inlier distance");
    num("min_mask_fraction", &TrainConfig::min_mask_fraction,
        "mask area fraction floor for plane-source views");
    num("min_mask_pixels_floor", &TrainConfig::min_mask_pixels_floor,
        "absolute mask pixel floor for plane-source views");
    num("plane_view_random", &TrainConfig::plane_view_random,
        "pick the plane-source view at random instead of largest mask");
    num("sh_degree", &TrainConfig::sh_degree, "spherical harmonics degree (0 or 1)");
    num("init_gaussians", &TrainConfig::init_gaussians, "random Gaussians at initialization");
    num("seed", &TrainConfig::seed, "RNG seed");
    num("threads", &TrainConfig::threads, "rasterizer tile-pool threads");
    num("joint_camera_gaussians", &TrainConfig::joint_camera_gaussians,
        "optimize Gaussians together with the plane during VCO");
    num("mirror_enabled", &TrainConfig::mirror_enabled,
        "false = plain splatting baseline without plane estimation or fusion");
    num("mpp_losses_in_finetune", &TrainConfig::mpp_losses_in_finetune,
        "keep geometric losses on during fine-tuning");
    num("holdout_eval_interval", &TrainConfig::holdout_eval_interval,
        "steps between held-out PSNR evaluations (0 = off)");
    return fields;
}

std::string valid_keys_message() {
    std::string msg = "valid keys:";
    for (const auto& [k, f] : config_fields()) msg += " " + k;
    return msg;
}

void apply_set(TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const std::string& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        auto it = config_fields().find(key);
        if (it == config_fields().end())
            throw CLI::ValidationError("unknown config key '" + key + "'; " + valid_keys_message());
        try {
            it->second.set(cfg, value);
        } catch (const std::exception& e) {
            throw CLI::ValidationError("bad value for '" + key + "': " + e.what());
        }
    }
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j = json::parse(in);
    for (auto& [key, value] : j.items()) {
        auto it = config_fields().find(key);
        if (it == config_fields().end())
            throw std::runtime_error("unknown config key '" + key + "' in " + path + "; " +
                                     valid_keys_message());
        it->second.set(cfg, value.is_string() ? value.get<std::string>() : value.dump());
    }
}

void dump_effective_config(const TrainConfig& cfg, const std::string& path) {
    json j;
    for (const auto& [k, f] : config_fields()) {
        std::string v = f.get(cfg);
        j[k] = v;
    }
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

std::string config_help_epilogue() {
    std::string s = "Config keys for --set key=value (default in brackets):\n";
    TrainConfig defaults;
    for (const auto& [k, f] : config_fields())
        s += "  " + k + " [" + f.get(defaults) + "]  " + f.description + "\n";
    return s;
}

int env_threads() {
    const char* env = std::getenv("GSIM_THREADS");
    if (!env) return 1;
    return std::max(1, std::atoi(env));
}

struct GlobalOpts {
    uint64_t seed = 0;
    int threads = env_threads();
    std::vector<std::string> sets;
    std::string config_file;
    bool seed_given = false, threads_given = false;
};

TrainConfig resolve_config(const GlobalOpts& g) {
    TrainConfig cfg;
    if (!g.config_file.empty()) apply_config_file(cfg, g.config_file);
    apply_set(cfg, g.sets);
    if (g.seed_given) cfg.seed = g.seed;
    if (g.threads_given) cfg.threads = g.threads;
    return cfg;
}

int run_synth(const std::string& out, uint64_t seed, SyntheticSceneSpec spec, bool mirror_free,
              bool model_mismatch) {
    if (mirror_free) {
        spec.mirror_half_y = 0.0;
        spec.mirror_half_z = 0.0;
    }
    SyntheticGroundTruth gt = generate_synthetic(spec, seed, out, model_mismatch);
    Dataset ds = load_dataset((fs::path(out) / "manifest.json").string());
    size_t mirror_views = 0, mask_pixels = 0;
    for (const auto& v : ds.train) {
        size_t n = v.mask.count_true();
        mirror_views += n > 0;
        mask_pixels += n;
    }
    std::cout << "wrote " << ds.train.size() << " train + " << ds.test.size()
              << " test views to " << out << "\n"
              << "mirror visible in " << mirror_views << "/" << ds.train.size()
              << " train views, " << mask_pixels << " mask pixels total\n"
              << "true plane n=[" << gt.plane.normal.transpose() << "] o=" << gt.plane.offset
              << "\n";
    return 0;
}

int run_train(const std::string& data, const std::string& out, const TrainConfig& cfg) {
    Dataset ds = load_dataset(data);
    fs::create_directories(out);
    dump_effective_config(cfg, (fs::path(out) / "config.json").string());
    Trainer trainer(std::move(ds), cfg);
    Checkpoint ckpt = trainer.run_training(out);
    std::cout << "trained " << ckpt.step << " steps, " << ckpt.scene.size() << " gaussians, "
              << "holdout PSNR " << trainer.holdout_psnr() << " dB\n";
    if (ckpt.plane)
        std::cout << "plane n=[" << ckpt.plane->normal.transpose() << "] o=" << ckpt.plane->offset
                  << "\n";
    return 0;
}

const MirrorDatasetView* find_view(const Dataset& ds, const std::string& id) {
    auto scan = [&](const std::vector<MirrorDatasetView>& views) -> const MirrorDatasetView* {
        for (const auto& v : views)
            if (v.name == id) return &v;
        return nullptr;
    };
    if (const MirrorDatasetView* v = scan(ds.train)) return v;
    if (const MirrorDatasetView* v = scan(ds.test)) return v;
    return nullptr;
}

int run_render(const std::string& ckpt_path, const std::string& data, const std::string& view_id,
               const std::string& out, const std::vector<std::string>& channels, bool want_fused,
               int threads) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data);
    const MirrorDatasetView* view = find_view(ds, view_id);
    if (!view) throw std::runtime_error("view not found: " + view_id);
    if (want_fused && !ckpt.plane)
        throw std::runtime_error("--fused requested but the checkpoint has no plane");

    RasterConfig rcfg;
    rcfg.threads = threads;
    RenderOutput real = render(ckpt.scene, view->intrinsics, view->extrinsics, rcfg);
    std::optional<Plane> plane = want_fused ? ckpt.plane : std::nullopt;
    Buffer color = real.color;
    if (plane && view->mask.count_true() > 0) {
        RenderOutput virt =
            render(ckpt.scene, view->intrinsics, reflect_extrinsics(view->extrinsics, *plane), rcfg);
        color = fuse_images(real.color, virt.color, view->mask);
    }

    fs::path base(out);
    fs::create_directories(base.parent_path().empty() ? "." : base.parent_path());
    for (const std::string& ch : channels) {
        fs::path p = base;
        p += "_" + ch + ".png";
        if (ch == "color") {
            write_image_srgb(color, p.string());
        } else if (ch == "real") {
            write_image_srgb(real.color, p.string());
        } else if (ch == "depth") {
            write_depth(real.depth, p.string());
        } else if (ch == "normal") {
            Buffer vis(real.normal.height, real.normal.width, 3);
            for (size_t i = 0; i < vis.data.size(); ++i)
                vis.data[i] = 0.5 * (real.normal.data[i] + 1.0);
            write_image(vis, p.string());
        } else if (ch == "alpha") {
            write_image(real.alpha, p.string());
        } else if (ch == "virtual") {
            if (!ckpt.plane) throw std::runtime_error("virtual channel needs a plane");
            RenderOutput virt = render(ckpt.scene, view->intrinsics,
                                       reflect_extrinsics(view->extrinsics, *ckpt.plane), rcfg);
            write_image_srgb(virt.color, p.string());
        } else {
            throw CLI::ValidationError("unknown channel '" + ch +
                                       "' (color real depth normal alpha virtual)");
        }
        std::cout << "wrote " << p.string() << "\n";
    }
    std::cout << "PSNR vs GT: " << psnr(color, view->image) << " dB\n";
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data, const std::string& split,
             const std::string& csv_path, int threads) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data);
    const std::vector<MirrorDatasetView>& views = split == "test" ? ds.test : ds.train;
    if (split != "train" && split != "test")
        throw CLI::ValidationError("--split must be train or test");
    if (views.empty()) throw std::runtime_error("empty split: " + split);

    RasterConfig rcfg;
    rcfg.threads = threads;
    std::ostringstream csv;
    csv.precision(10);
    csv << "view,psnr,ssim,psnr_mirror,ssim_mirror\n";
    double sum_psnr = 0, sum_ssim = 0, sum_pm = 0, sum_sm = 0;
    size_t n_mirror = 0;
    for (const auto& view : views) {
        Buffer pred = render_view_fused(ckpt.scene, ckpt.plane, view, rcfg);
        ViewMetrics m = compute_view_metrics(pred, view);
        csv << view.name << ',' << m.psnr << ',' << m.ssim << ',' << m.psnr_mirror << ','
            << m.ssim_mirror << "\n";
        std::cout << view.name << "  psnr " << m.psnr << "  ssim " << m.ssim;
        if (m.psnr_mirror >= 0) {
            std::cout << "  psnr_mirror " << m.psnr_mirror << "  ssim_mirror " << m.ssim_mirror;
            sum_pm += m.psnr_mirror;
            sum_sm += m.ssim_mirror;
            ++n_mirror;
        }
        std::cout << "\n";
        sum_psnr += m.psnr;
        sum_ssim += m.ssim;
    }
    std::cout << "mean  psnr " << sum_psnr / views.size() << "  ssim " << sum_ssim / views.size();
    if (n_mirror > 0)
        std::cout << "  psnr_mirror " << sum_pm / n_mirror << "  ssim_mirror " << sum_sm / n_mirror;
    std::cout << "\n";
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << csv.str();
    }
    return 0;
}

int run_plane(const std::string& ckpt_path, const std::string& data, const TrainConfig& cfg) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data);
    std::string manifest_dir = fs::path(data).parent_path().string();

    Trainer trainer(ds, cfg);
    trainer.scene() = ckpt.scene;
    std::optional<PlaneEstimate> est = trainer.run_plane_initialization();
    if (!est) throw std::runtime_error("dataset has no mirror masks");
    std::cout << "plane n=[" << est->plane.normal.transpose() << "] o=" << est->plane.offset
              << "\n"
              << "source view " << est->source_view << ", " << est->inlier_count << "/"
              << est->points_used << " inliers\n";

    fs::path gt_path = fs::path(manifest_dir) / "ground_truth.json";
    if (fs::exists(gt_path)) {
        GroundTruthSidecar gt = read_ground_truth(gt_path.string());
        double cosang =
            std::clamp(std::abs(gt.plane.normal.normalized().dot(est->plane.normal)), 0.0, 1.0);
        double angle_deg = std::acos(cosang) * 180.0 / M_PI;
        std::cout << "vs ground truth: angle error " << angle_deg << " deg, offset error "
                  << std::abs(gt.plane.offset - est->plane.offset) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-splatting renderer and trainer with mirror-aware reflection modeling"};
    app.require_subcommand(1);
    app.footer(config_help_epilogue());

    GlobalOpts g;
    std::string data, out = "out", ckpt_path, view_id, split = "test", csv_path;
    std::vector<std::string> channels = {"color"};
    bool fused = true, mirror_free = false, model_mismatch = false;
    SyntheticSceneSpec spec;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--set", g.sets, "override a config key (key=value, repeatable)");
        cmd->add_option("--config", g.config_file, "JSON config file");
        cmd->add_option("--seed", g.seed, "RNG seed")->each([&](const std::string&) {
            g.seed_given = true;
        });
        cmd->add_option("--threads", g.threads, "worker threads")->each([&](const std::string&) {
            g.threads_given = true;
        });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic mirror-room dataset");
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--seed", g.seed, "RNG seed");
    synth->add_option("--views", spec.train_views, "train view count");
    synth->add_option("--test-views", spec.test_views, "test view count");
    synth->add_option("--image-size", spec.image_size, "square image size in pixels");
    synth->add_flag("--mirror-free", mirror_free, "generate without a mirror");
    synth->add_flag("--model-mismatch", model_mismatch,
                    "render GT from the reflected scene instead of the virtual camera");

    CLI::App* train = app.add_subcommand("train", "run the progressive training schedule");
    train->add_option("--data", data, "dataset manifest.json")->required();
    train->add_option("--out", out, "output directory");
    add_common(train);

    CLI::App* render_cmd = app.add_subcommand("render", "render a dataset view from a checkpoint");
    render_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    render_cmd->add_option("--data", data, "dataset manifest.json")->required();
    render_cmd->add_option("--view", view_id, "view name")->required();
    render_cmd->add_option("--out", out, "output path prefix");
    render_cmd->add_option("--channels", channels,
                           "channels to write: color real depth normal alpha virtual");
    render_cmd->add_flag("--fused,!--no-fused", fused, "fuse the mirror region (default on)");
    render_cmd->add_option("--threads", g.threads, "worker threads");

    CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM table for a split");
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data, "dataset manifest.json")->required();
    eval_cmd->add_option("--split", split, "train or test");
    eval_cmd->add_option("--csv", csv_path, "also write the table as CSV");
    eval_cmd->add_option("--threads", g.threads, "worker threads");

    CLI::App* plane_cmd = app.add_subcommand("plane", "estimate the mirror plane from a checkpoint");
    plane_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    plane_cmd->add_option("--data", data, "dataset manifest.json")->required();
    add_common(plane_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(out, g.seed, spec, mirror_free, model_mismatch);
        TrainConfig cfg = resolve_config(g);
        if (train->parsed()) return run_train(data, out, cfg);
        if (render_cmd->parsed())
            return run_render(ckpt_path, data, view_id, out, channels, fused, g.threads);
        if (eval_cmd->parsed()) return run_eval(ckpt_path, data, split, csv_path, g.threads);
        if (plane_cmd->parsed()) return run_plane(ckpt_path, data, cfg);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        if (msg.find("non-finite") != std::string::npos) return kExitNumeric;
        return kExitData;
    }
    return kExitUsage;
}
