#include "gsim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gsim {

const char* stage_name(StageId id) {
    switch (id) {
        case StageId::Init: return "init";
        case StageId::MirrorPlanePrediction: return "mpp";
        case StageId::VirtualCameraOptimization: return "vco";
        case StageId::FineTune: return "finetune";
    }
    return "?";
}

uint64_t hash_config(const TrainConfig& c) {
    std::ostringstream os;
    os << c.total_steps << ',' << c.stage1_steps << ',' << c.mpp_steps << ',' << c.vco_steps << ','
       << c.lambda_s << ',' << c.lambda_n << ',' << c.lambda_pc << ',' << c.gamma << ','
       << c.vco_learning_rate << ',' << c.rgb_dssim_weight << ',' << c.mask_fill_color << ','
       << c.np_normal_samples << ',' << c.lr_mean << ',' << c.lr_opacity << ',' << c.lr_scale << ','
       << c.lr_rotation << ',' << c.lr_sh << ',' << c.densify_interval << ','
       << c.densify_grad_threshold << ',' << c.prune_opacity << ',' << c.sh_degree << ','
       << c.seed << ',' << c.joint_camera_gaussians << ',' << c.ransac_iterations << ','
       << c.ransac_threshold << ',' << c.min_mask_fraction << ',' << c.init_gaussians << ','
       << c.mirror_enabled << ',' << c.mpp_losses_in_finetune << ',' << c.max_gaussians << ','
       << c.virtual_cull_margin;
    std::string s = os.str();
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {
void write_floats(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::istream& is, size_t n) {
    std::vector<float> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated float array");
    return v;
}
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    const GaussianScene& s = ckpt.scene;
    size_t n = s.size();
    int cpc = s.coeffs_per_channel();
    os << "GSIMCKPT " << ckpt.format_version << "\n"
       << "gaussians " << n << "\n"
       << "sh_degree " << s.sh_degree << "\n"
       << "stage " << static_cast<int>(ckpt.stage) << "\n"
       << "step " << ckpt.step << "\n"
       << "config_hash " << ckpt.config_hash << "\n"
       << "plane " << (ckpt.plane ? 1 : 0) << "\n"
       << "adam_step " << ckpt.optimizer.step_count << "\n"
       << "plane_adam_step " << ckpt.optimizer.plane_step_count << "\n"
       << "adam_len " << ckpt.optimizer.m.size() << "\n"
       << "end_header\n";

    std::vector<float> buf;
    buf.reserve(n * 3);
    auto flush = [&]() {
        write_floats(os, buf);
        buf.clear();
    };
    for (const auto& g : s.gaussians)
        for (int i = 0; i < 3; ++i) buf.push_back(static_cast<float>(g.mean[i]));
    flush();
    for (const auto& g : s.gaussians)
        for (int i = 0; i < 3; ++i) buf.push_back(static_cast<float>(g.log_scale[i]));
    flush();
    for (const auto& g : s.gaussians) {
        buf.push_back(static_cast<float>(g.rotation.w()));
        buf.push_back(static_cast<float>(g.rotation.x()));
        buf.push_back(static_cast<float>(g.rotation.y()));
        buf.push_back(static_cast<float>(g.rotation.z()));
    }
    flush();
    for (const auto& g : s.gaussians) buf.push_back(static_cast<float>(g.opacity_logit));
    flush();
    for (const auto& g : s.gaussians)
        for (int k = 0; k < cpc; ++k)
            for (int i = 0; i < 3; ++i) buf.push_back(static_cast<float>(g.color_coeffs[k][i]));
    flush();
    if (ckpt.plane) {
        for (int i = 0; i < 3; ++i) buf.push_back(static_cast<float>(ckpt.plane->normal[i]));
        buf.push_back(static_cast<float>(ckpt.plane->offset));
        flush();
    }
    write_floats(os, ckpt.optimizer.m);
    write_floats(os, ckpt.optimizer.v);
    write_floats(os, ckpt.optimizer.plane_m);
    write_floats(os, ckpt.optimizer.plane_v);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
    std::string magic;
    Checkpoint ckpt;
    size_t n = 0, adam_len = 0;
    int plane_present = 0, stage = 0;
    is >> magic >> ckpt.format_version;
    if (magic != "GSIMCKPT") throw std::runtime_error("checkpoint: bad magic in " + path);
    std::string key;
    while (is >> key && key != "end_header") {
        if (key == "gaussians") is >> n;
        else if (key == "sh_degree") is >> ckpt.scene.sh_degree;
        else if (key == "stage") is >> stage;
        else if (key == "step") is >> ckpt.step;
        else if (key == "config_hash") is >> ckpt.config_hash;
        else if (key == "plane") is >> plane_present;
        else if (key == "adam_step") is >> ckpt.optimizer.step_count;
        else if (key == "plane_adam_step") is >> ckpt.optimizer.plane_step_count;
        else if (key == "adam_len") is >> adam_len;
        else throw std::runtime_error("checkpoint: unknown header key " + key);
    }
    ckpt.stage = static_cast<StageId>(stage);
    is.get();  // newline after end_header

    int cpc = (ckpt.scene.sh_degree + 1) * (ckpt.scene.sh_degree + 1);
    ckpt.scene.gaussians.resize(n);
    auto means = read_floats(is, n * 3);
    auto scales = read_floats(is, n * 3);
    auto rots = read_floats(is, n * 4);
    auto ops = read_floats(is, n);
    auto coeffs = read_floats(is, n * cpc * 3);
    for (size_t i = 0; i < n; ++i) {
        Gaussian& g = ckpt.scene.gaussians[i];
        for (int k = 0; k < 3; ++k) {
            g.mean[k] = means[i * 3 + k];
            g.log_scale[k] = scales[i * 3 + k];
        }
        g.rotation = Quat(rots[i * 4], rots[i * 4 + 1], rots[i * 4 + 2], rots[i * 4 + 3]);
        g.opacity_logit = ops[i];
        g.color_coeffs.resize(cpc);
        for (int k = 0; k < cpc; ++k)
            for (int c = 0; c < 3; ++c) g.color_coeffs[k][c] = coeffs[(i * cpc + k) * 3 + c];
    }
    if (plane_present) {
        auto pf = read_floats(is, 4);
        ckpt.plane = Plane{Vec3(pf[0], pf[1], pf[2]), pf[3]};
    }
    ckpt.optimizer.m = read_floats(is, adam_len);
    ckpt.optimizer.v = read_floats(is, adam_len);
    ckpt.optimizer.plane_m = read_floats(is, 3);
    ckpt.optimizer.plane_v = read_floats(is, 3);
    return ckpt;
}

}  // namespace gsim
