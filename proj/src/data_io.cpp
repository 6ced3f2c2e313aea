#include "gsim/data_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

#include "gsim/checkpoint.hpp"
#include "gsim/mirror.hpp"
#include "gsim/rasterizer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gsim {

namespace {

struct PngImage {
    int width = 0, height = 0, channels = 1, bit_depth = 8;
    std::vector<uint16_t> pixels;  // row-major, per channel
};

void write_png(const PngImage& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write failure: " + path);
    }
    png_init_io(png, fp);
    int color_type = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels *
                              (img.bit_depth / 8));
    for (int y = 0; y < img.height; ++y) {
        size_t base = static_cast<size_t>(y) * img.width * img.channels;
        if (img.bit_depth == 8) {
            for (size_t i = 0; i < static_cast<size_t>(img.width) * img.channels; ++i)
                row[i] = static_cast<png_byte>(img.pixels[base + i] & 0xff);
        } else {
            for (size_t i = 0; i < static_cast<size_t>(img.width) * img.channels; ++i) {
                row[2 * i] = static_cast<png_byte>(img.pixels[base + i] >> 8);
                row[2 * i + 1] = static_cast<png_byte>(img.pixels[base + i] & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

PngImage read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng read failure: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    PngImage img;
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && img.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.channels = png_get_channels(png, info);
    img.bit_depth = png_get_bit_depth(png, info);

    std::vector<png_byte> row(png_get_rowbytes(png, info));
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, row.data(), nullptr);
        size_t base = static_cast<size_t>(y) * img.width * img.channels;
        if (img.bit_depth == 8) {
            for (size_t i = 0; i < static_cast<size_t>(img.width) * img.channels; ++i)
                img.pixels[base + i] = row[i];
        } else {
            for (size_t i = 0; i < static_cast<size_t>(img.width) * img.channels; ++i)
                img.pixels[base + i] = static_cast<uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

uint16_t quantize8(double v) {
    double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);  // round half up
    return static_cast<uint16_t>(std::min(q, 255.0));
}
}  // namespace

double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

void write_image(const Buffer& buffer, const std::string& path) {
    PngImage img;
    img.width = buffer.width;
    img.height = buffer.height;
    img.channels = buffer.channels;
    img.pixels.resize(buffer.count());
    for (size_t i = 0; i < buffer.count(); ++i) img.pixels[i] = quantize8(buffer.data[i]);
    write_png(img, path);
}

Buffer read_image(const std::string& path) {
    PngImage img = read_png(path);
    Buffer out(img.height, img.width, img.channels);
    double denom = img.bit_depth == 8 ? 255.0 : 65535.0;
    for (size_t i = 0; i < out.count(); ++i) out.data[i] = img.pixels[i] / denom;
    return out;
}

void write_image_srgb(const Buffer& linear, const std::string& path) {
    Buffer srgb = linear;
    for (double& v : srgb.data) v = linear_to_srgb(v);
    write_image(srgb, path);
}

Buffer read_image_srgb(const std::string& path) {
    Buffer b = read_image(path);
    for (double& v : b.data) v = srgb_to_linear(v);
    return b;
}

void write_mask(const MaskBuffer& mask, const std::string& path) {
    PngImage img;
    img.width = mask.width;
    img.height = mask.height;
    img.channels = 1;
    img.pixels.resize(mask.data.size());
    for (size_t i = 0; i < mask.data.size(); ++i) img.pixels[i] = mask.data[i] ? 255 : 0;
    write_png(img, path);
}

MaskBuffer read_mask(const std::string& path) {
    PngImage img = read_png(path);
    MaskBuffer mask(img.height, img.width);
    double thresh = img.bit_depth == 8 ? 127.0 : 32767.0;
    for (size_t i = 0; i < mask.data.size(); ++i) {
        // multi-channel mask files: use the first channel
        mask.data[i] = img.pixels[i * img.channels] > thresh ? 1 : 0;
    }
    return mask;
}

void write_depth(const Buffer& depth, const std::string& path, double scale) {
    PngImage img;
    img.width = depth.width;
    img.height = depth.height;
    img.channels = 1;
    img.bit_depth = 16;
    img.pixels.resize(depth.count());
    for (size_t i = 0; i < depth.count(); ++i) {
        double q = std::floor(std::max(0.0, depth.data[i]) * scale + 0.5);
        img.pixels[i] = static_cast<uint16_t>(std::min(q, 65535.0));
    }
    write_png(img, path);
    std::ofstream os(path + ".scale");
    os << scale << "\n";
}

Buffer read_depth(const std::string& path) {
    std::ifstream is(path + ".scale");
    double scale = 1000.0;
    if (is) is >> scale;
    PngImage img = read_png(path);
    Buffer out(img.height, img.width, 1);
    for (size_t i = 0; i < out.count(); ++i) out.data[i] = img.pixels[i] / scale;
    return out;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    json j;
    j["scene_scale"] = manifest.scene_scale;
    j["views"] = json::array();
    for (const auto& v : manifest.views) {
        json cam;
        cam["fx"] = v.intrinsics.fx;
        cam["fy"] = v.intrinsics.fy;
        cam["cx"] = v.intrinsics.cx;
        cam["cy"] = v.intrinsics.cy;
        cam["width"] = v.intrinsics.width;
        cam["height"] = v.intrinsics.height;
        std::vector<double> w2c(16, 0.0);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) w2c[r * 4 + c] = v.extrinsics.rotation(r, c);
            w2c[r * 4 + 3] = v.extrinsics.translation[r];
        }
        w2c[15] = 1.0;
        cam["world_to_camera"] = w2c;
        json jv;
        jv["image"] = v.image_path;
        if (!v.mask_path.empty()) jv["mask"] = v.mask_path;
        jv["camera"] = cam;
        jv["split"] = v.split;
        jv["name"] = v.name;
        j["views"].push_back(jv);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read manifest: " + path);
    json j;
    is >> j;
    DatasetManifest m;
    m.scene_scale = j.value("scene_scale", 1.0);
    for (const auto& jv : j.at("views")) {
        ViewRecord v;
        v.image_path = jv.at("image").get<std::string>();
        v.mask_path = jv.value("mask", "");
        v.split = jv.value("split", "train");
        v.name = jv.value("name", v.image_path);
        const auto& cam = jv.at("camera");
        v.intrinsics.fx = cam.at("fx");
        v.intrinsics.fy = cam.at("fy");
        v.intrinsics.cx = cam.at("cx");
        v.intrinsics.cy = cam.at("cy");
        v.intrinsics.width = cam.at("width");
        v.intrinsics.height = cam.at("height");
        auto w2c = cam.at("world_to_camera").get<std::vector<double>>();
        if (w2c.size() != 16) throw std::runtime_error("malformed world_to_camera in view " + v.name);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) v.extrinsics.rotation(r, c) = w2c[r * 4 + c];
            v.extrinsics.translation[r] = w2c[r * 4 + 3];
        }
        Mat3 rtr = v.extrinsics.rotation.transpose() * v.extrinsics.rotation;
        if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
            std::abs(v.extrinsics.rotation.determinant() - 1.0) > 1e-6)
            throw std::runtime_error("rotation block is not a rotation in view " + v.name);
        m.views.push_back(v);
    }
    return m;
}

namespace {
Buffer downscale_bilinear(const Buffer& src, int w, int h) {
    Buffer dst(h, w, src.channels);
    double sx = static_cast<double>(src.width) / w;
    double sy = static_cast<double>(src.height) / h;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double fx = (x + 0.5) * sx - 0.5, fy = (y + 0.5) * sy - 0.5;
            int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
            int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
            int x1 = std::min(x0 + 1, src.width - 1);
            int y1 = std::min(y0 + 1, src.height - 1);
            double ax = std::clamp(fx - x0, 0.0, 1.0), ay = std::clamp(fy - y0, 0.0, 1.0);
            for (int c = 0; c < src.channels; ++c) {
                double v = (1 - ay) * ((1 - ax) * src.at(y0, x0, c) + ax * src.at(y0, x1, c)) +
                           ay * ((1 - ax) * src.at(y1, x0, c) + ax * src.at(y1, x1, c));
                dst.at(y, x, c) = v;
            }
        }
    return dst;
}
}  // namespace

Dataset load_dataset(const std::string& manifest_path, int max_width) {
    DatasetManifest m = read_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    Dataset ds;
    ds.scene_scale = m.scene_scale;
    for (const auto& rec : m.views) {
        MirrorDatasetView view;
        view.name = rec.name;
        view.intrinsics = rec.intrinsics;
        view.extrinsics = rec.extrinsics;
        fs::path img_path = fs::path(rec.image_path).is_absolute() ? fs::path(rec.image_path)
                                                                   : base / rec.image_path;
        if (!fs::exists(img_path))
            throw std::runtime_error("missing image file for view " + rec.name + ": " +
                                     img_path.string());
        view.image = read_image_srgb(img_path.string());
        if (view.image.width != rec.intrinsics.width || view.image.height != rec.intrinsics.height)
            throw std::runtime_error("image size does not match intrinsics in view " + rec.name);
        if (!rec.mask_path.empty()) {
            fs::path mask_path = fs::path(rec.mask_path).is_absolute() ? fs::path(rec.mask_path)
                                                                       : base / rec.mask_path;
            if (!fs::exists(mask_path))
                throw std::runtime_error("missing mask file for view " + rec.name + ": " +
                                         mask_path.string());
            view.mask = read_mask(mask_path.string());
            if (view.mask.width != view.image.width || view.mask.height != view.image.height)
                throw std::runtime_error("mask/image size mismatch in view " + rec.name);
        } else {
            view.mask = MaskBuffer(view.image.height, view.image.width, false);
        }
        if (view.image.width > max_width) {
            double s = static_cast<double>(max_width) / view.image.width;
            int nw = max_width;
            int nh = std::max(1, static_cast<int>(std::lround(view.image.height * s)));
            view.image = downscale_bilinear(view.image, nw, nh);
            MaskBuffer nm(nh, nw);
            for (int y = 0; y < nh; ++y)
                for (int x = 0; x < nw; ++x)
                    nm.set(y, x, view.mask.at(std::min(static_cast<int>(y / s), view.mask.height - 1),
                                              std::min(static_cast<int>(x / s), view.mask.width - 1)));
            view.mask = nm;
            view.intrinsics.fx *= s;
            view.intrinsics.fy *= s;
            view.intrinsics.cx *= s;
            view.intrinsics.cy *= s;
            view.intrinsics.width = nw;
            view.intrinsics.height = nh;
        }
        (rec.split == "test" ? ds.test : ds.train).push_back(std::move(view));
    }
    if (ds.train.empty()) throw std::runtime_error("dataset has no train views");
    return ds;
}

Plane synthetic_true_plane(const SyntheticSceneSpec& spec) {
    // mirror sits on the +x wall; normal faces into the room
    return Plane{Vec3(-1, 0, 0), -spec.room_half_extent};
}

namespace {
// Smooth pseudo-random wall texture: seeded sinusoid mix over position.
Vec3 wall_color(const Vec3& p, const std::array<double, 12>& phases) {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
        double v = 0.5 + 0.28 * std::sin(5.1 * p.x() + phases[ch * 4]) *
                             std::cos(4.3 * p.y() + phases[ch * 4 + 1]) +
                   0.2 * std::sin(3.7 * p.z() + phases[ch * 4 + 2]) +
                   0.12 * std::sin(9.3 * (p.x() + p.y() + p.z()) + phases[ch * 4 + 3]);
        c[ch] = std::clamp(v, 0.05, 0.95);
    }
    return c;
}
}  // namespace

GaussianScene generate_room_scene(const SyntheticSceneSpec& spec, uint64_t seed) {
    std::mt19937_64 rng(seed ^ spec.texture_seed);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * M_PI);
    std::array<double, 12> phases;
    for (double& p : phases) p = uni(rng);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double e = spec.room_half_extent;
    const int side = spec.gaussians_per_wall_side;
    const double spacing = 2.0 * e / side;

    GaussianScene scene;
    scene.sh_degree = 1;

    // walls: +-x, +-y, +-z
    struct Wall {
        Vec3 normal;
        Vec3 u, v;
    };
    const std::vector<Wall> walls = {
        {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},  {Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},
        {Vec3(0, 1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},  {Vec3(0, -1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},
        {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},  {Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 1, 0)}};

    for (const Wall& wall : walls) {
        bool mirror_wall = wall.normal.x() > 0.5;
        for (int i = 0; i < side; ++i) {
            for (int j = 0; j < side; ++j) {
                double a = -e + (i + 0.5) * spacing;
                double b = -e + (j + 0.5) * spacing;
                Vec3 p = e * wall.normal + a * wall.u + b * wall.v;
                if (mirror_wall) {
                    // leave a hole where the mirror rectangle sits
                    if (std::abs(p.y() - spec.mirror_center_y) < spec.mirror_half_y + 0.4 * spacing &&
                        std::abs(p.z() - spec.mirror_center_z) < spec.mirror_half_z + 0.4 * spacing)
                        continue;
                }
                Gaussian g;
                g.mean = p + 0.1 * spacing * Vec3(gauss(rng), gauss(rng), gauss(rng));
                // flat along the wall normal
                Vec3 scale(0.75 * spacing, 0.75 * spacing, 0.08 * spacing);
                g.log_scale = scale.array().log();
                // rotation mapping local z to the wall normal
                Quat q = Quat::FromTwoVectors(Vec3(0, 0, 1), wall.normal);
                g.rotation = q.normalized();
                g.opacity_logit = logit(0.92);
                Vec3 c = wall_color(p, phases);
                g.color_coeffs.resize(4, Vec3::Zero());
                g.color_coeffs[0] = (c.array() - 0.5) / 0.28209479177387814;
                for (int k = 1; k < 4; ++k)
                    g.color_coeffs[k] = 0.04 * Vec3(gauss(rng), gauss(rng), gauss(rng));
                scene.gaussians.push_back(g);
            }
        }
    }
    return scene;
}

namespace {
CameraExtrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
    Vec3 fwd = (target - eye).normalized();  // camera +z
    Vec3 right = fwd.cross(up_hint).normalized();
    Vec3 down = fwd.cross(right);  // camera +y (image y grows downward)
    CameraExtrinsics extr;
    extr.rotation.row(0) = right.transpose();
    extr.rotation.row(1) = down.transpose();
    extr.rotation.row(2) = fwd.transpose();
    extr.translation = -(extr.rotation * eye);
    return extr;
}

MaskBuffer analytic_mirror_mask(const SyntheticSceneSpec& spec, const CameraIntrinsics& intr,
                                const CameraExtrinsics& extr, const Buffer& real_depth,
                                const Buffer& real_alpha) {
    MaskBuffer mask(intr.height, intr.width);
    const double e = spec.room_half_extent;
    Mat3 rt = extr.rotation.transpose();
    Vec3 origin = extr.center();
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            Vec3 dir_cam((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
            Vec3 dir = rt * dir_cam;  // un-normalized; parameter t equals z-depth
            if (std::abs(dir.x()) < 1e-12) continue;
            double t = (e - origin.x()) / dir.x();
            if (t <= 0.0) continue;
            Vec3 hit = origin + t * dir;
            if (std::abs(hit.y() - spec.mirror_center_y) > spec.mirror_half_y ||
                std::abs(hit.z() - spec.mirror_center_z) > spec.mirror_half_z)
                continue;
            double hit_depth = t;  // dir has unit camera-frame z, so t is the z-depth
            // z-buffer test against the rendered scene depth; composited depth
            // is alpha-weighted, so normalize and only trust confident pixels
            double a = real_alpha.at(y, x);
            if (a > 0.5 && real_depth.at(y, x) / a < hit_depth - 0.05) continue;  // occluded
            mask.set(y, x, true);
        }
    }
    return mask;
}
}  // namespace

SyntheticGroundTruth generate_synthetic(const SyntheticSceneSpec& spec, uint64_t seed,
                                        const std::string& out_dir, bool model_mismatch) {
    if (spec.mirror_half_y >= spec.room_half_extent || spec.mirror_half_z >= spec.room_half_extent)
        throw std::runtime_error("degenerate spec: mirror larger than wall");

    fs::create_directories(out_dir);
    SyntheticGroundTruth gt;
    gt.scene = generate_room_scene(spec, seed);
    gt.plane = synthetic_true_plane(spec);

    GaussianScene reflected;
    if (model_mismatch) reflected = reflect_scene(gt.scene, gt.plane);

    CameraIntrinsics intr;
    intr.width = intr.height = spec.image_size;
    intr.fx = intr.fy = spec.focal;
    // deliberately off-center principal point
    intr.cx = spec.image_size * 0.5 + 1.5;
    intr.cy = spec.image_size * 0.5 - 1.0;

    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_real_distribution<double> jitter(-0.08, 0.08);
    DatasetManifest manifest;
    manifest.scene_scale = spec.room_half_extent;

    const int total = spec.train_views + spec.test_views;
    const Vec3 mirror_center(spec.room_half_extent, spec.mirror_center_y, spec.mirror_center_z);
    RasterConfig rcfg;

    for (int i = 0; i < total; ++i) {
        bool is_test = i >= spec.train_views;
        // most views look at the mirror from an arc inside the room; every
        // fourth train view looks away so the split mixes mirror and
        // mirror-free views
        double frac = is_test ? (i - spec.train_views + 0.5) / spec.test_views
                              : static_cast<double>(i) / spec.train_views;
        double angle = (frac - 0.5) * 1.6 + jitter(rng);
        double height = 0.35 * std::sin(frac * 9.0 + 1.0) + jitter(rng);
        Vec3 eye = Vec3(-spec.orbit_radius * std::cos(angle * 0.6),
                        spec.orbit_radius * std::sin(angle), height * 0.5 + 0.1);
        Vec3 target = mirror_center + Vec3(0, 0.5 * jitter(rng), 0.5 * jitter(rng));
        bool away_view = !is_test && (i % 4 == 3);
        if (away_view) target = Vec3(-spec.room_half_extent, eye.y() * 0.5, 0.0);
        CameraExtrinsics extr = look_at(eye, target, Vec3(0, 0, 1));

        RenderOutput real = render(gt.scene, intr, extr, rcfg);
        MaskBuffer mask = analytic_mirror_mask(spec, intr, extr, real.depth, real.alpha);

        Buffer image = real.color;
        if (mask.count_true() > 0) {
            RenderOutput virt;
            if (model_mismatch) {
                virt = render(reflected, intr, extr, rcfg);
            } else {
                // the ideal mirror reflects only what is in front of it:
                // coplanar wall splats would otherwise bleed across the edge
                MirrorCulledScene front = cull_mirror_backside(gt.scene, gt.plane, 0.05);
                virt = render(front.scene, intr, reflect_extrinsics(extr, gt.plane), rcfg);
            }
            image = fuse_images(real.color, virt.color, mask);
        }

        char buf[64];
        std::snprintf(buf, sizeof(buf), "view_%03d", i);
        ViewRecord rec;
        rec.name = buf;
        rec.split = is_test ? "test" : "train";
        rec.image_path = std::string(buf) + ".png";
        rec.mask_path = std::string(buf) + "_mask.png";
        rec.intrinsics = intr;
        rec.extrinsics = extr;
        write_image_srgb(image, (fs::path(out_dir) / rec.image_path).string());
        write_mask(mask, (fs::path(out_dir) / rec.mask_path).string());
        manifest.views.push_back(rec);
    }

    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());

    Checkpoint ckpt;
    ckpt.scene = gt.scene;
    ckpt.plane = gt.plane;
    save_checkpoint(ckpt, (fs::path(out_dir) / "ground_truth_scene.ckpt").string());

    json sidecar;
    sidecar["normal"] = {gt.plane.normal[0], gt.plane.normal[1], gt.plane.normal[2]};
    sidecar["offset"] = gt.plane.offset;
    sidecar["scene_checkpoint_path"] = "ground_truth_scene.ckpt";
    std::ofstream os(fs::path(out_dir) / "ground_truth.json");
    os << sidecar.dump(2) << "\n";
    return gt;
}

GroundTruthSidecar read_ground_truth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read ground truth sidecar: " + path);
    json j;
    is >> j;
    GroundTruthSidecar gt;
    auto n = j.at("normal").get<std::vector<double>>();
    gt.plane.normal = Vec3(n[0], n[1], n[2]).normalized();
    gt.plane.offset = j.at("offset");
    gt.scene_checkpoint_path = j.value("scene_checkpoint_path", "");
    return gt;
}

}  // namespace gsim
