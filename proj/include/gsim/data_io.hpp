#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsim/types.hpp"

namespace gsim {

struct ViewRecord {
    std::string image_path;
    std::string mask_path;  // empty = no mask
    CameraIntrinsics intrinsics;
    CameraExtrinsics extrinsics;
    std::string split = "train";
    std::string name;
};

struct DatasetManifest {
    std::vector<ViewRecord> views;
    double scene_scale = 1.0;
};

struct Dataset {
    std::vector<MirrorDatasetView> train;
    std::vector<MirrorDatasetView> test;
    double scene_scale = 1.0;
};

// --- PNG round trips -------------------------------------------------------
// Raw 8-bit encoding (no transfer function), round-half-up. Values clamped
// to [0,1]. 1 channel writes grayscale, 3 channels RGB.
void write_image(const Buffer& buffer, const std::string& path);
Buffer read_image(const std::string& path);

// Dataset image files are sRGB; training buffers are linear.
void write_image_srgb(const Buffer& linear, const std::string& path);
Buffer read_image_srgb(const std::string& path);

void write_mask(const MaskBuffer& mask, const std::string& path);
MaskBuffer read_mask(const std::string& path);

// 16-bit grayscale depth dump; the scale factor goes to `path + ".scale"`.
void write_depth(const Buffer& depth, const std::string& path, double scale = 1000.0);
Buffer read_depth(const std::string& path);

double srgb_to_linear(double v);
double linear_to_srgb(double v);

// --- Manifest --------------------------------------------------------------
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Decodes every view; images wider than max_width are bilinearly downscaled
// together with the intrinsics. Masks threshold at byte > 127.
Dataset load_dataset(const std::string& manifest_path, int max_width = 1600);

// --- Synthetic scene -------------------------------------------------------
struct SyntheticSceneSpec {
    double room_half_extent = 1.0;
    uint64_t texture_seed = 42;
    int gaussians_per_wall_side = 24;  // per-wall grid is side x side
    // mirror rectangle on the +x wall
    double mirror_center_y = 0.0, mirror_center_z = 0.2;
    double mirror_half_y = 0.45, mirror_half_z = 0.35;
    // camera orbit
    int train_views = 40, test_views = 10;
    double orbit_radius = 0.55;
    int image_size = 64;
    double focal = 70.0;
};

struct SyntheticGroundTruth {
    GaussianScene scene;
    Plane plane;
};

// True plane of the mirror rectangle (normal faces into the room).
Plane synthetic_true_plane(const SyntheticSceneSpec& spec);

// Builds the wall-of-Gaussians room with a hole where the mirror sits.
GaussianScene generate_room_scene(const SyntheticSceneSpec& spec, uint64_t seed);

// Writes images, exact masks, manifest, and a ground-truth sidecar
// (`ground_truth.json` + scene checkpoint) into out_dir. GT images are the
// method's own forward model fused with the true plane; a model-mismatch
// variant renders the reflected scene instead.
SyntheticGroundTruth generate_synthetic(const SyntheticSceneSpec& spec, uint64_t seed,
                                        const std::string& out_dir,
                                        bool model_mismatch = false);

struct GroundTruthSidecar {
    Plane plane;
    std::string scene_checkpoint_path;
};
GroundTruthSidecar read_ground_truth(const std::string& path);

}  // namespace gsim
