#pragma once

#include "gsim/gradients.hpp"
#include "gsim/types.hpp"

namespace gsim {

struct LossResult {
    double value = 0.0;
    Buffer grad;  // d value / d first argument
};

struct LossBreakdown {
    double rgb = 0.0;
    double smooth = 0.0;
    double normal_consistency = 0.0;
    double planar_constraint = 0.0;
    double total = 0.0;
    RenderUpstream upstream;
};

// (1 - w) * mean-L1 + w * (1 - SSIM), the 3D-GS photometric loss.
LossResult loss_rgb(const Buffer& pred, const Buffer& gt, double dssim_weight = 0.2);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), plus its gradient
// w.r.t. the first image.
double ssim(const Buffer& a, const Buffer& b);

// Per-pixel SSIM averaged over channels (for region-restricted metrics).
Buffer ssim_map(const Buffer& a, const Buffer& b);
LossResult ssim_with_grad(const Buffer& pred, const Buffer& gt);

double psnr(const Buffer& pred, const Buffer& gt);

// RGB-weighted depth smoothness over 4-neighborhoods, normalized by pixel
// count. Gradient is w.r.t. the depth map.
LossResult loss_smooth(const Buffer& depth, const Buffer& guide, double gamma);

// Unit normals from depth-map gradient tangents, camera frame, sign-fixed
// toward the camera (z < 0). Zero where a neighbor is missing or the
// accumulated alpha is under alpha_min.
Buffer pseudo_normal(const Buffer& depth, const CameraIntrinsics& intr,
                     const Buffer* alpha = nullptr, double alpha_min = 0.5);

// L1 between rendered and pseudo normals over valid (nonzero-pseudo) pixels.
LossResult loss_normal(const Buffer& rendered, const Buffer& pseudo);

struct PlanarLossResult {
    double value = 0.0;
    std::vector<Vec3> grad;  // w.r.t. the raw (pre-normalization) samples
};

// Pairwise (1 - cos) over sampled mirror normals, including the diagonal.
PlanarLossResult loss_planar(const std::vector<Vec3>& normals);

Buffer mask_fill(const Buffer& gt, const MaskBuffer& mask, double fill_color);

// Photometric loss on the fused image; the gradient is zeroed outside the
// mirror mask (only those pixels depend on the virtual camera).
LossResult loss_vco(const Buffer& fused, const Buffer& gt, const MaskBuffer& mask,
                    double dssim_weight = 0.2);

}  // namespace gsim
