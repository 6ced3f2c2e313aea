#include "gsim/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace gsim {

namespace {
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_shape(const Buffer& a, const Buffer& b, const char* who) {
    if (!a.same_shape(b)) throw std::runtime_error(std::string(who) + ": dimension mismatch");
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        double x = i - kWindow / 2;
        k[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable same-size convolution with zero padding, one channel.
void conv_same(const std::vector<double>& in, int h, int w, std::vector<double>& out) {
    static const std::vector<double> kernel = gaussian_kernel();
    const int r = kWindow / 2;
    std::vector<double> tmp(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                int xx = x + i;
                if (xx < 0 || xx >= w) continue;
                s += kernel[i + r] * in[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = s;
        }
    out.assign(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                s += kernel[i + r] * tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = s;
        }
}

struct SsimChannel {
    double mean = 0.0;
    std::vector<double> smap;  // per-pixel S
    std::vector<double> dx;    // d(sum of S over pixels)/dx, unscaled
};

// SSIM for one channel plane, with gradient w.r.t. x.
SsimChannel ssim_channel(const std::vector<double>& x, const std::vector<double>& y, int h, int w,
                         bool with_grad) {
    size_t n = x.size();
    std::vector<double> x2(n), y2(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        x2[i] = x[i] * x[i];
        y2[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    std::vector<double> mx, my, mxx, myy, mxy;
    conv_same(x, h, w, mx);
    conv_same(y, h, w, my);
    conv_same(x2, h, w, mxx);
    conv_same(y2, h, w, myy);
    conv_same(xy, h, w, mxy);

    SsimChannel out;
    out.smap.resize(n);
    std::vector<double> u_mx(n, 0.0), u_mxx(n, 0.0), u_mxy(n, 0.0);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double sxx = mxx[i] - mx[i] * mx[i];
        double syy = myy[i] - my[i] * my[i];
        double sxy = mxy[i] - mx[i] * my[i];
        double a1 = 2.0 * mx[i] * my[i] + kC1;
        double a2 = 2.0 * sxy + kC2;
        double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
        double b2 = sxx + syy + kC2;
        double d = b1 * b2;
        double s = a1 * a2 / d;
        out.smap[i] = s;
        total += s;
        if (with_grad) {
            double ds_da1 = a2 / d;
            double ds_da2 = a1 / d;
            double ds_db1 = -s / b1;
            double ds_db2 = -s / b2;
            double ds_dsxy = ds_da2 * 2.0;
            double ds_dsxx = ds_db2;
            // total derivative w.r.t. the filtered moments
            u_mx[i] = ds_da1 * 2.0 * my[i] + ds_db1 * 2.0 * mx[i] + ds_dsxy * (-my[i]) +
                      ds_dsxx * (-2.0 * mx[i]);
            u_mxx[i] = ds_dsxx;
            u_mxy[i] = ds_dsxy;
        }
    }
    out.mean = total / static_cast<double>(n);
    if (with_grad) {
        std::vector<double> g1, g2, g3;
        conv_same(u_mx, h, w, g1);
        conv_same(u_mxx, h, w, g2);
        conv_same(u_mxy, h, w, g3);
        out.dx.resize(n);
        for (size_t i = 0; i < n; ++i) out.dx[i] = g1[i] + 2.0 * x[i] * g2[i] + y[i] * g3[i];
    }
    return out;
}

void split_channels(const Buffer& b, std::vector<std::vector<double>>& planes) {
    planes.assign(b.channels, std::vector<double>(static_cast<size_t>(b.height) * b.width));
    for (int c = 0; c < b.channels; ++c)
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x)
                planes[c][static_cast<size_t>(y) * b.width + x] = b.at(y, x, c);
}
}  // namespace

double ssim(const Buffer& a, const Buffer& b) {
    require_same_shape(a, b, "ssim");
    std::vector<std::vector<double>> pa, pb;
    split_channels(a, pa);
    split_channels(b, pb);
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c)
        total += ssim_channel(pa[c], pb[c], a.height, a.width, false).mean;
    return total / a.channels;
}

Buffer ssim_map(const Buffer& a, const Buffer& b) {
    require_same_shape(a, b, "ssim_map");
    std::vector<std::vector<double>> pa, pb;
    split_channels(a, pa);
    split_channels(b, pb);
    Buffer out(a.height, a.width, 1);
    for (int c = 0; c < a.channels; ++c) {
        SsimChannel sc = ssim_channel(pa[c], pb[c], a.height, a.width, false);
        for (size_t i = 0; i < sc.smap.size(); ++i) out.data[i] += sc.smap[i] / a.channels;
    }
    return out;
}

LossResult ssim_with_grad(const Buffer& pred, const Buffer& gt) {
    require_same_shape(pred, gt, "ssim");
    std::vector<std::vector<double>> pp, pg;
    split_channels(pred, pp);
    split_channels(gt, pg);
    LossResult out;
    out.grad = Buffer(pred.height, pred.width, pred.channels);
    double total = 0.0;
    const double n = static_cast<double>(pred.height) * pred.width;
    for (int c = 0; c < pred.channels; ++c) {
        SsimChannel sc = ssim_channel(pp[c], pg[c], pred.height, pred.width, true);
        total += sc.mean;
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x)
                out.grad.at(y, x, c) =
                    sc.dx[static_cast<size_t>(y) * pred.width + x] / (n * pred.channels);
    }
    out.value = total / pred.channels;
    return out;
}

double psnr(const Buffer& pred, const Buffer& gt) {
    require_same_shape(pred, gt, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < pred.count(); ++i) {
        double d = pred.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.count());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

LossResult loss_rgb(const Buffer& pred, const Buffer& gt, double dssim_weight) {
    require_same_shape(pred, gt, "loss_rgb");
    LossResult out;
    out.grad = Buffer(pred.height, pred.width, pred.channels);
    double l1 = 0.0;
    const double n = static_cast<double>(pred.count());
    for (size_t i = 0; i < pred.count(); ++i) {
        double d = pred.data[i] - gt.data[i];
        l1 += std::abs(d);
        out.grad.data[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * (1.0 - dssim_weight) / n;
    }
    l1 /= n;
    LossResult s = ssim_with_grad(pred, gt);
    out.value = (1.0 - dssim_weight) * l1 + dssim_weight * (1.0 - s.value);
    for (size_t i = 0; i < pred.count(); ++i) out.grad.data[i] -= dssim_weight * s.grad.data[i];
    return out;
}

LossResult loss_smooth(const Buffer& depth, const Buffer& guide, double gamma) {
    if (depth.height != guide.height || depth.width != guide.width)
        throw std::runtime_error("loss_smooth: dimension mismatch");
    LossResult out;
    out.grad = Buffer(depth.height, depth.width, 1);
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    double sum = 0.0;
    const double n = static_cast<double>(depth.height) * depth.width;
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            for (int k = 0; k < 4; ++k) {
                int qx = x + dx[k], qy = y + dy[k];
                if (qx < 0 || qx >= depth.width || qy < 0 || qy >= depth.height) continue;
                double cdiff = 0.0;
                for (int c = 0; c < guide.channels; ++c)
                    cdiff += std::abs(guide.at(y, x, c) - guide.at(qy, qx, c));
                double wgt = std::exp(-gamma * cdiff);
                double dd = depth.at(y, x) - depth.at(qy, qx);
                sum += wgt * std::abs(dd);
                double sgn = dd > 0 ? 1.0 : (dd < 0 ? -1.0 : 0.0);
                out.grad.at(y, x) += wgt * sgn / n;
                out.grad.at(qy, qx) -= wgt * sgn / n;
            }
        }
    }
    out.value = sum / n;
    return out;
}

Buffer pseudo_normal(const Buffer& depth, const CameraIntrinsics& intr, const Buffer* alpha,
                     double alpha_min) {
    Buffer out(depth.height, depth.width, 3);
    auto backproj = [&](int x, int y, double d) {
        return Vec3((x - intr.cx) / intr.fx * d, (y - intr.cy) / intr.fy * d, d);
    };
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (x + 1 >= depth.width || y + 1 >= depth.height) continue;
            double d00 = depth.at(y, x), d10 = depth.at(y, x + 1), d01 = depth.at(y + 1, x);
            if (d00 <= 0.0 || d10 <= 0.0 || d01 <= 0.0) continue;
            if (alpha && alpha->at(y, x) < alpha_min) continue;
            Vec3 p0 = backproj(x, y, d00);
            Vec3 tx = backproj(x + 1, y, d10) - p0;
            Vec3 ty = backproj(x, y + 1, d01) - p0;
            Vec3 n = tx.cross(ty);
            double len = n.norm();
            if (len < 1e-12) continue;
            n /= len;
            if (n.z() > 0.0) n = -n;
            out.set_pixel3(y, x, n);
        }
    }
    return out;
}

LossResult loss_normal(const Buffer& rendered, const Buffer& pseudo) {
    require_same_shape(rendered, pseudo, "loss_normal");
    LossResult out;
    out.grad = Buffer(rendered.height, rendered.width, 3);
    double sum = 0.0;
    int valid = 0;
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            Vec3 pn = pseudo.pixel3(y, x);
            if (pn.isZero()) continue;
            ++valid;
            for (int c = 0; c < 3; ++c) {
                double d = rendered.at(y, x, c) - pseudo.at(y, x, c);
                sum += std::abs(d);
                out.grad.at(y, x, c) = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            }
        }
    if (valid == 0) return out;
    out.value = sum / valid;
    for (double& g : out.grad.data) g /= valid;
    return out;
}

PlanarLossResult loss_planar(const std::vector<Vec3>& normals) {
    PlanarLossResult out;
    size_t np = normals.size();
    out.grad.assign(np, Vec3::Zero());
    if (np < 2) return out;  // caller logs the warning

    std::vector<Vec3> unit(np);
    for (size_t i = 0; i < np; ++i) unit[i] = normals[i].normalized();

    double sum = 0.0;
    const double inv_np2 = 1.0 / (static_cast<double>(np) * np);
    for (size_t k = 0; k < np; ++k)
        for (size_t q = 0; q < np; ++q) sum += 1.0 - unit[k].dot(unit[q]);
    out.value = sum * inv_np2;

    for (size_t k = 0; k < np; ++k) {
        Vec3 s = Vec3::Zero();
        for (size_t q = 0; q < np; ++q) s += unit[q];
        // each pair appears twice in the double sum
        Vec3 d_unit = -2.0 * inv_np2 * s;
        double len = normals[k].norm();
        out.grad[k] = (d_unit - unit[k] * unit[k].dot(d_unit)) / len;
    }
    return out;
}

Buffer mask_fill(const Buffer& gt, const MaskBuffer& mask, double fill_color) {
    Buffer out = gt;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < gt.channels; ++c) out.at(y, x, c) = fill_color;
    return out;
}

LossResult loss_vco(const Buffer& fused, const Buffer& gt, const MaskBuffer& mask,
                    double dssim_weight) {
    LossResult out = loss_rgb(fused, gt, dssim_weight);
    for (int y = 0; y < fused.height; ++y)
        for (int x = 0; x < fused.width; ++x)
            if (!mask.at(y, x))
                for (int c = 0; c < fused.channels; ++c) out.grad.at(y, x, c) = 0.0;
    return out;
}

}  // namespace gsim
