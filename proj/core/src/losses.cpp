#include "gsw/losses.hpp"

#include <array>
#include <cmath>

namespace gsw {

void LossWeights::validate() const {
    require(l1 >= 0 && ssim >= 0 && sc >= 0 && vm >= 0 && lpips >= 0, "loss weights must be nonnegative");
    require(lpips == 0.0, "lpips weight must be 0: no perceptual network is available");
}

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
    std::array<double, kSsimWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Separable zero-padded Gaussian filter; symmetric taps make it self-adjoint.
std::vector<double> blur(const std::vector<double>& in, int h, int w) {
    static const auto taps = gaussian_taps();
    constexpr int r = kSsimWindow / 2;
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w) s += taps[k + r] * in[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h) s += taps[k + r] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    return out;
}

std::vector<double> channel_plane(const Image& img, int c) {
    std::vector<double> p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * 3 + c];
    return p;
}

struct SsimStats {
    std::vector<double> mx, my, exx, eyy, exy;
};

SsimStats ssim_stats(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    return {blur(a, h, w), blur(b, h, w), blur(aa, h, w), blur(bb, h, w), blur(ab, h, w)};
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    require(a.same_shape(b) && a.pixel_count() > 0, "ssim: image shapes differ");
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const SsimStats s = ssim_stats(channel_plane(a, c), channel_plane(b, c), a.height, a.width);
        for (std::size_t i = 0; i < s.mx.size(); ++i) {
            const double mx = s.mx[i], my = s.my[i];
            const double sxx = s.exx[i] - mx * mx, syy = s.eyy[i] - my * my, sxy = s.exy[i] - mx * my;
            total += ((2 * mx * my + kSsimC1) * (2 * sxy + kSsimC2)) /
                     ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
        }
    }
    return total / (3.0 * static_cast<double>(a.pixel_count()));
}

std::pair<Image, Image> ssim_backward(const Image& a, const Image& b, double d_ssim) {
    require(a.same_shape(b), "ssim: image shapes differ");
    const std::size_t n = a.pixel_count();
    const double scale = d_ssim / (3.0 * static_cast<double>(n));
    Image da(a.height, a.width), db(a.height, a.width);
    for (int c = 0; c < 3; ++c) {
        const auto pa = channel_plane(a, c), pb = channel_plane(b, c);
        const SsimStats s = ssim_stats(pa, pb, a.height, a.width);
        std::vector<double> g_mx(n), g_my(n), g_exx(n), g_eyy(n), g_exy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double mx = s.mx[i], my = s.my[i];
            const double sxx = s.exx[i] - mx * mx, syy = s.eyy[i] - my * my, sxy = s.exy[i] - mx * my;
            const double a1 = 2 * mx * my + kSsimC1, a2 = 2 * sxy + kSsimC2;
            const double b1 = mx * mx + my * my + kSsimC1, b2 = sxx + syy + kSsimC2;
            const double value = a1 * a2 / (b1 * b2);
            const double inv = 1.0 / (b1 * b2);
            g_mx[i] = scale * (2 * my * (a2 - a1) * inv + 2 * mx * value * (1 / b2 - 1 / b1));
            g_my[i] = scale * (2 * mx * (a2 - a1) * inv + 2 * my * value * (1 / b2 - 1 / b1));
            g_exx[i] = scale * (-value / b2);
            g_eyy[i] = g_exx[i];
            g_exy[i] = scale * (2 * a1 * inv);
        }
        const auto f_mx = blur(g_mx, a.height, a.width), f_my = blur(g_my, a.height, a.width);
        const auto f_exx = blur(g_exx, a.height, a.width), f_eyy = blur(g_eyy, a.height, a.width);
        const auto f_exy = blur(g_exy, a.height, a.width);
        for (std::size_t i = 0; i < n; ++i) {
            da.data[i * 3 + c] = f_mx[i] + 2 * pa[i] * f_exx[i] + pb[i] * f_exy[i];
            db.data[i * 3 + c] = f_my[i] + 2 * pb[i] * f_eyy[i] + pa[i] * f_exy[i];
        }
    }
    return {std::move(da), std::move(db)};
}

double l1_loss(const Image& a, const Image& b) {
    require(a.same_shape(b) && a.pixel_count() > 0, "l1: image shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

double sampling_coord_loss(const GaussianCloud& cloud) {
    if (cloud.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : cloud.points) {
        double s = 0.0;
        for (double c : p.sampling_coords) s += std::max(0.0, std::abs(c) - 1.0);
        total += s / static_cast<double>(p.sampling_coords.size());
    }
    return total / static_cast<double>(cloud.size());
}

RowMatrix sampling_coord_loss_backward(const GaussianCloud& cloud) {
    const auto n = static_cast<Eigen::Index>(cloud.size());
    RowMatrix g = RowMatrix::Zero(n, 2 * cloud.K);
    if (n == 0) return g;
    const double scale = 1.0 / (static_cast<double>(n) * 2 * cloud.K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& sc = cloud.points[i].sampling_coords;
        for (int j = 0; j < 2 * cloud.K; ++j) {
            if (std::abs(sc[j]) > 1.0) g(i, j) = scale * (sc[j] > 0 ? 1.0 : -1.0);
        }
    }
    return g;
}

double visibility_loss(const Tensor& visibility) {
    require(!visibility.data.empty(), "visibility_loss: empty map");
    double s = 0.0;
    for (double v : visibility.data) s += (v - 1.0) * (v - 1.0);
    return s / static_cast<double>(visibility.data.size());
}

Tensor visibility_loss_backward(const Tensor& visibility) {
    Tensor g(visibility.channels, visibility.height, visibility.width);
    const double scale = 2.0 / static_cast<double>(visibility.data.size());
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = scale * (visibility.data[i] - 1.0);
    return g;
}

namespace {

Image apply_mask(const Image& img, const Tensor& vm) {
    Image out = img;
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) out.data[p * 3 + c] *= vm.data[p];
    return out;
}

void check_loss_shapes(const Image& rendered, const Image& target, const Tensor& vm) {
    require(rendered.same_shape(target), "image_loss: rendered and target shapes differ");
    require(vm.channels == 1 && vm.height == rendered.height && vm.width == rendered.width,
            "image_loss: visibility map shape mismatch");
}

}  // namespace

double image_loss(const Image& rendered, const Image& target, const Tensor& visibility, const LossWeights& w) {
    check_loss_shapes(rendered, target, visibility);
    const Image mr = apply_mask(rendered, visibility), mt = apply_mask(target, visibility);
    return w.l1 * l1_loss(mr, mt) + w.ssim * (1.0 - ssim(mr, mt));
}

ImageLossGrad image_loss_backward(const Image& rendered, const Image& target, const Tensor& visibility,
                                  const LossWeights& w, double d_loss) {
    check_loss_shapes(rendered, target, visibility);
    const Image mr = apply_mask(rendered, visibility), mt = apply_mask(target, visibility);
    const auto [d_mr_ssim, d_mt_ssim] = ssim_backward(mr, mt, -w.ssim * d_loss);
    const double l1_scale = w.l1 * d_loss / static_cast<double>(mr.data.size());

    ImageLossGrad g;
    g.d_rendered = Image(rendered.height, rendered.width);
    g.d_visibility = Tensor(1, rendered.height, rendered.width);
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        double d_vm = 0.0;
        for (int c = 0; c < 3; ++c) {
            const std::size_t i = p * 3 + c;
            const double diff = mr.data[i] - mt.data[i];
            const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            const double d_mr = l1_scale * sign + d_mr_ssim.data[i];
            const double d_mt = -l1_scale * sign + d_mt_ssim.data[i];
            g.d_rendered.data[i] = d_mr * visibility.data[p];
            d_vm += d_mr * rendered.data[i] + d_mt * target.data[i];
        }
        g.d_visibility.data[p] = d_vm;
    }
    return g;
}

double total_loss(double image_term, double sc_term, double vm_term, const LossWeights& w) {
    return image_term + w.sc * sc_term + w.vm * vm_term;
}

}  // namespace gsw
