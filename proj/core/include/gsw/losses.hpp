#pragma once

#include "gsw/scene.hpp"
#include "gsw/types.hpp"

#include <utility>

namespace gsw {

/// LPIPS weight used by the reference method. This build has no perceptual
/// network, so LossWeights::lpips must stay 0.
inline constexpr double kReferenceLpipsWeight = 0.005;

struct LossWeights {
    double l1 = 0.8;
    double ssim = 0.2;
    double lpips = 0.0;
    double sc = 0.001;
    double vm = 0.15;

    /// Throws ContractViolation on negative weights or a nonzero LPIPS weight.
    void validate() const;
};

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM, 11x11 Gaussian window (sigma 1.5), zero-padded "same" filtering,
/// averaged over channels.
double ssim(const Image& a, const Image& b);
/// Gradients of d_ssim * ssim(a, b) w.r.t. a and b.
std::pair<Image, Image> ssim_backward(const Image& a, const Image& b, double d_ssim);

double l1_loss(const Image& a, const Image& b);

/// Mean over points of the mean over sampling-coordinate components of max(0, |c| - 1).
double sampling_coord_loss(const GaussianCloud& cloud);
/// d loss / d sc, N x 2K.
RowMatrix sampling_coord_loss_backward(const GaussianCloud& cloud);

/// mean((VM - 1)^2)
double visibility_loss(const Tensor& visibility);
Tensor visibility_loss_backward(const Tensor& visibility);

/// lambda_1 L1(VM*I_r, VM*I_gt) + lambda_ssim (1 - ssim(VM*I_r, VM*I_gt)).
double image_loss(const Image& rendered, const Image& target, const Tensor& visibility, const LossWeights& w);

struct ImageLossGrad {
    Image d_rendered;
    Tensor d_visibility;
};

ImageLossGrad image_loss_backward(const Image& rendered, const Image& target, const Tensor& visibility,
                                  const LossWeights& w, double d_loss = 1.0);

/// L_c + lambda_sc L_sc + lambda_vm L_vm
double total_loss(double image_term, double sc_term, double vm_term, const LossWeights& w);

}  // namespace gsw
