#pragma once

#include "gsw/appearance.hpp"
#include "gsw/camera.hpp"
#include "gsw/rasterizer.hpp"
#include "gsw/scene.hpp"

#include <vector>

namespace gsw {

/// Projects every point of the cloud for `cam` and attaches the given colors.
RenderInput make_render_input(const GaussianCloud& cloud, const Camera& cam, const std::vector<Vec3>& colors,
                              const Vec3& background, int tile_size = 16);

/// Render the cloud with fixed per-point colors (no appearance network).
Image render_fixed_colors(const GaussianCloud& cloud, const Camera& cam, const std::vector<Vec3>& colors,
                          const Vec3& background);

/// Decode colors for `novel` from cached appearance features and render.
Image render_cached(const GaussianCloud& cloud, const FusionNets& nets, const RowMatrix& appearance,
                    const Camera& novel, const Vec3& background);

/// Full per-frame pipeline: extract features from the reference image, sample,
/// fuse, decode and render. `reference` may be null (F^P contributes zero);
/// `transfer` zeroes F^P explicitly.
Image render_uncached(const GaussianCloud& cloud, const AppearanceModel& model, const Image& reference_image,
                      const Camera* reference, const Camera& novel, double weight, const Vec3& background,
                      bool transfer = false);

std::vector<Vec3> rows_to_colors(const RowMatrix& rows);

}  // namespace gsw
