#pragma once

#include "gsw/camera.hpp"
#include "gsw/types.hpp"

#include <vector>

namespace gsw {

inline constexpr double kMaxSplatAlpha = 0.99;
inline constexpr double kMinTransmittance = 1e-4;

struct RenderInput {
    std::vector<ProjectedGaussian> projected;
    std::vector<double> opacity;  // alpha in (0,1), one per projected entry
    std::vector<Vec3> color;      // RGB, one per projected entry
    int height = 0;
    int width = 0;
    Vec3 background = Vec3::Zero();
    int tile_size = 16;
    /// When false every Gaussian is listed in every tile (reference configuration).
    bool cull = true;
};

/// Per-Gaussian screen-space data shared by forward and backward.
struct SplatGeometry {
    Mat2 conic = Mat2::Zero();  // inverse of cov2d
    double radius = 0.0;        // 3 sigma extent in pixels
    bool active = false;
};

struct RenderOutput {
    Image image;
    std::vector<double> transmittance;  // final T per pixel, row-major
    std::vector<int> contributors;      // number of list entries traversed per pixel
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = 16;
    /// Depth-sorted Gaussian indices, concatenated per tile; tile t spans
    /// [tile_offsets[t], tile_offsets[t + 1]).
    std::vector<int> tile_lists;
    std::vector<std::size_t> tile_offsets;
    std::vector<SplatGeometry> geometry;
};

/// Front-to-back alpha blending over 16x16 (tile_size) tiles in ascending depth.
RenderOutput render(const RenderInput& input);

struct RenderGrad {
    std::vector<Vec2> d_pixel_mean;
    std::vector<Mat2> d_cov2d;  // every entry treated as independent
    std::vector<double> d_opacity;
    std::vector<Vec3> d_color;
};

/// Exact gradients of `render` by back-to-front replay of the stored tile lists.
RenderGrad render_backward(const RenderInput& input, const RenderOutput& output, const Image& grad_image);

}  // namespace gsw
