#include "gsw/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsw {

namespace {

SplatGeometry splat_geometry(const ProjectedGaussian& p) {
    SplatGeometry g;
    if (!p.valid) return g;
    const Mat2& c = p.cov2d;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    if (!(det > 0.0)) return g;
    g.conic << c(1, 1) / det, -c(0, 1) / det, -c(1, 0) / det, c(0, 0) / det;
    const double mid = 0.5 * (c(0, 0) + c(1, 1));
    const double off = 0.5 * (c(0, 1) + c(1, 0));
    const double sym_det = c(0, 0) * c(1, 1) - off * off;
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - sym_det));
    g.radius = 3.0 * std::sqrt(std::max(lambda_max, 0.0));
    g.active = true;
    return g;
}

struct TileRange {
    int x0, x1, y0, y1;  // inclusive tile indices; empty when x0 > x1
};

TileRange tiles_touched(const RenderInput& in, const ProjectedGaussian& p, const SplatGeometry& g,
                        int tiles_x, int tiles_y) {
    if (!in.cull) return {0, tiles_x - 1, 0, tiles_y - 1};
    const double xmin = p.pixel_mean.x() - g.radius, xmax = p.pixel_mean.x() + g.radius;
    const double ymin = p.pixel_mean.y() - g.radius, ymax = p.pixel_mean.y() + g.radius;
    if (xmax < 0.0 || ymax < 0.0 || xmin > in.width - 1 || ymin > in.height - 1) return {1, 0, 1, 0};
    const int ts = in.tile_size;
    return {static_cast<int>(std::floor(std::max(xmin, 0.0) / ts)),
            static_cast<int>(std::floor(std::min(xmax, in.width - 1.0) / ts)),
            static_cast<int>(std::floor(std::max(ymin, 0.0) / ts)),
            static_cast<int>(std::floor(std::min(ymax, in.height - 1.0) / ts))};
}

// One tile's splats in traversal order, column-wise for vectorized exp.
struct TileSplats {
    Eigen::ArrayXd mx, my, c00, c01, c10, c11, opacity;
    Eigen::ArrayXd dx, dy, gauss, alpha;  // per-pixel scratch

    void gather(const RenderInput& in, const RenderOutput& out, std::size_t begin, std::size_t end) {
        const auto n = static_cast<Eigen::Index>(end - begin);
        for (Eigen::ArrayXd* a : {&mx, &my, &c00, &c01, &c10, &c11, &opacity, &dx, &dy, &gauss, &alpha}) a->resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const int i = out.tile_lists[begin + static_cast<std::size_t>(k)];
            const Mat2& c = out.geometry[i].conic;
            mx[k] = in.projected[i].pixel_mean.x();
            my[k] = in.projected[i].pixel_mean.y();
            c00[k] = c(0, 0);
            c01[k] = c(0, 1);
            c10[k] = c(1, 0);
            c11[k] = c(1, 1);
            opacity[k] = in.opacity[i];
        }
    }

    // gauss and alpha for entries [from, from + count) at pixel (x, y).
    void evaluate(double x, double y, Eigen::Index from, Eigen::Index count) {
        auto ddx = dx.segment(from, count), ddy = dy.segment(from, count);
        ddx = x - mx.segment(from, count);
        ddy = y - my.segment(from, count);
        const auto power = ddx * (c00.segment(from, count) * ddx + c01.segment(from, count) * ddy) +
                           ddy * (c10.segment(from, count) * ddx + c11.segment(from, count) * ddy);
        gauss.segment(from, count) = (-0.5 * power).exp();
        alpha.segment(from, count) = (opacity.segment(from, count) * gauss.segment(from, count)).min(kMaxSplatAlpha);
    }

    bool clamped(Eigen::Index k) const { return opacity[k] * gauss[k] > kMaxSplatAlpha; }
};

constexpr Eigen::Index kAlphaChunk = 64;

}  // namespace

RenderOutput render(const RenderInput& in) {
    require(in.height > 0 && in.width > 0, "render: image size must be positive");
    require(in.tile_size >= 1, "render: tile size must be at least 1");
    const std::size_t n = in.projected.size();
    require(in.opacity.size() == n && in.color.size() == n, "render: input lists are not aligned");

    RenderOutput out;
    out.image = Image(in.height, in.width);
    out.transmittance.assign(out.image.pixel_count(), 1.0);
    out.contributors.assign(out.image.pixel_count(), 0);
    out.tile_size = in.tile_size;
    out.tiles_x = (in.width + in.tile_size - 1) / in.tile_size;
    out.tiles_y = (in.height + in.tile_size - 1) / in.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(out.tiles_x) * out.tiles_y;

    out.geometry.resize(n);
    std::vector<int> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.geometry[i] = splat_geometry(in.projected[i]);
        if (out.geometry[i].active) order.push_back(static_cast<int>(i));
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return in.projected[a].depth < in.projected[b].depth;
    });

    std::vector<TileRange> ranges(order.size());
    std::vector<std::size_t> counts(tile_count, 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const int i = order[k];
        ranges[k] = tiles_touched(in, in.projected[i], out.geometry[i], out.tiles_x, out.tiles_y);
        for (int ty = ranges[k].y0; ty <= ranges[k].y1; ++ty)
            for (int tx = ranges[k].x0; tx <= ranges[k].x1; ++tx) ++counts[ty * out.tiles_x + tx];
    }
    out.tile_offsets.assign(tile_count + 1, 0);
    std::partial_sum(counts.begin(), counts.end(), out.tile_offsets.begin() + 1);
    out.tile_lists.resize(out.tile_offsets.back());
    std::vector<std::size_t> cursor(out.tile_offsets.begin(), out.tile_offsets.end() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
        for (int ty = ranges[k].y0; ty <= ranges[k].y1; ++ty)
            for (int tx = ranges[k].x0; tx <= ranges[k].x1; ++tx)
                out.tile_lists[cursor[ty * out.tiles_x + tx]++] = order[k];
    }

    TileSplats splats;
    for (int ty = 0; ty < out.tiles_y; ++ty) {
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const std::size_t tile = static_cast<std::size_t>(ty) * out.tiles_x + tx;
            const std::size_t begin = out.tile_offsets[tile], end = out.tile_offsets[tile + 1];
            splats.gather(in, out, begin, end);
            const auto count = static_cast<Eigen::Index>(end - begin);
            const int y_end = std::min(in.height, (ty + 1) * in.tile_size);
            const int x_end = std::min(in.width, (tx + 1) * in.tile_size);
            for (int y = ty * in.tile_size; y < y_end; ++y) {
                for (int x = tx * in.tile_size; x < x_end; ++x) {
                    double t = 1.0;
                    Vec3 c = Vec3::Zero();
                    int traversed = 0;
                    bool done = false;
                    for (Eigen::Index from = 0; from < count && !done; from += kAlphaChunk) {
                        const Eigen::Index len = std::min(kAlphaChunk, count - from);
                        splats.evaluate(x, y, from, len);
                        for (Eigen::Index k = from; k < from + len; ++k) {
                            const double alpha = splats.alpha[k];
                            c += in.color[out.tile_lists[begin + static_cast<std::size_t>(k)]] * (alpha * t);
                            t *= 1.0 - alpha;
                            traversed = static_cast<int>(k) + 1;
                            if (t < kMinTransmittance) {
                                done = true;
                                break;
                            }
                        }
                    }
                    const std::size_t p = static_cast<std::size_t>(y) * in.width + x;
                    out.transmittance[p] = t;
                    out.contributors[p] = traversed;
                    for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = c[ch] + t * in.background[ch];
                }
            }
        }
    }
    return out;
}

RenderGrad render_backward(const RenderInput& in, const RenderOutput& out, const Image& grad_image) {
    const std::size_t n = in.projected.size();
    require(out.geometry.size() == n && out.image.same_shape(grad_image) &&
                out.tile_offsets.size() == static_cast<std::size_t>(out.tiles_x) * out.tiles_y + 1 &&
                out.tile_size == in.tile_size,
            "render_backward: replay metadata does not match input");

    RenderGrad g;
    g.d_pixel_mean.assign(n, Vec2::Zero());
    g.d_cov2d.assign(n, Mat2::Zero());
    g.d_opacity.assign(n, 0.0);
    g.d_color.assign(n, Vec3::Zero());
    std::vector<Mat2> d_conic(n, Mat2::Zero());

    TileSplats splats;
    for (int ty = 0; ty < out.tiles_y; ++ty) {
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const std::size_t tile = static_cast<std::size_t>(ty) * out.tiles_x + tx;
            const std::size_t begin = out.tile_offsets[tile];
            splats.gather(in, out, begin, out.tile_offsets[tile + 1]);
            const int y_end = std::min(in.height, (ty + 1) * in.tile_size);
            const int x_end = std::min(in.width, (tx + 1) * in.tile_size);
            for (int y = ty * in.tile_size; y < y_end; ++y) {
                for (int x = tx * in.tile_size; x < x_end; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * in.width + x;
                    const Vec3 d_c(grad_image.at(y, x, 0), grad_image.at(y, x, 1), grad_image.at(y, x, 2));
                    if (d_c.isZero(0.0) || out.contributors[p] == 0) continue;
                    const Eigen::Index count = out.contributors[p];
                    for (Eigen::Index from = 0; from < count; from += kAlphaChunk)
                        splats.evaluate(x, y, from, std::min(kAlphaChunk, count - from));
                    double t_after = out.transmittance[p];
                    Vec3 behind = in.background;
                    for (Eigen::Index k = count - 1; k >= 0; --k) {
                        const int i = out.tile_lists[begin + static_cast<std::size_t>(k)];
                        const double alpha = splats.alpha[k], gauss = splats.gauss[k];
                        const double t_before = t_after / (1.0 - alpha);
                        g.d_color[i] += (alpha * t_before) * d_c;
                        const double d_alpha = t_before * (in.color[i] - behind).dot(d_c);
                        behind = alpha * in.color[i] + (1.0 - alpha) * behind;
                        t_after = t_before;
                        if (splats.clamped(k)) continue;
                        g.d_opacity[i] += gauss * d_alpha;
                        const double d_power = -0.5 * gauss * in.opacity[i] * d_alpha;
                        const Vec2 d(splats.dx[k], splats.dy[k]);
                        const Mat2& conic = out.geometry[i].conic;
                        g.d_pixel_mean[i] -= d_power * (conic + conic.transpose()) * d;
                        d_conic[i] += d_power * d * d.transpose();
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.geometry[i].active) continue;
        const Mat2 ct = out.geometry[i].conic.transpose();
        g.d_cov2d[i] = -ct * d_conic[i] * ct;
    }
    return g;
}

}  // namespace gsw
