#include "gsw/pipeline.hpp"

namespace gsw {

RenderInput make_render_input(const GaussianCloud& cloud, const Camera& cam, const std::vector<Vec3>& colors,
                              const Vec3& background, int tile_size) {
    require(colors.size() == cloud.size(), "make_render_input: one color per point required");
    RenderInput in;
    in.height = cam.height;
    in.width = cam.width;
    in.background = background;
    in.tile_size = tile_size;
    in.projected.reserve(cloud.size());
    in.opacity.reserve(cloud.size());
    for (const auto& p : cloud.points) {
        const Mat3 cov = covariance_from_parameters(p.rotation, p.log_scale);
        in.projected.push_back(project_gaussian(p.position, cov, cam));
        in.opacity.push_back(p.opacity());
    }
    in.color = colors;
    return in;
}

Image render_fixed_colors(const GaussianCloud& cloud, const Camera& cam, const std::vector<Vec3>& colors,
                          const Vec3& background) {
    return render(make_render_input(cloud, cam, colors, background)).image;
}

std::vector<Vec3> rows_to_colors(const RowMatrix& rows) {
    std::vector<Vec3> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = Vec3(rows(i, 0), rows(i, 1), rows(i, 2));
    return out;
}

Image render_cached(const GaussianCloud& cloud, const FusionNets& nets, const RowMatrix& appearance,
                    const Camera& novel, const Vec3& background) {
    const RowMatrix colors = nets.decode(decoder_input(cloud, appearance, novel.center(), nets.options()));
    return render_fixed_colors(cloud, novel, rows_to_colors(colors), background);
}

Image render_uncached(const GaussianCloud& cloud, const AppearanceModel& model, const Image& reference_image,
                      const Camera* reference, const Camera& novel, double weight, const Vec3& background,
                      bool transfer) {
    FeatureStack stack = extract_features(reference_image, model.extractor);
    if (transfer) stack = style_transfer_features(stack);
    const RowMatrix af = cache_appearance(cloud, stack, reference, model.nets, weight);
    return render_cached(cloud, model.nets, af, novel, background);
}

}  // namespace gsw
