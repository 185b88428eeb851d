#include "gsw/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gsw {

MapView FeatureStack::sampling_map(int k) const {
    require(k >= 0 && k < K, "sampling_map: index out of range");
    return {features.channel(channel_offset(k)), kFeatureChannels, features.height, features.width};
}

MapView FeatureStack::projection_map() const {
    return {features.channel(channel_offset(K)), kFeatureChannels, features.height, features.width};
}

namespace {

struct BilinearTap {
    int x0, x1, y0, y1;
    double fx, fy;
    bool clamped_u, clamped_v;
};

double grid_coordinate(double u, int extent) {
    double x = (u + 1.0) * 0.5 * (extent - 1);
    const double r = std::round(x);
    if (std::abs(x - r) < 1e-12) x = r;
    return x;
}

void axis_tap(double u, int extent, int& i0, int& i1, double& f) {
    if (extent <= 1) {
        i0 = i1 = 0;
        f = 0.0;
        return;
    }
    const double x = grid_coordinate(u, extent);
    i0 = std::min(static_cast<int>(std::floor(x)), extent - 2);
    i1 = i0 + 1;
    f = x - i0;
}

BilinearTap make_tap(const MapView& map, const Vec2& uv) {
    BilinearTap t;
    t.clamped_u = std::abs(uv.x()) > 1.0;
    t.clamped_v = std::abs(uv.y()) > 1.0;
    axis_tap(std::clamp(uv.x(), -1.0, 1.0), map.width, t.x0, t.x1, t.fx);
    axis_tap(std::clamp(uv.y(), -1.0, 1.0), map.height, t.y0, t.y1, t.fy);
    return t;
}

}  // namespace

void bilinear_sample(const MapView& map, const Vec2& uv, std::span<double> out) {
    require(out.size() == static_cast<std::size_t>(map.channels), "bilinear_sample: output size mismatch");
    require(std::isfinite(uv.x()) && std::isfinite(uv.y()), "bilinear_sample: uv must be finite");
    const BilinearTap t = make_tap(map, uv);
    const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
    const std::size_t i00 = static_cast<std::size_t>(t.y0) * map.width + t.x0;
    const std::size_t i01 = static_cast<std::size_t>(t.y0) * map.width + t.x1;
    const std::size_t i10 = static_cast<std::size_t>(t.y1) * map.width + t.x0;
    const std::size_t i11 = static_cast<std::size_t>(t.y1) * map.width + t.x1;
    const double w00 = (1 - t.fx) * (1 - t.fy), w01 = t.fx * (1 - t.fy);
    const double w10 = (1 - t.fx) * t.fy, w11 = t.fx * t.fy;
    for (int c = 0; c < map.channels; ++c) {
        const double* m = map.data + c * plane;
        out[c] = w00 * m[i00] + w01 * m[i01] + w10 * m[i10] + w11 * m[i11];
    }
}

Vec2 bilinear_sample_backward(const MapView& map, const Vec2& uv, std::span<const double> d_out, double* d_map) {
    require(d_out.size() == static_cast<std::size_t>(map.channels), "bilinear_sample: gradient size mismatch");
    const BilinearTap t = make_tap(map, uv);
    const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
    const std::size_t i00 = static_cast<std::size_t>(t.y0) * map.width + t.x0;
    const std::size_t i01 = static_cast<std::size_t>(t.y0) * map.width + t.x1;
    const std::size_t i10 = static_cast<std::size_t>(t.y1) * map.width + t.x0;
    const std::size_t i11 = static_cast<std::size_t>(t.y1) * map.width + t.x1;
    const double w00 = (1 - t.fx) * (1 - t.fy), w01 = t.fx * (1 - t.fy);
    const double w10 = (1 - t.fx) * t.fy, w11 = t.fx * t.fy;
    double d_x = 0.0, d_y = 0.0;
    for (int c = 0; c < map.channels; ++c) {
        const double* m = map.data + c * plane;
        const double g = d_out[c];
        if (d_map) {
            double* dm = d_map + c * plane;
            dm[i00] += w00 * g;
            dm[i01] += w01 * g;
            dm[i10] += w10 * g;
            dm[i11] += w11 * g;
        }
        d_x += g * ((1 - t.fy) * (m[i01] - m[i00]) + t.fy * (m[i11] - m[i10]));
        d_y += g * ((1 - t.fx) * (m[i10] - m[i00]) + t.fx * (m[i11] - m[i01]));
    }
    Vec2 d_uv;
    d_uv.x() = (t.clamped_u || map.width <= 1) ? 0.0 : d_x * 0.5 * (map.width - 1);
    d_uv.y() = (t.clamped_v || map.height <= 1) ? 0.0 : d_y * 0.5 * (map.height - 1);
    return d_uv;
}

void positional_encoding(const Vec3& x, std::span<double> out) {
    require(out.size() == static_cast<std::size_t>(kPositionEncodingDim), "positional_encoding: size mismatch");
    for (int d = 0; d < 3; ++d) out[d] = x[d];
    for (int k = 0; k < kPositionFrequencies; ++k) {
        const double freq = std::ldexp(std::numbers::pi, k);
        for (int d = 0; d < 3; ++d) {
            out[3 + 6 * k + d] = std::sin(freq * x[d]);
            out[6 + 6 * k + d] = std::cos(freq * x[d]);
        }
    }
}

Vec3 positional_encoding_backward(const Vec3& x, std::span<const double> d_out) {
    Vec3 g(d_out[0], d_out[1], d_out[2]);
    for (int k = 0; k < kPositionFrequencies; ++k) {
        const double freq = std::ldexp(std::numbers::pi, k);
        for (int d = 0; d < 3; ++d) {
            g[d] += freq * (std::cos(freq * x[d]) * d_out[3 + 6 * k + d] -
                            std::sin(freq * x[d]) * d_out[6 + 6 * k + d]);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Extractor

ExtractorNet::ExtractorNet(int K, std::mt19937_64& rng)
    : K_(K),
      enc1_("extractor.enc1", 3, 16, 3, 2),
      enc2_("extractor.enc2", 16, 32, 3, 2),
      enc3_("extractor.enc3", 32, 64, 3, 2),
      dec1_("extractor.dec1", 64, 32, 3, 1),
      dec2_("extractor.dec2", 64, 16, 3, 1),
      dec3_("extractor.dec3", 32, 16, 3, 1),
      feat_head_("extractor.feature_head", 16, kFeatureChannels * (K + 1), 1, 1),
      vis1_("extractor.vis1", 32, 16, 3, 1),
      vis2_("extractor.vis2", 16, 8, 3, 1),
      vis_head_("extractor.vis_head", 8, 1, 1, 1) {
    require(K >= 1, "extractor: K must be at least 1");
    for (auto* conv : {&enc1_, &enc2_, &enc3_, &dec1_, &dec2_, &dec3_, &feat_head_, &vis1_, &vis2_, &vis_head_})
        conv->init_kaiming(rng);
}

std::vector<nn::Parameter*> ExtractorNet::parameters() {
    std::vector<nn::Parameter*> out;
    for (auto* conv : {&enc1_, &enc2_, &enc3_, &dec1_, &dec2_, &dec3_, &feat_head_, &vis1_, &vis2_, &vis_head_}) {
        out.push_back(&conv->weight());
        out.push_back(&conv->bias());
    }
    return out;
}

namespace {

constexpr int kDownsampleFactor = 8;

int padded(int n) { return (n + kDownsampleFactor - 1) / kDownsampleFactor * kDownsampleFactor; }

Tensor crop(const Tensor& t, int h, int w) {
    Tensor out(t.channels, h, w);
    for (int c = 0; c < t.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = t.at(c, y, x);
    return out;
}

Tensor pad_to(const Tensor& t, int h, int w) {
    Tensor out(t.channels, h, w);
    for (int c = 0; c < t.channels; ++c)
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x) out.at(c, y, x) = t.at(c, y, x);
    return out;
}

}  // namespace

FeatureStack ExtractorNet::forward(const Image& image, Tape* tape) const {
    require(image.height > 0 && image.width > 0, "extractor: empty image");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.height = image.height;
    t.width = image.width;
    t.input = pad_to(image_to_tensor(image), padded(image.height), padded(image.width));

    t.e1 = nn::relu(enc1_.forward(t.input, t.c_e1));
    t.e2 = nn::relu(enc2_.forward(t.e1, t.c_e2));
    t.e3 = nn::relu(enc3_.forward(t.e2, t.c_e3));

    t.u1 = nn::upsample2x(t.e3);
    t.d1 = nn::relu(dec1_.forward(t.u1, t.c_d1));
    t.cat1 = nn::concat_channels(t.d1, t.e2);
    t.u2 = nn::upsample2x(t.cat1);
    t.d2 = nn::relu(dec2_.forward(t.u2, t.c_d2));
    t.cat2 = nn::concat_channels(t.d2, t.e1);
    t.u3 = nn::upsample2x(t.cat2);
    t.d3 = nn::relu(dec3_.forward(t.u3, t.c_d3));
    const Tensor features = feat_head_.forward(t.d3, t.c_fh);

    t.uv1 = nn::upsample2x(t.e2);
    t.v1 = nn::relu(vis1_.forward(t.uv1, t.c_v1));
    t.uv2 = nn::upsample2x(t.v1);
    t.v2 = nn::relu(vis2_.forward(t.uv2, t.c_v2));
    t.vis = vis_head_.forward(t.v2, t.c_vh);
    for (double& v : t.vis.data) v = sigmoid(v);

    FeatureStack stack;
    stack.K = K_;
    stack.features = crop(features, image.height, image.width);
    stack.visibility = crop(t.vis, image.height, image.width);
    return stack;
}

Image ExtractorNet::backward_input(const Tape& t, const Tensor& d_features, const Tensor& d_visibility) {
    require(d_features.channels == kFeatureChannels * (K_ + 1) && d_features.height == t.height &&
                d_features.width == t.width && d_visibility.height == t.height && d_visibility.width == t.width,
            "extractor backward: gradient shape mismatch");
    const int ph = t.input.height, pw = t.input.width;

    Tensor d_vis = pad_to(d_visibility, ph, pw);
    for (std::size_t i = 0; i < d_vis.data.size(); ++i) {
        const double s = t.vis.data[i];
        d_vis.data[i] *= s * (1.0 - s);
    }
    Tensor d_v2 = nn::relu_backward(t.v2, vis_head_.backward(t.v2, t.c_vh, d_vis));
    Tensor d_uv2 = vis2_.backward(t.uv2, t.c_v2, d_v2);
    Tensor d_v1 = nn::relu_backward(t.v1, nn::upsample2x_backward(d_uv2));
    Tensor d_uv1 = vis1_.backward(t.uv1, t.c_v1, d_v1);
    Tensor d_e2_vis = nn::upsample2x_backward(d_uv1);

    Tensor d_feat = pad_to(d_features, ph, pw);
    Tensor d_d3 = nn::relu_backward(t.d3, feat_head_.backward(t.d3, t.c_fh, d_feat));
    Tensor d_cat2 = nn::upsample2x_backward(dec3_.backward(t.u3, t.c_d3, d_d3));
    Tensor d_d2, d_e1;
    nn::split_channels(d_cat2, t.d2.channels, d_d2, d_e1);
    d_d2 = nn::relu_backward(t.d2, d_d2);
    Tensor d_cat1 = nn::upsample2x_backward(dec2_.backward(t.u2, t.c_d2, d_d2));
    Tensor d_d1, d_e2;
    nn::split_channels(d_cat1, t.d1.channels, d_d1, d_e2);
    d_d1 = nn::relu_backward(t.d1, d_d1);
    Tensor d_e3 = nn::upsample2x_backward(dec1_.backward(t.u1, t.c_d1, d_d1));

    d_e3 = nn::relu_backward(t.e3, d_e3);
    Tensor d_e2_enc = enc3_.backward(t.e2, t.c_e3, d_e3);
    for (std::size_t i = 0; i < d_e2.data.size(); ++i) d_e2.data[i] += d_e2_enc.data[i] + d_e2_vis.data[i];
    d_e2 = nn::relu_backward(t.e2, d_e2);
    Tensor d_e1_enc = enc2_.backward(t.e1, t.c_e2, d_e2);
    for (std::size_t i = 0; i < d_e1.data.size(); ++i) d_e1.data[i] += d_e1_enc.data[i];
    d_e1 = nn::relu_backward(t.e1, d_e1);
    Tensor d_input = enc1_.backward(t.input, t.c_e1, d_e1);
    return tensor_to_image(crop(d_input, t.height, t.width));
}

void ExtractorNet::backward(const Tape& tape, const Tensor& d_features, const Tensor& d_visibility) {
    backward_input(tape, d_features, d_visibility);
}

FeatureStack extract_features(const Image& image, const ExtractorNet& net) { return net.forward(image); }

FeatureStack style_transfer_features(const FeatureStack& stack) {
    FeatureStack out = stack;
    const std::size_t begin = static_cast<std::size_t>(stack.channel_offset(stack.K)) * stack.features.plane();
    std::fill(out.features.data.begin() + static_cast<std::ptrdiff_t>(begin), out.features.data.end(), 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Fusion and decoding

FusionNets::FusionNets(const AppearanceOptions& options, std::mt19937_64& rng)
    : options_(options),
      first_("fusion.first", {options.fusion_input_dim(), 128, 96, 64, kAppearanceDim}),
      second_("fusion.second", {kAppearanceDim, 48, 48, kAppearanceDim}),
      decoder_("decoder", {kAppearanceDim + options.decoder_condition_dim(), 48, 3}) {
    first_.init_xavier(rng);
    second_.init_xavier(rng);
    decoder_.init_xavier(rng);
}

RowMatrix FusionNets::fuse(const RowMatrix& input, FuseTape* tape) const {
    require(input.cols() == options_.fusion_input_dim(), "fuse: input dimension mismatch");
    return second_.forward(first_.forward(input, tape ? &tape->first : nullptr), tape ? &tape->second : nullptr);
}

RowMatrix FusionNets::fuse_backward(const FuseTape& tape, const RowMatrix& d_af) {
    return first_.backward(tape.first, second_.backward(tape.second, d_af));
}

RowMatrix FusionNets::decode(const RowMatrix& input, DecodeTape* tape) const {
    require(input.cols() == kAppearanceDim + options_.decoder_condition_dim(), "decode: input dimension mismatch");
    RowMatrix logits = decoder_.forward(input, tape ? &tape->mlp : nullptr);
    RowMatrix color = logits.unaryExpr([](double v) { return sigmoid(v); });
    if (tape) tape->color = color;
    return color;
}

RowMatrix FusionNets::decode_backward(const DecodeTape& tape, const RowMatrix& d_color) {
    const RowMatrix d_logits = d_color.cwiseProduct(tape.color.cwiseProduct((1.0 - tape.color.array()).matrix()));
    return decoder_.backward(tape.mlp, d_logits);
}

std::vector<nn::Parameter*> FusionNets::fusion_parameters() {
    auto out = first_.parameters();
    for (auto* p : second_.parameters()) out.push_back(p);
    return out;
}

std::vector<nn::Parameter*> FusionNets::decoder_parameters() { return decoder_.parameters(); }

AppearanceModel::AppearanceModel(const AppearanceOptions& opts, std::uint64_t seed) : options(opts) {
    std::mt19937_64 rng(seed);
    extractor = ExtractorNet(opts.K, rng);
    nets = FusionNets(opts, rng);
}

std::vector<nn::Parameter*> AppearanceModel::parameters() {
    auto out = extractor.parameters();
    for (auto* p : nets.fusion_parameters()) out.push_back(p);
    for (auto* p : nets.decoder_parameters()) out.push_back(p);
    return out;
}

DynamicFeatures assemble_dynamic_features(const GaussianCloud& cloud, const FeatureStack& stack,
                                          const Camera* reference, double weight,
                                          const AppearanceOptions& options, std::mt19937_64* dropout_rng) {
    require(stack.K == cloud.K && options.K == cloud.K, "assemble_dynamic_features: K mismatch");
    const int dim = options.dynamic_dim();
    const auto n = static_cast<Eigen::Index>(cloud.size());
    DynamicFeatures df;
    df.weight = weight;
    df.values = RowMatrix::Zero(n, dim);
    df.projection_uv.assign(cloud.size(), std::nullopt);
    const int p_offset = 0;

    for (Eigen::Index i = 0; i < n; ++i) {
        const GaussianPoint& p = cloud.points[i];
        require(p.sampling_coords.size() == static_cast<std::size_t>(2 * cloud.K),
                "assemble_dynamic_features: sampling coordinates must have 2K entries");
        double* row = df.values.row(i).data();
        if (!options.disable_projection_map && reference) {
            df.projection_uv[i] = normalized_projection(p.position, *reference);
            if (df.projection_uv[i])
                bilinear_sample(stack.projection_map(), *df.projection_uv[i],
                                std::span<double>(row + p_offset, kFeatureChannels));
        }
        if (!options.disable_k_maps) {
            for (int k = 0; k < cloud.K; ++k)
                bilinear_sample(stack.sampling_map(k), p.sampling_coord(k),
                                std::span<double>(row + kFeatureChannels * (k + 1), kFeatureChannels));
        }
    }
    df.values *= weight;
    if (dropout_rng) {
        std::bernoulli_distribution keep(1.0 - kFeatureDropout);
        df.dropout_scale.resize(n, dim);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j)
                df.dropout_scale(i, j) = keep(*dropout_rng) ? 1.0 / (1.0 - kFeatureDropout) : 0.0;
        df.values = df.values.cwiseProduct(df.dropout_scale);
    }
    return df;
}

DynamicFeatureGrad assemble_dynamic_features_backward(const GaussianCloud& cloud, const FeatureStack& stack,
                                                      const Camera* reference, const DynamicFeatures& df,
                                                      const AppearanceOptions& options,
                                                      const RowMatrix& d_values) {
    const auto n = static_cast<Eigen::Index>(cloud.size());
    require(d_values.rows() == n && d_values.cols() == options.dynamic_dim(),
            "assemble_dynamic_features_backward: gradient shape mismatch");
    RowMatrix d = d_values * df.weight;
    if (df.dropout_scale.size() > 0) d = d.cwiseProduct(df.dropout_scale);

    DynamicFeatureGrad g;
    g.d_features = Tensor(stack.features.channels, stack.features.height, stack.features.width);
    g.d_position.assign(cloud.size(), Vec3::Zero());
    g.d_sampling_coords = RowMatrix::Zero(n, 2 * cloud.K);
    const std::size_t plane = stack.features.plane();

    for (Eigen::Index i = 0; i < n; ++i) {
        const GaussianPoint& p = cloud.points[i];
        const double* row = d.row(i).data();
        if (!options.disable_projection_map && reference && df.projection_uv[i]) {
            const Vec2 d_uv = bilinear_sample_backward(
                stack.projection_map(), *df.projection_uv[i], std::span<const double>(row, kFeatureChannels),
                g.d_features.data.data() + stack.channel_offset(cloud.K) * plane);
            g.d_position[i] = normalized_projection_backward(p.position, *reference, d_uv);
        }
        if (!options.disable_k_maps) {
            for (int k = 0; k < cloud.K; ++k) {
                const Vec2 d_sc = bilinear_sample_backward(
                    stack.sampling_map(k), p.sampling_coord(k),
                    std::span<const double>(row + kFeatureChannels * (k + 1), kFeatureChannels),
                    g.d_features.data.data() + stack.channel_offset(k) * plane);
                g.d_sampling_coords(i, 2 * k) = d_sc.x();
                g.d_sampling_coords(i, 2 * k + 1) = d_sc.y();
            }
        }
    }
    return g;
}

std::vector<double> assemble_dynamic_feature(const GaussianPoint& point, const FeatureStack& stack,
                                             const Camera* reference, double weight,
                                             const AppearanceOptions& options) {
    GaussianCloud single;
    single.K = stack.K;
    single.points.push_back(point);
    AppearanceOptions opts = options;
    opts.K = stack.K;
    const DynamicFeatures df = assemble_dynamic_features(single, stack, reference, weight, opts);
    return {df.values.data(), df.values.data() + df.values.size()};
}

RowMatrix fusion_input(const GaussianCloud& cloud, const RowMatrix& dynamic, const AppearanceOptions& options) {
    const auto n = static_cast<Eigen::Index>(cloud.size());
    const int ddim = options.dynamic_dim();
    require(dynamic.rows() == n && dynamic.cols() == ddim, "fusion_input: dynamic feature shape mismatch");
    RowMatrix input = RowMatrix::Zero(n, options.fusion_input_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        const GaussianPoint& p = cloud.points[i];
        double* row = input.row(i).data();
        if (!options.disable_separation) std::copy(p.intrinsic.begin(), p.intrinsic.end(), row);
        std::copy(dynamic.row(i).data(), dynamic.row(i).data() + ddim, row + kIntrinsicDim);
        positional_encoding(p.position, std::span<double>(row + kIntrinsicDim + ddim, kPositionEncodingDim));
    }
    return input;
}

RowMatrix decoder_input(const GaussianCloud& cloud, const RowMatrix& appearance, const Vec3& camera_center,
                        const AppearanceOptions& options) {
    const auto n = static_cast<Eigen::Index>(cloud.size());
    require(appearance.rows() == n && appearance.cols() == kAppearanceDim, "decoder_input: appearance shape mismatch");
    RowMatrix input(n, kAppearanceDim + options.decoder_condition_dim());
    input.leftCols(kAppearanceDim) = appearance;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3& x = cloud.points[i].position;
        double* cond = input.row(i).data() + kAppearanceDim;
        if (options.lego_mode) {
            positional_encoding(x, std::span<double>(cond, kPositionEncodingDim));
        } else {
            const Vec3 dir = x - camera_center;
            const double len = dir.norm();
            const Vec3 unit = len > 0 ? Vec3(dir / len) : Vec3(0, 0, 1);
            for (int d = 0; d < 3; ++d) cond[d] = unit[d];
        }
    }
    return input;
}

std::vector<double> fuse(std::span<const double> intrinsic, std::span<const double> dynamic,
                         const Vec3& position, const FusionNets& nets) {
    const AppearanceOptions& o = nets.options();
    require(intrinsic.size() == static_cast<std::size_t>(kIntrinsicDim) &&
                dynamic.size() == static_cast<std::size_t>(o.dynamic_dim()),
            "fuse: dimension mismatch");
    RowMatrix input = RowMatrix::Zero(1, o.fusion_input_dim());
    if (!o.disable_separation) std::copy(intrinsic.begin(), intrinsic.end(), input.data());
    std::copy(dynamic.begin(), dynamic.end(), input.data() + kIntrinsicDim);
    positional_encoding(position,
                        std::span<double>(input.data() + kIntrinsicDim + o.dynamic_dim(), kPositionEncodingDim));
    const RowMatrix af = nets.fuse(input);
    return {af.data(), af.data() + af.size()};
}

Vec3 decode_color(std::span<const double> appearance, std::span<const double> condition, const FusionNets& nets) {
    const int cdim = nets.options().decoder_condition_dim();
    require(appearance.size() == static_cast<std::size_t>(kAppearanceDim) &&
                condition.size() == static_cast<std::size_t>(cdim),
            "decode_color: dimension mismatch");
    RowMatrix input(1, kAppearanceDim + cdim);
    std::copy(appearance.begin(), appearance.end(), input.data());
    std::copy(condition.begin(), condition.end(), input.data() + kAppearanceDim);
    const RowMatrix c = nets.decode(input);
    return {c(0, 0), c(0, 1), c(0, 2)};
}

RowMatrix cache_appearance(const GaussianCloud& cloud, const FeatureStack& stack, const Camera* reference,
                           const FusionNets& nets, double weight) {
    const DynamicFeatures df = assemble_dynamic_features(cloud, stack, reference, weight, nets.options());
    return nets.fuse(fusion_input(cloud, df.values, nets.options()));
}

}  // namespace gsw
