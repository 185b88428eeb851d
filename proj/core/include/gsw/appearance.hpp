#pragma once

#include "gsw/camera.hpp"
#include "gsw/nn.hpp"
#include "gsw/scene.hpp"
#include "gsw/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gsw {

inline constexpr int kFeatureChannels = 16;
inline constexpr int kPositionFrequencies = 10;
inline constexpr int kPositionEncodingDim = 3 + 3 * 2 * kPositionFrequencies;
inline constexpr int kAppearanceDim = 48;
inline constexpr double kFeatureDropout = 0.1;

/// Model switches. The disable_* flags zero the corresponding inputs (and their
/// gradients) so the network layout is the same for every ablation.
struct AppearanceOptions {
    int K = 3;
    bool lego_mode = false;  // decode color from PE(position) instead of view direction
    bool disable_k_maps = false;
    bool disable_projection_map = false;
    bool disable_separation = false;

    int dynamic_dim() const { return kFeatureChannels * (K + 1); }
    int fusion_input_dim() const { return kIntrinsicDim + dynamic_dim() + kPositionEncodingDim; }
    int decoder_condition_dim() const { return lego_mode ? kPositionEncodingDim : 3; }
};

/// Read-only view of one 16 x H x W feature map inside a planar tensor.
struct MapView {
    const double* data = nullptr;
    int channels = kFeatureChannels;
    int height = 0;
    int width = 0;
};

/// Feature maps extracted from one reference image.
///
/// `features` holds 16(K+1) channels in the order F^1, ..., F^K, F^P;
/// `visibility` is 1 x H x W, strictly inside (0,1).
struct FeatureStack {
    int K = 3;
    Tensor features;
    Tensor visibility;

    int height() const { return features.height; }
    int width() const { return features.width; }
    /// F^{k+1} for k in [0, K).
    MapView sampling_map(int k) const;
    MapView projection_map() const;
    /// Channel offset of map k (k == K is the projection map).
    int channel_offset(int k) const { return k * kFeatureChannels; }
};

/// Bilinear lookup under the corner-aligned convention; uv is clamped to [-1,1]^2.
void bilinear_sample(const MapView& map, const Vec2& uv, std::span<double> out);

/// Accumulates d_out into `d_map` (same layout as `map`) and returns d/d uv.
/// Clamped coordinates receive zero gradient.
Vec2 bilinear_sample_backward(const MapView& map, const Vec2& uv, std::span<const double> d_out,
                              double* d_map);

/// [x, sin(2^k pi x), cos(2^k pi x)] for k = 0..9, per coordinate.
void positional_encoding(const Vec3& x, std::span<double> out);
Vec3 positional_encoding_backward(const Vec3& x, std::span<const double> d_out);

/// Convolutional encoder-decoder producing the feature stack and visibility map.
///
/// Encoder: three stride-2 3x3 convs (16, 32, 64 channels). Feature decoder:
/// three nearest-upsample + 3x3 conv blocks (32, 16, 16) with encoder skips,
/// then a 1x1 head emitting 16(K+1) channels. Visibility decoder: two upsample
/// blocks (16, 8) from the 1/4-resolution encoder feature with no skips, then
/// a 1x1 head and a sigmoid. Inputs are zero-padded to a multiple of 8.
class ExtractorNet {
public:
    struct Tape {
        int height = 0, width = 0;
        Tensor input;
        RowMatrix c_e1, c_e2, c_e3, c_d1, c_d2, c_d3, c_fh, c_v1, c_v2, c_vh;
        Tensor e1, e2, e3, u1, d1, cat1, u2, d2, cat2, u3, d3, uv1, v1, uv2, v2, vis;
    };

    ExtractorNet() = default;
    ExtractorNet(int K, std::mt19937_64& rng);

    FeatureStack forward(const Image& image, Tape* tape = nullptr) const;
    /// Accumulates parameter gradients from d/d features and d/d visibility.
    void backward(const Tape& tape, const Tensor& d_features, const Tensor& d_visibility);
    /// Same as backward and also returns d/d image.
    Image backward_input(const Tape& tape, const Tensor& d_features, const Tensor& d_visibility);

    std::vector<nn::Parameter*> parameters();
    int K() const { return K_; }

private:
    int K_ = 3;
    nn::Conv2d enc1_, enc2_, enc3_, dec1_, dec2_, dec3_, feat_head_, vis1_, vis2_, vis_head_;
};

/// Fusion network M_f (two chained MLPs) and color decoder M_c.
class FusionNets {
public:
    struct FuseTape {
        nn::Mlp::Tape first, second;
    };
    struct DecodeTape {
        nn::Mlp::Tape mlp;
        RowMatrix color;  // sigmoid output
    };

    FusionNets() = default;
    FusionNets(const AppearanceOptions& options, std::mt19937_64& rng);

    /// Rows of [sf | df | PE(X)] -> rows of af (48).
    RowMatrix fuse(const RowMatrix& input, FuseTape* tape = nullptr) const;
    RowMatrix fuse_backward(const FuseTape& tape, const RowMatrix& d_af);
    /// Rows of [af | condition] -> rows of RGB in (0,1).
    RowMatrix decode(const RowMatrix& input, DecodeTape* tape = nullptr) const;
    RowMatrix decode_backward(const DecodeTape& tape, const RowMatrix& d_color);

    std::vector<nn::Parameter*> fusion_parameters();
    std::vector<nn::Parameter*> decoder_parameters();
    const AppearanceOptions& options() const { return options_; }

private:
    AppearanceOptions options_;
    nn::Mlp first_;    // in -> 128 -> 96 -> 64 -> 48
    nn::Mlp second_;   // 48 -> 48 -> 48 -> 48
    nn::Mlp decoder_;  // (48 + cond) -> 48 -> 3
};

/// Extractor plus fusion/decoder networks; everything a checkpoint stores.
struct AppearanceModel {
    AppearanceOptions options;
    ExtractorNet extractor;
    FusionNets nets;

    AppearanceModel() = default;
    AppearanceModel(const AppearanceOptions& opts, std::uint64_t seed);

    std::vector<nn::Parameter*> parameters();
};

FeatureStack extract_features(const Image& image, const ExtractorNet& net);

/// Copy of `stack` with F^P zeroed; sampling maps and visibility unchanged.
FeatureStack style_transfer_features(const FeatureStack& stack);

/// df = w (f^P + f^1 + ... + f^K), no dropout. f^P is zero when the point does
/// not project inside the reference image or `reference` is empty.
std::vector<double> assemble_dynamic_feature(const GaussianPoint& point, const FeatureStack& stack,
                                             const Camera* reference, double weight,
                                             const AppearanceOptions& options = {});

/// Batched dynamic features plus what the backward pass needs.
struct DynamicFeatures {
    RowMatrix values;                          // N x 16(K+1)
    std::vector<std::optional<Vec2>> projection_uv;
    RowMatrix dropout_scale;                   // empty when dropout is off
    double weight = 1.0;
};

/// `dropout_rng` non-null enables per-component dropout (p = 0.1, inverted scaling).
DynamicFeatures assemble_dynamic_features(const GaussianCloud& cloud, const FeatureStack& stack,
                                          const Camera* reference, double weight,
                                          const AppearanceOptions& options,
                                          std::mt19937_64* dropout_rng = nullptr);

struct DynamicFeatureGrad {
    Tensor d_features;             // same shape as stack.features
    std::vector<Vec3> d_position;  // through the projection lookup
    RowMatrix d_sampling_coords;   // N x 2K
};

DynamicFeatureGrad assemble_dynamic_features_backward(const GaussianCloud& cloud, const FeatureStack& stack,
                                                      const Camera* reference, const DynamicFeatures& df,
                                                      const AppearanceOptions& options,
                                                      const RowMatrix& d_values);

/// Rows of [sf | df | PE(X)]; sf is zeroed under disable_separation.
RowMatrix fusion_input(const GaussianCloud& cloud, const RowMatrix& dynamic, const AppearanceOptions& options);

/// Rows of [af | view direction] (or [af | PE(X)] in lego mode) for one camera.
RowMatrix decoder_input(const GaussianCloud& cloud, const RowMatrix& appearance, const Vec3& camera_center,
                        const AppearanceOptions& options);

/// af for a single point.
std::vector<double> fuse(std::span<const double> intrinsic, std::span<const double> dynamic,
                         const Vec3& position, const FusionNets& nets);

/// RGB for one point. `condition` is the unit view direction, or PE(X) in lego mode.
Vec3 decode_color(std::span<const double> appearance, std::span<const double> condition,
                  const FusionNets& nets);

/// Per-point af for every point, computed once per reference image.
RowMatrix cache_appearance(const GaussianCloud& cloud, const FeatureStack& stack, const Camera* reference,
                           const FusionNets& nets, double weight);

/// Writes the `GSWNET1` checkpoint (sections extractor, fusion, decoder).
void save_checkpoint(const std::string& path, AppearanceModel& model);
AppearanceModel load_checkpoint(const std::string& path);

}  // namespace gsw
