#include "gsw/optim.hpp"

#include "gsw/dataio.hpp"
#include "gsw/pipeline.hpp"
#include "gsw/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gsw {

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamHyper& hyper) {
    require(params.size() == grads.size(), "adam_step: params and grads differ in size");
    if (state.m.size() != params.size()) state.resize(params.size());
    for (double g : grads)
        if (!std::isfinite(g)) return false;
    ++state.step;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
    return true;
}

double ExponentialSchedule::at(long step) const {
    if (total <= 0) return end;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return start * std::pow(end / start, t);
}

std::vector<Mat23> random_sampling_matrices(int K, std::mt19937_64& rng) {
    require(K >= 1, "random_sampling_matrices: K must be at least 1");
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<Mat23> out(K);
    for (auto& m : out) {
        for (int r = 0; r < 2; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) sum += (m(r, c) = dist(rng));
            if (sum <= 0.0) {
                m.row(r).setConstant(1.0 / 3.0);
            } else {
                m.row(r) /= sum;
            }
        }
    }
    return out;
}

std::vector<std::vector<double>> init_sampling_coords(const std::vector<Vec3>& positions, int K,
                                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto matrices = random_sampling_matrices(K, rng);
    std::vector<std::vector<double>> out;
    out.reserve(positions.size());
    for (const Vec3& x : positions) {
        std::vector<double> sc(2 * K);
        for (int k = 0; k < K; ++k) {
            const Vec2 uv = matrices[k] * x;
            sc[2 * k] = uv.x();
            sc[2 * k + 1] = uv.y();
        }
        out.push_back(std::move(sc));
    }
    return out;
}

double camera_extent(const std::vector<TrainView>& views) {
    require(!views.empty(), "camera_extent: no views");
    Vec3 mean = Vec3::Zero();
    for (const auto& v : views) mean += v.camera.center();
    mean /= static_cast<double>(views.size());
    double radius = 0.0;
    for (const auto& v : views) radius = std::max(radius, (v.camera.center() - mean).norm());
    return 1.1 * std::max(radius, 1e-6);
}

// ---------------------------------------------------------------------------

namespace {

enum CloudGroup { kPosition = 0, kRotation, kScale, kOpacity, kIntrinsic, kSampling, kGroupCount };

int group_width(int group, int K) {
    switch (group) {
        case kPosition: return 3;
        case kRotation: return 4;
        case kScale: return 3;
        case kOpacity: return 1;
        case kIntrinsic: return kIntrinsicDim;
        default: return 2 * K;
    }
}

double* group_data(GaussianPoint& p, int group) {
    switch (group) {
        case kPosition: return p.position.data();
        case kRotation: return p.rotation.data();
        case kScale: return p.log_scale.data();
        case kOpacity: return &p.opacity_logit;
        case kIntrinsic: return p.intrinsic.data();
        default: return p.sampling_coords.data();
    }
}

Vec3 view_direction_backward(const Vec3& x, const Vec3& center, const Vec3& d_dir) {
    const Vec3 v = x - center;
    const double len = v.norm();
    if (len <= 0) return Vec3::Zero();
    const Vec3 u = v / len;
    return (d_dir - u * u.dot(d_dir)) / len;
}

}  // namespace

struct Trainer::CloudGrad {
    std::array<std::vector<double>, kGroupCount> groups;
};

Trainer::Trainer(const TrainConfig& config, std::vector<TrainView> train_views, std::vector<TrainView> test_views,
                 GaussianCloud initial, const TrainView* reference)
    : config_(config), train_(std::move(train_views)), test_(std::move(test_views)), cloud_(std::move(initial)),
      view_rng_(config.seed), dropout_rng_(config.seed * 7919 + 1), densify_rng_(config.seed * 104729 + 2) {
    require(!train_.empty(), "trainer: at least one training view required");
    require(config_.iterations >= 0, "trainer: iterations must be nonnegative");
    config_.weights.validate();
    config_.appearance.K = cloud_.K;
    cloud_.validate();
    require(!cloud_.empty(), "trainer: initial cloud is empty");
    if (reference) reference_ = *reference;

    model_ = AppearanceModel(config_.appearance, config_.seed * 31 + 5);
    extent_ = camera_extent(train_);
    position_lr_ = {config_.lr_position_start * extent_, config_.lr_position_end * extent_, config_.iterations};
    extractor_lr_ = {config_.lr_extractor_start, config_.lr_extractor_end, config_.iterations};

    cloud_state_.resize(kGroupCount);
    for (int g = 0; g < kGroupCount; ++g) cloud_state_[g].resize(cloud_.size() * group_width(g, cloud_.K));
    extractor_state_.resize(model_.extractor.parameters().size());
    mlp_state_.resize(model_.nets.fusion_parameters().size() + model_.nets.decoder_parameters().size());
    stats_.reset(cloud_.size());
}

std::size_t Trainer::next_view() {
    if (cursor_ >= permutation_.size()) {
        permutation_.resize(train_.size());
        std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
        std::shuffle(permutation_.begin(), permutation_.end(), view_rng_);
        cursor_ = 0;
    }
    return permutation_[cursor_++];
}

StepStats Trainer::step() {
    const TrainView& view = train_[next_view()];
    const Camera& cam = view.camera;
    const AppearanceOptions& opts = model_.options;
    const std::size_t n = cloud_.size();
    const int K = cloud_.K;

    for (auto* p : model_.parameters()) p->zero_grad();

    // Appearance forward.
    ExtractorNet::Tape etape;
    const FeatureStack stack = model_.extractor.forward(view.image, &etape);
    const DynamicFeatures df = assemble_dynamic_features(cloud_, stack, &cam, 1.0, opts, &dropout_rng_);
    const RowMatrix fin = fusion_input(cloud_, df.values, opts);
    FusionNets::FuseTape ftape;
    const RowMatrix af = model_.nets.fuse(fin, &ftape);
    const Vec3 center = cam.center();
    const RowMatrix din = decoder_input(cloud_, af, center, opts);
    FusionNets::DecodeTape dtape;
    const RowMatrix colors = model_.nets.decode(din, &dtape);

    // Geometry forward.
    std::vector<Mat3> cov3(n);
    RenderInput rin;
    rin.height = cam.height;
    rin.width = cam.width;
    rin.background = config_.background;
    rin.projected.resize(n);
    rin.opacity.resize(n);
    rin.color = rows_to_colors(colors);
    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPoint& p = cloud_.points[i];
        cov3[i] = covariance_from_parameters(p.rotation, p.log_scale);
        rin.projected[i] = project_gaussian(p.position, cov3[i], cam);
        rin.opacity[i] = p.opacity();
    }
    const RenderOutput rout = render(rin);

    const bool use_vm = !config_.disable_vm && iteration_ >= config_.vm_warmup;
    Tensor visibility = use_vm ? stack.visibility : Tensor(1, cam.height, cam.width, 1.0);
    StepStats s;
    s.image_term = image_loss(rout.image, view.image, visibility, config_.weights);
    s.sc_term = sampling_coord_loss(cloud_);
    s.vm_term = use_vm ? visibility_loss(visibility) : 0.0;
    s.loss = total_loss(s.image_term, s.sc_term, s.vm_term, config_.weights);
    if (!std::isfinite(s.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << iteration_ << " (image " << s.image_term << ", sc " << s.sc_term
            << ", vm " << s.vm_term << ", points " << n << ")";
        throw NonFiniteLoss(msg.str());
    }

    // Backward.
    const ImageLossGrad ig = image_loss_backward(rout.image, view.image, visibility, config_.weights);
    const RenderGrad rg = render_backward(rin, rout, ig.d_rendered);

    CloudGrad g;
    for (int grp = 0; grp < kGroupCount; ++grp) g.groups[grp].assign(n * group_width(grp, K), 0.0);
    auto pos_grad = [&](std::size_t i) { return Eigen::Map<Vec3>(g.groups[kPosition].data() + 3 * i); };

    RowMatrix d_colors(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) d_colors.row(i) = rg.d_color[i].transpose();
    const RowMatrix d_din = model_.nets.decode_backward(dtape, d_colors);
    const RowMatrix d_af = d_din.leftCols(kAppearanceDim);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& x = cloud_.points[i].position;
        const double* cond = d_din.row(i).data() + kAppearanceDim;
        if (opts.lego_mode) {
            pos_grad(i) += positional_encoding_backward(x, std::span<const double>(cond, kPositionEncodingDim));
        } else {
            pos_grad(i) += view_direction_backward(x, center, Vec3(cond[0], cond[1], cond[2]));
        }
    }

    const RowMatrix d_fin = model_.nets.fuse_backward(ftape, d_af);
    const int ddim = opts.dynamic_dim();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = d_fin.row(i).data();
        if (!opts.disable_separation)
            std::copy(row, row + kIntrinsicDim, g.groups[kIntrinsic].data() + i * kIntrinsicDim);
        pos_grad(i) += positional_encoding_backward(
            cloud_.points[i].position, std::span<const double>(row + kIntrinsicDim + ddim, kPositionEncodingDim));
    }
    const RowMatrix d_df = d_fin.middleCols(kIntrinsicDim, ddim);
    const DynamicFeatureGrad dg = assemble_dynamic_features_backward(cloud_, stack, &cam, df, opts, d_df);

    Tensor d_vis = ig.d_visibility;
    if (!use_vm) {
        std::fill(d_vis.data.begin(), d_vis.data.end(), 0.0);
    } else {
        const Tensor d_reg = visibility_loss_backward(visibility);
        for (std::size_t i = 0; i < d_vis.data.size(); ++i) d_vis.data[i] += config_.weights.vm * d_reg.data[i];
    }
    model_.extractor.backward(etape, dg.d_features, d_vis);

    const RowMatrix d_sc_reg = sampling_coord_loss_backward(cloud_);
    const double ndc_x = 0.5 * cam.width, ndc_y = 0.5 * cam.height;
    for (std::size_t i = 0; i < n; ++i) {
        GaussianPoint& p = cloud_.points[i];
        pos_grad(i) += dg.d_position[i];
        for (int j = 0; j < 2 * K; ++j)
            g.groups[kSampling][i * 2 * K + j] = dg.d_sampling_coords(i, j) + config_.weights.sc * d_sc_reg(i, j);

        const double alpha = rin.opacity[i];
        g.groups[kOpacity][i] = rg.d_opacity[i] * alpha * (1.0 - alpha);
        if (!rin.projected[i].valid || !rout.geometry[i].active) continue;
        const Vec3 d_x_mean = project_point_backward(p.position, cam, rg.d_pixel_mean[i], 0.0);
        const ProjectCovarianceGrad pc = project_covariance_backward(cov3[i], p.position, cam, rg.d_cov2d[i]);
        pos_grad(i) += d_x_mean + pc.d_position;
        const ParameterCovarianceGrad cg = covariance_from_parameters_backward(p.rotation, p.log_scale, pc.d_cov);
        std::copy(cg.d_raw_rotation.data(), cg.d_raw_rotation.data() + 4, g.groups[kRotation].data() + 4 * i);
        std::copy(cg.d_log_scale.data(), cg.d_log_scale.data() + 3, g.groups[kScale].data() + 3 * i);

        const Vec2 ndc(rg.d_pixel_mean[i].x() * ndc_x, rg.d_pixel_mean[i].y() * ndc_y);
        stats_.add(i, ndc.norm());
    }

    apply_cloud_update(g);
    apply_network_update();
    ++iteration_;

    if (iteration_ >= config_.densify_from && iteration_ <= config_.densify_until &&
        config_.densify_interval > 0 && iteration_ % config_.densify_interval == 0) {
        densify();
    }
    return s;
}

void Trainer::apply_cloud_update(const CloudGrad& g) {
    const int K = cloud_.K;
    const std::size_t n = cloud_.size();
    const double lrs[kGroupCount] = {position_lr_.at(iteration_), config_.lr_rotation, config_.lr_scaling,
                                     config_.lr_opacity, config_.lr_intrinsic, config_.lr_sampling};
    for (int grp = 0; grp < kGroupCount; ++grp) {
        if (grp == kSampling && (config_.freeze_sc || model_.options.disable_k_maps)) continue;
        if (grp == kIntrinsic && model_.options.disable_separation) continue;
        const int w = group_width(grp, K);
        std::vector<double> flat(n * w);
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = group_data(cloud_.points[i], grp);
            std::copy(src, src + w, flat.data() + i * w);
        }
        if (!adam_step(flat, g.groups[grp], cloud_state_[grp], lrs[grp])) continue;
        for (std::size_t i = 0; i < n; ++i) std::copy(flat.data() + i * w, flat.data() + (i + 1) * w,
                                                      group_data(cloud_.points[i], grp));
    }
    for (auto& p : cloud_.points) {
        const double norm = p.rotation.norm();
        p.rotation = norm > 0 ? Vec4(p.rotation / norm) : Vec4(1, 0, 0, 0);
    }
}

void Trainer::apply_network_update() {
    const double lr_ext = extractor_lr_.at(iteration_);
    auto ext = model_.extractor.parameters();
    for (std::size_t i = 0; i < ext.size(); ++i) adam_step(ext[i]->value, ext[i]->grad, extractor_state_[i], lr_ext);
    auto mlp = model_.nets.fusion_parameters();
    for (auto* p : model_.nets.decoder_parameters()) mlp.push_back(p);
    for (std::size_t i = 0; i < mlp.size(); ++i) adam_step(mlp[i]->value, mlp[i]->grad, mlp_state_[i], config_.lr_mlp);
}

void Trainer::densify() {
    DensifyOptions opt;
    opt.grad_threshold = config_.grad_threshold;
    opt.min_opacity = config_.min_opacity;
    opt.scene_extent = extent_;
    opt.percent_dense = config_.percent_dense;
    DensifyResult r = densify_and_prune(cloud_, stats_, opt, densify_rng_);

    const int K = cloud_.K;
    for (int grp = 0; grp < kGroupCount; ++grp) {
        const int w = group_width(grp, K);
        AdamState next;
        next.step = cloud_state_[grp].step;
        next.resize(r.cloud.size() * w);
        for (std::size_t j = 0; j < r.cloud.size(); ++j) {
            if (!r.untouched[j]) continue;
            const std::size_t src = r.origin[j];
            std::copy_n(cloud_state_[grp].m.begin() + src * w, w, next.m.begin() + j * w);
            std::copy_n(cloud_state_[grp].v.begin() + src * w, w, next.v.begin() + j * w);
        }
        cloud_state_[grp] = std::move(next);
    }
    cloud_ = std::move(r.cloud);
    stats_.reset(cloud_.size());
}

namespace {

double mean_psnr(const GaussianCloud& cloud, const AppearanceModel& model, const std::vector<TrainView>& views,
                 const TrainView* fixed_reference, const Vec3& bg) {
    if (views.empty()) return 0.0;
    double total = 0.0;
    for (const auto& v : views) {
        const TrainView& ref = fixed_reference ? *fixed_reference : v;
        const Image img = render_uncached(cloud, model, ref.image, &ref.camera, v.camera, 1.0, bg);
        total += psnr(img, v.image);
    }
    return total / static_cast<double>(views.size());
}

}  // namespace

double Trainer::mean_train_psnr() const { return mean_psnr(cloud_, model_, train_, nullptr, config_.background); }

double Trainer::mean_test_psnr() const {
    if (test_.empty()) return 0.0;
    const TrainView& ref = reference_ ? *reference_ : train_.front();
    return mean_psnr(cloud_, model_, test_, &ref, config_.background);
}

void Trainer::run(const std::function<void(const LogEntry&)>& on_log) {
    double last_loss = 0.0;
    while (iteration_ < config_.iterations) {
        last_loss = step().loss;
        const bool at_interval = config_.eval_interval > 0 && iteration_ % config_.eval_interval == 0;
        if (at_interval || iteration_ == config_.iterations) {
            LogEntry e;
            e.iteration = iteration_;
            e.loss = last_loss;
            e.psnr_train = mean_train_psnr();
            e.psnr_test = mean_test_psnr();
            e.points = cloud_.size();
            log_.push_back(e);
            if (on_log) on_log(e);
        }
    }
}

}  // namespace gsw
