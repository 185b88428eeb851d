#pragma once

#include "gsw/appearance.hpp"
#include "gsw/camera.hpp"
#include "gsw/losses.hpp"
#include "gsw/scene.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gsw {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

/// One bias-corrected Adam update. Returns false and leaves params and state
/// untouched when any gradient is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamHyper& hyper = {});

/// lr(t) = start * (end / start)^(t / total), clamped to t in [0, total].
struct ExponentialSchedule {
    double start = 1.0;
    double end = 1.0;
    long total = 1;

    double at(long step) const;
};

/// K random 2x3 matrices with entries in [0,1), each row rescaled to sum 1.
std::vector<Mat23> random_sampling_matrices(int K, std::mt19937_64& rng);

/// sc^k_i = M^k X_i for every point, the same matrices for all points.
/// Returns 2K values per point.
std::vector<std::vector<double>> init_sampling_coords(const std::vector<Vec3>& positions, int K,
                                                      std::uint64_t seed);

struct TrainView {
    Image image;
    Camera camera;
};

struct TrainConfig {
    int iterations = 20000;
    std::uint64_t seed = 1;
    AppearanceOptions appearance;
    LossWeights weights;
    bool freeze_sc = false;
    bool disable_vm = false;
    int vm_warmup = 500;  // VM held at 1 (no VM gradient) before this iteration
    Vec3 background = Vec3::Zero();

    double lr_position_start = 1.6e-4;
    double lr_position_end = 1.6e-7;
    double lr_extractor_start = 2e-3;
    double lr_extractor_end = 2e-5;
    double lr_mlp = 5e-4;
    double lr_rotation = 1e-3;
    double lr_scaling = 5e-3;
    double lr_opacity = 5e-2;
    double lr_intrinsic = 2.5e-3;
    double lr_sampling = 1e-3;

    int densify_from = 500;
    int densify_until = 15000;
    int densify_interval = 100;
    double grad_threshold = 4e-4;
    double min_opacity = 0.005;
    double percent_dense = 0.01;

    int eval_interval = 500;  // 0 disables periodic evaluation
};

struct LogEntry {
    int iteration = 0;
    double loss = 0.0;
    double psnr_train = 0.0;
    double psnr_test = 0.0;
    std::size_t points = 0;
};

struct StepStats {
    double loss = 0.0;
    double image_term = 0.0;
    double sc_term = 0.0;
    double vm_term = 0.0;
};

/// 1.1 x the largest distance of a camera center from the mean center.
double camera_extent(const std::vector<TrainView>& views);

/// Joint optimization of the cloud and the appearance networks.
class Trainer {
public:
    /// `reference` is the clean image used to render test views during evaluation.
    Trainer(const TrainConfig& config, std::vector<TrainView> train_views, std::vector<TrainView> test_views,
            GaussianCloud initial, const TrainView* reference = nullptr);

    /// One optimization step on the next sampled training view.
    StepStats step();
    /// Runs until config.iterations, logging every eval_interval.
    void run(const std::function<void(const LogEntry&)>& on_log = {});

    double mean_train_psnr() const;
    double mean_test_psnr() const;

    int iteration() const { return iteration_; }
    const GaussianCloud& cloud() const { return cloud_; }
    AppearanceModel& model() { return model_; }
    const AppearanceModel& model() const { return model_; }
    const std::vector<LogEntry>& log() const { return log_; }
    const TrainConfig& config() const { return config_; }
    double scene_extent() const { return extent_; }

private:
    struct CloudGrad;

    std::size_t next_view();
    void apply_cloud_update(const CloudGrad& g);
    void apply_network_update();
    void densify();

    TrainConfig config_;
    std::vector<TrainView> train_;
    std::vector<TrainView> test_;
    std::optional<TrainView> reference_;
    GaussianCloud cloud_;
    AppearanceModel model_;
    double extent_ = 1.0;
    int iteration_ = 0;

    std::mt19937_64 view_rng_;
    std::mt19937_64 dropout_rng_;
    std::mt19937_64 densify_rng_;
    std::vector<std::size_t> permutation_;
    std::size_t cursor_ = 0;

    ExponentialSchedule position_lr_;
    ExponentialSchedule extractor_lr_;
    std::vector<AdamState> cloud_state_;  // position, rotation, scale, opacity, intrinsic, sampling
    std::vector<AdamState> extractor_state_;
    std::vector<AdamState> mlp_state_;
    DensifyStats stats_;
    std::vector<LogEntry> log_;
};

}  // namespace gsw
