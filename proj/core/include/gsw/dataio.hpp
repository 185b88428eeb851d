#pragma once

#include "gsw/camera.hpp"
#include "gsw/optim.hpp"
#include "gsw/scene.hpp"
#include "gsw/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsw {

/// Solid rectangle painted over a training image, pixels [x0, x1) x [y0, y1).
struct Occluder {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    Vec3 color = Vec3::Zero();
};

struct Perturbation {
    Vec3 gain = Vec3::Ones();
    Vec3 bias = Vec3::Zero();
    std::vector<Occluder> occluders;

    bool identity() const { return gain == Vec3::Ones() && bias == Vec3::Zero() && occluders.empty(); }
};

struct DatasetSpec {
    int width = 64;
    int height = 64;
    int n_train = 20;
    int n_test = 5;
    int n_points = 2000;
    int K = 3;
    double focal = 80.0;
    double ring_radius = 3.0;
    double ring_height = 1.2;
    double point_scale = 0.03;
    double gain_min = 0.6, gain_max = 1.4;
    double bias_min = -0.1, bias_max = 0.1;
    int max_occluders = 2;
    double init_noise = 0.02;  // fraction of the scene extent
    double init_opacity = 0.1;

    void validate() const;
};

struct DatasetView {
    std::string role;  // "train" or "test"
    Image image;
    int camera_index = 0;
    Perturbation perturbation;
};

struct SyntheticDataset {
    GaussianCloud ground_truth;
    std::vector<Vec3> colors;  // fixed ground-truth color per point
    std::vector<Camera> cameras;
    std::vector<DatasetView> views;
    GaussianCloud init_cloud;

    std::vector<TrainView> train_views() const;
    std::vector<TrainView> test_views() const;
    /// First training view without perturbation; the designated clean reference.
    std::size_t reference_view() const;
};

/// Cameras on a horizontal circle around the origin, looking at it, +z up.
std::vector<Camera> camera_ring(int count, double radius, double height, double focal, int width, int height_px);

/// Textured boxes and spheres as ground-truth Gaussians with per-point colors.
GaussianCloud synthetic_scene(int n_points, int K, double point_scale, std::mt19937_64& rng,
                              std::vector<Vec3>& colors);

/// Gains and biases clamped to [0,1], then occluders painted on top.
Image apply_perturbation(const Image& clean, const Perturbation& p);

/// 1 where any occluder covers the pixel, row-major.
std::vector<std::uint8_t> occluder_mask(int height, int width, const Perturbation& p);

/// Every 5th camera becomes a test view; the first training view is clean.
SyntheticDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

double psnr(const Image& a, const Image& b);

void write_image(const std::string& path, const Image& image);
Image read_image(const std::string& path);

void save_scene(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_scene(const std::string& path);

void save_cameras(const std::string& path, const std::vector<Camera>& cameras);
std::vector<Camera> load_cameras(const std::string& path);

/// Directory layout: manifest.txt, cameras.txt, init_cloud.gsw, ground_truth.gsw, images/.
void save_dataset(const std::string& dir, const SyntheticDataset& data);
SyntheticDataset load_dataset(const std::string& dir);

}  // namespace gsw
