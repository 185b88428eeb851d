#include "gsw/dataio.hpp"
#include "gsw/losses.hpp"
#include "gsw/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gsw;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gsw_dataio_" + name);
    fs::remove_all(p);
    return p;
}

Image random_image(int h, int w, std::mt19937_64& rng) {
    Image img(h, w);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = u(rng);
    return img;
}

DatasetSpec small_spec() {
    DatasetSpec s;
    s.width = 32;
    s.height = 24;
    s.focal = 40;
    s.n_train = 6;
    s.n_test = 2;
    s.n_points = 200;
    return s;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitCap) {
    std::mt19937_64 rng(1);
    const Image a = random_image(5, 6, rng);
    EXPECT_EQ(psnr(a, a), 99.0);
}

TEST(Psnr, MseOfOneHundredthIsTwentyDb) {
    Image a(4, 4, 0.5), b(4, 4, 0.6);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, SymmetricAndMatchesScalarLoop) {
    std::mt19937_64 rng(2);
    const Image a = random_image(7, 9, rng), b = random_image(7, 9, rng);
    double mse = 0.0;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x)
            for (int c = 0; c < 3; ++c) mse += std::pow(a.at(y, x, c) - b.at(y, x, c), 2);
    mse /= 7 * 9 * 3;
    EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(mse), 1e-12);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_GE(psnr(a, b), 0.0);
}

TEST(Psnr, ShapeMismatchThrows) { EXPECT_THROW(psnr(Image(2, 2), Image(2, 3)), ContractViolation); }

TEST(ImageFile, RoundTripWithinQuantization) {
    std::mt19937_64 rng(3);
    const Image a = random_image(13, 17, rng);
    const auto path = scratch("img.ppm");
    write_image(path.string(), a);
    const Image b = read_image(path.string());
    ASSERT_TRUE(b.same_shape(a));
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_LE(std::abs(a.data[i] - b.data[i]), 1.0 / 255.0);
    // a second pass is exact: dequantized values requantize to the same byte
    write_image(path.string(), b);
    EXPECT_EQ(read_image(path.string()).data, b.data);
    fs::remove(path);
}

TEST(ImageFile, TruncatedPixelsRejected) {
    const auto path = scratch("trunc.ppm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n4 4\n255\n" << std::string(10, 'x');
    }
    EXPECT_THROW(read_image(path.string()), ParseError);
    fs::remove(path);
}

TEST(SceneFile, RoundTripIsExact) {
    const SyntheticDataset d = generate_dataset(small_spec(), 4);
    const auto path = scratch("scene.gsw");
    save_scene(path.string(), d.init_cloud);
    const GaussianCloud c = load_scene(path.string());
    ASSERT_EQ(c.size(), d.init_cloud.size());
    EXPECT_EQ(c.K, d.init_cloud.K);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto &p = c.points[i], &q = d.init_cloud.points[i];
        EXPECT_EQ(p.position, q.position);
        EXPECT_EQ(p.rotation, q.rotation);
        EXPECT_EQ(p.log_scale, q.log_scale);
        EXPECT_EQ(p.opacity_logit, q.opacity_logit);
        EXPECT_EQ(p.intrinsic, q.intrinsic);
        EXPECT_EQ(p.sampling_coords, q.sampling_coords);
    }
    fs::remove(path);
}

TEST(SceneFile, TruncatedFileNamesLine) {
    const SyntheticDataset d = generate_dataset(small_spec(), 5);
    const auto path = scratch("cut.gsw");
    save_scene(path.string(), d.init_cloud);
    std::vector<std::string> lines;
    {
        std::ifstream in(path);
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    {
        std::ofstream out(path);
        for (int i = 0; i < 5; ++i) out << lines[i] << '\n';
        out << lines[5].substr(0, lines[5].size() / 2) << '\n';
    }
    try {
        load_scene(path.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 6u);
        EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos);
    }
    {
        std::ofstream out(path);
        for (int i = 0; i < 5; ++i) out << lines[i] << '\n';
    }
    EXPECT_THROW(load_scene(path.string()), ParseError);
    {
        std::ofstream out(path);
        out << "GSW2 K=3\n";
    }
    try {
        load_scene(path.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
    fs::remove(path);
}

TEST(CameraFile, RoundTripAndBadMatrix) {
    const auto cams = camera_ring(5, 3.0, 1.0, 60, 32, 24);
    const auto path = scratch("cams.txt");
    save_cameras(path.string(), cams);
    const auto back = load_cameras(path.string());
    ASSERT_EQ(back.size(), cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        EXPECT_EQ(back[i].world_to_cam, cams[i].world_to_cam);
        EXPECT_EQ(back[i].fx, cams[i].fx);
        EXPECT_EQ(back[i].width, cams[i].width);
        EXPECT_EQ(back[i].height, cams[i].height);
    }
    {
        std::ofstream out(path);
        out << "60 60 16 12 32 24 0.01\n1 0 0 0\n0 1 0 0\n";
    }
    EXPECT_THROW(load_cameras(path.string()), ParseError);
    fs::remove(path);
}

TEST(Perturbation, GainsClampAtOne) {
    Image gray(4, 4, 0.5);
    gray.at(0, 0, 0) = 0.3;
    Perturbation p;
    p.gain = Vec3(2, 2, 2);
    const Image out = apply_perturbation(gray, p);
    EXPECT_EQ(out.at(1, 1, 1), 1.0);
    EXPECT_NEAR(out.at(0, 0, 0), 0.6, 1e-15);
    p.gain = Vec3(3, 3, 3);
    for (double v : apply_perturbation(gray, p).data) EXPECT_LE(v, 1.0);
    p.gain = Vec3::Ones();
    p.bias = Vec3(-0.8, -0.8, -0.8);
    for (double v : apply_perturbation(gray, p).data) EXPECT_EQ(v, 0.0);
}

TEST(Perturbation, OccluderPaintsHalfOpenRectAndMask) {
    Perturbation p;
    p.occluders.push_back({1, 2, 3, 4, Vec3(0.1, 0.2, 0.3)});
    const Image out = apply_perturbation(Image(5, 5, 0.5), p);
    const auto mask = occluder_mask(5, 5, p);
    int covered = 0;
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            const bool in = x >= 1 && x < 3 && y >= 2 && y < 4;
            EXPECT_EQ(mask[y * 5 + x], in ? 1 : 0);
            EXPECT_EQ(out.at(y, x, 2), in ? 0.3 : 0.5);
            covered += in;
        }
    EXPECT_EQ(covered, 4);
    EXPECT_TRUE(Perturbation{}.identity());
    EXPECT_FALSE(p.identity());
}

TEST(Dataset, SplitAndPerturbationPolicy) {
    const DatasetSpec s = small_spec();
    const SyntheticDataset d = generate_dataset(s, 6);
    EXPECT_EQ(d.train_views().size(), 6u);
    EXPECT_EQ(d.test_views().size(), 2u);
    EXPECT_EQ(d.cameras.size(), 8u);
    for (const auto& v : d.views)
        if (v.role == "test") EXPECT_TRUE(v.perturbation.identity());
    const std::size_t ref = d.reference_view();
    EXPECT_EQ(ref, 0u);
    EXPECT_TRUE(d.views[0].perturbation.identity());
    int perturbed = 0;
    for (const auto& v : d.views) perturbed += v.role == "train" && !v.perturbation.identity();
    EXPECT_EQ(perturbed, 5);
}

TEST(Dataset, IdentityViewEqualsCleanRenderBitwise) {
    const SyntheticDataset d = generate_dataset(small_spec(), 7);
    for (const auto& v : d.views) {
        if (!v.perturbation.identity()) continue;
        const Image clean = render_fixed_colors(d.ground_truth, d.cameras[v.camera_index], d.colors, Vec3::Zero());
        EXPECT_EQ(v.image.data, clean.data);
    }
}

TEST(Dataset, DeterministicForSeed) {
    const SyntheticDataset a = generate_dataset(small_spec(), 8), b = generate_dataset(small_spec(), 8);
    ASSERT_EQ(a.views.size(), b.views.size());
    for (std::size_t i = 0; i < a.views.size(); ++i) EXPECT_EQ(a.views[i].image.data, b.views[i].image.data);
    for (std::size_t i = 0; i < a.init_cloud.size(); ++i)
        EXPECT_EQ(a.init_cloud.points[i].position, b.init_cloud.points[i].position);
    const SyntheticDataset c = generate_dataset(small_spec(), 9);
    EXPECT_NE(a.views[1].image.data, c.views[1].image.data);
}

TEST(Dataset, InitCloudJitterIsSmallAndGroundTruthUntouched) {
    const SyntheticDataset d = generate_dataset(small_spec(), 10);
    ASSERT_EQ(d.init_cloud.size(), d.ground_truth.size());
    double extent = 0.0, sq = 0.0;
    Vec3 c = Vec3::Zero();
    for (const auto& p : d.ground_truth.points) c += p.position;
    c /= static_cast<double>(d.ground_truth.size());
    for (const auto& p : d.ground_truth.points) extent = std::max(extent, (p.position - c).norm());
    for (std::size_t i = 0; i < d.init_cloud.size(); ++i)
        sq += (d.init_cloud.points[i].position - d.ground_truth.points[i].position).squaredNorm();
    const double sigma = std::sqrt(sq / (3.0 * d.init_cloud.size()));
    EXPECT_NEAR(sigma, 0.02 * extent, 0.004 * extent);
    // ground truth keeps the attributes it was generated with
    for (const auto& p : d.ground_truth.points) {
        EXPECT_NEAR(p.opacity(), 0.9, 1e-12);
        EXPECT_NEAR(p.rotation.norm(), 1.0, 1e-12);
    }
    // rendering the ground truth again reproduces the clean test views
    for (const auto& v : d.views)
        if (v.role == "test")
            EXPECT_EQ(render_fixed_colors(d.ground_truth, d.cameras[v.camera_index], d.colors, Vec3::Zero()).data,
                      v.image.data);
}

TEST(Dataset, InvalidSpecRejected) {
    DatasetSpec s = small_spec();
    s.n_train = 1;
    EXPECT_THROW(generate_dataset(s, 1), ContractViolation);
    s = small_spec();
    s.n_test = 0;
    EXPECT_THROW(generate_dataset(s, 1), ContractViolation);
}

TEST(Dataset, DirectoryRoundTrip) {
    const SyntheticDataset d = generate_dataset(small_spec(), 11);
    const auto dir = scratch("ds");
    save_dataset(dir.string(), d);
    const SyntheticDataset r = load_dataset(dir.string());
    ASSERT_EQ(r.views.size(), d.views.size());
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        EXPECT_EQ(r.views[i].role, d.views[i].role);
        EXPECT_EQ(r.views[i].camera_index, d.views[i].camera_index);
        EXPECT_EQ(r.views[i].perturbation.occluders.size(), d.views[i].perturbation.occluders.size());
        for (std::size_t k = 0; k < d.views[i].image.data.size(); ++k)
            ASSERT_LE(std::abs(r.views[i].image.data[k] - d.views[i].image.data[k]), 1.0 / 255.0);
    }
    EXPECT_EQ(r.reference_view(), d.reference_view());
    EXPECT_EQ(r.init_cloud.size(), d.init_cloud.size());
    EXPECT_EQ(r.ground_truth.size(), d.ground_truth.size());
    fs::remove_all(dir);
    EXPECT_THROW(load_dataset(dir.string()), std::runtime_error);
}
