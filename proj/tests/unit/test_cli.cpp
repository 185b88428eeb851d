#include "commands.hpp"
#include "run_config.hpp"

#include "gsw/dataio.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gsw;
using namespace gsw::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "gsw");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

double l1(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

const char* kSmallData =
    "width = 32\nheight = 32\nfocal = 40\nn_train = 6\nn_test = 2\nn_points = 250\n";

}  // namespace

class CliPipeline : public ::testing::Test {
protected:
    static fs::path root;

    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / "gsw_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        write_file(root / "cfg.txt", std::string("# smoke run\ndataset = ") + (root / "data").string() +
                                         "\noutput = " + (root / "run").string() + "\nseed = 3\n" + kSmallData +
                                         "iterations = 200\neval_interval = 100\ndensify_from = 100\n"
                                         "densify_until = 150\ndensify_interval = 50\nvm_warmup = 100\n");
        ASSERT_EQ(run_cli({"generate", "--config", (root / "cfg.txt").string()}).code, 0);
        const Result r = run_cli({"train", "--config", (root / "cfg.txt").string()});
        ASSERT_EQ(r.code, 0) << r.err;
        save_cameras((root / "novel.txt").string(), camera_ring(3, 3.0, 1.0, 40, 32, 32));
    }

    static std::vector<std::string> render_args(const std::string& out, const std::string& reference) {
        return {"render",  "--scene",     (root / "run/scene.gsw").string(),
                "--checkpoint", (root / "run/model.gswnet").string(),
                "--reference",  reference,
                "--reference-camera", (root / "data/cameras.txt").string(),
                "--cameras", (root / "novel.txt").string(),
                "--out", (root / out).string()};
    }
    static std::string ref_image() { return (root / "data/images/train_000.ppm").string(); }
};

fs::path CliPipeline::root;

TEST(Config, ParsesKeysCommentsAndFlags) {
    const RunConfig c = parse_config(
        "# comment\n dataset = d  # trailing\nK = 2\nlego_mode = true\nlambda_vm = 0.2\ntune_weights = 0,0.5,1\n"
        "freeze_sc = 1\n");
    EXPECT_EQ(c.dataset, "d");
    EXPECT_EQ(c.train.appearance.K, 2);
    EXPECT_EQ(c.data.K, 2);
    EXPECT_TRUE(c.train.appearance.lego_mode);
    EXPECT_TRUE(c.train.freeze_sc);
    EXPECT_EQ(c.train.weights.vm, 0.2);
    EXPECT_EQ(c.tune_weights, (std::vector<double>{0.0, 0.5, 1.0}));
    // lego mode lowers the densify threshold unless it was given
    EXPECT_EQ(c.train.grad_threshold, 1.5e-4);
    EXPECT_EQ(parse_config("lego_mode = true\ngrad_threshold = 3e-4\n").train.grad_threshold, 3e-4);
}

TEST(Config, DefaultsMatchReferenceValues) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.train.appearance.K, 3);
    EXPECT_EQ(c.train.weights.l1, 0.8);
    EXPECT_EQ(c.train.weights.ssim, 0.2);
    EXPECT_EQ(c.train.weights.sc, 0.001);
    EXPECT_EQ(c.train.weights.vm, 0.15);
    EXPECT_EQ(c.train.lr_position_start, 1.6e-4);
    EXPECT_EQ(c.train.lr_position_end, 1.6e-7);
    EXPECT_EQ(c.train.lr_extractor_start, 2e-3);
    EXPECT_EQ(c.train.lr_extractor_end, 2e-5);
    EXPECT_EQ(c.train.densify_from, 500);
    EXPECT_EQ(c.train.densify_until, 15000);
    EXPECT_EQ(c.train.grad_threshold, 4e-4);
}

TEST(Config, RejectsUnknownDuplicateAndMalformed) {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const UsageError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("seed = 1\nbogus_key = 3\n").find("bogus_key"), std::string::npos);
    EXPECT_NE(message("seed = 1\nbogus_key = 3\n").find("line 2"), std::string::npos);
    EXPECT_NE(message("K = 2\nK = 3\n").find("K"), std::string::npos);
    EXPECT_NE(message("iterations = ten\n").find("iterations"), std::string::npos);
    EXPECT_NE(message("just text\n").find("line 1"), std::string::npos);
    EXPECT_FALSE(message("lambda_lpips = 0.005\n").empty());
    EXPECT_FALSE(message("K = 0\n").empty());
    for (const auto& k : {"vm_warmup", "disable_vm", "freeze_sc", "disable_k_maps", "disable_separation",
                          "disable_projection_map", "transfer", "lego_mode"}) {
        const auto keys = config_keys();
        EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
    }
}

TEST(Cli, MissingDatasetIsUsageErrorNamingKey) {
    const fs::path cfg = fs::temp_directory_path() / "gsw_cli_nodata.txt";
    write_file(cfg, "iterations = 5\n");
    const Result r = run_cli({"train", "--config", cfg.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("dataset"), std::string::npos);
    write_file(cfg, "dataset = /nonexistent/gsw\n");
    const Result r2 = run_cli({"train", "--config", cfg.string()});
    EXPECT_EQ(r2.code, 2);
    EXPECT_NE(r2.err.find("dataset"), std::string::npos);
    fs::remove(cfg);
}

TEST(Cli, BadArgumentsExitTwo) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"train"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliPipeline, TrainWritesAllOutputs) {
    EXPECT_TRUE(fs::exists(root / "run/scene.gsw"));
    EXPECT_TRUE(fs::exists(root / "run/model.gswnet"));
    const std::string log = slurp(root / "run/train_log.txt");
    std::istringstream ss(log);
    std::vector<int> iters;
    for (std::string line; std::getline(ss, line);) {
        std::istringstream ls(line);
        int it;
        double loss, ptr, pte;
        std::size_t n;
        ASSERT_TRUE(ls >> it >> loss >> ptr >> pte >> n) << line;
        iters.push_back(it);
    }
    EXPECT_EQ(iters, (std::vector<int>{100, 200}));
}

TEST_F(CliPipeline, TrainingIsDeterministic) {
    const Result r = run_cli({"train", "--config", (root / "cfg.txt").string(), "--output", (root / "run2").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(root / "run/train_log.txt"), slurp(root / "run2/train_log.txt"));
    EXPECT_EQ(slurp(root / "run/scene.gsw"), slurp(root / "run2/scene.gsw"));
}

TEST_F(CliPipeline, CachedRenderMatchesUncached) {
    auto a = render_args("plain", ref_image());
    auto b = render_args("cached", ref_image());
    b.push_back("--cache");
    const Result ra = run_cli(a), rb = run_cli(b);
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    EXPECT_NE(rb.out.find("frames 3"), std::string::npos);
    for (int i = 0; i < 3; ++i) {
        const std::string name = "frame_00" + std::to_string(i) + ".ppm";
        EXPECT_EQ(slurp(root / "plain" / name), slurp(root / "cached" / name));
    }
}

TEST_F(CliPipeline, ZeroWeightIgnoresReferenceContent) {
    // an unrelated reference image
    const Image noise = read_image((root / "data/images/train_004.ppm").string());
    Image flipped = noise;
    for (double& v : flipped.data) v = 1.0 - v;
    write_image((root / "flipped.ppm").string(), flipped);
    auto a = render_args("w0a", ref_image());
    auto b = render_args("w0b", (root / "flipped.ppm").string());
    for (auto* v : {&a, &b}) {
        v->push_back("--weight");
        v->push_back("0");
    }
    ASSERT_EQ(run_cli(a).code, 0);
    ASSERT_EQ(run_cli(b).code, 0);
    EXPECT_EQ(slurp(root / "w0a/frame_001.ppm"), slurp(root / "w0b/frame_001.ppm"));
}

TEST_F(CliPipeline, TransferNeedsNoReferenceCamera) {
    const Result missing = run_cli({"render", "--scene", (root / "run/scene.gsw").string(), "--checkpoint",
                                    (root / "run/model.gswnet").string(), "--reference", ref_image(), "--cameras",
                                    (root / "novel.txt").string(), "--out", (root / "x").string()});
    EXPECT_EQ(missing.code, 2);
    const Result r = run_cli({"render", "--scene", (root / "run/scene.gsw").string(), "--checkpoint",
                              (root / "run/model.gswnet").string(), "--reference", ref_image(), "--cameras",
                              (root / "novel.txt").string(), "--out", (root / "transfer").string(), "--transfer"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(root / "transfer/frame_002.ppm"));
}

TEST_F(CliPipeline, EvalPrintsOneRowPerTestViewPlusMean) {
    const Result r = run_cli({"eval", "--scene", (root / "run/scene.gsw").string(), "--checkpoint",
                              (root / "run/model.gswnet").string(), "--dataset", (root / "data").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream ss(r.out);
    std::vector<std::string> names;
    for (std::string line; std::getline(ss, line);) names.push_back(line.substr(0, line.find(' ')));
    EXPECT_EQ(names, (std::vector<std::string>{"view", "test_0", "test_1", "mean"}));
}

TEST_F(CliPipeline, TuneWritesOneFramePerWeight) {
    const Result r = run_cli({"tune", "--scene", (root / "run/scene.gsw").string(), "--checkpoint",
                              (root / "run/model.gswnet").string(), "--reference", ref_image(),
                              "--reference-camera", (root / "data/cameras.txt").string(), "--cameras",
                              (root / "novel.txt").string(), "--weights", "0,0.5,0.501,1", "--out",
                              (root / "tune").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    int frames = 0;
    for (const auto& e : fs::directory_iterator(root / "tune")) frames += e.path().extension() == ".ppm";
    EXPECT_EQ(frames, 4);
    const Image w0 = read_image((root / "tune" / tune_frame_name(0.0)).string());
    const Image w1 = read_image((root / "tune" / tune_frame_name(1.0)).string());
    const Image a = read_image((root / "tune" / tune_frame_name(0.5)).string());
    const Image b = read_image((root / "tune" / tune_frame_name(0.501)).string());
    EXPECT_GT(l1(w0, w1), 0.0);
    // continuity: the 0.001 step moves pixels far less than the full sweep
    EXPECT_LT(l1(a, b), 0.05 * l1(w0, w1) + 1.0 / 255.0);
}
