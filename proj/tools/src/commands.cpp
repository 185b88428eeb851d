#include "commands.hpp"

#include "gsw/dataio.hpp"
#include "gsw/losses.hpp"
#include "gsw/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace gsw::cli {

namespace fs = std::filesystem;

RenderResult render_frames(const RenderRequest& r) {
    if (!r.reference_camera && !r.transfer)
        throw UsageError("render: a reference camera is required unless --transfer is given");
    const Camera* ref_cam = r.reference_camera ? &*r.reference_camera : nullptr;
    RenderResult out;
    using clock = std::chrono::steady_clock;
    if (r.cache) {
        const auto t0 = clock::now();
        FeatureStack stack = extract_features(r.reference, r.model.extractor);
        if (r.transfer) stack = style_transfer_features(stack);
        const RowMatrix af = cache_appearance(r.cloud, stack, ref_cam, r.model.nets, r.weight);
        const double setup = std::chrono::duration<double>(clock::now() - t0).count();
        for (std::size_t i = 0; i < r.novel.size(); ++i) {
            const auto t = clock::now();
            out.frames.push_back(render_cached(r.cloud, r.model.nets, af, r.novel[i], r.background));
            double s = std::chrono::duration<double>(clock::now() - t).count();
            if (i == 0) s += setup;
            out.frame_seconds.push_back(s);
        }
    } else {
        for (const Camera& cam : r.novel) {
            const auto t = clock::now();
            out.frames.push_back(
                render_uncached(r.cloud, r.model, r.reference, ref_cam, cam, r.weight, r.background, r.transfer));
            out.frame_seconds.push_back(std::chrono::duration<double>(clock::now() - t).count());
        }
    }
    return out;
}

std::vector<EvalRow> evaluate(const GaussianCloud& cloud, const AppearanceModel& model,
                              const SyntheticDataset& data, const Vec3& background) {
    const auto test = data.test_views();
    if (test.empty()) throw std::runtime_error("eval: dataset has no test views");
    const auto train = data.train_views();
    const TrainView& ref = train.at(data.reference_view());
    FeatureStack stack = extract_features(ref.image, model.extractor);
    const RowMatrix af = cache_appearance(cloud, stack, &ref.camera, model.nets, 1.0);
    std::vector<EvalRow> rows;
    EvalRow mean{"mean", 0.0, 0.0};
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Image img = render_cached(cloud, model.nets, af, test[i].camera, background);
        EvalRow row{"test_" + std::to_string(i), psnr(img, test[i].image), ssim(img, test[i].image)};
        mean.psnr += row.psnr;
        mean.ssim += row.ssim;
        rows.push_back(row);
    }
    mean.psnr /= static_cast<double>(test.size());
    mean.ssim /= static_cast<double>(test.size());
    rows.push_back(mean);
    return rows;
}

std::string tune_frame_name(double weight) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "tune_w%.4f.ppm", weight);
    return buf;
}

namespace {

Camera pick_camera(const std::string& path, int index) {
    const auto cams = load_cameras(path);
    if (index < 0 || index >= static_cast<int>(cams.size()))
        throw UsageError("camera index " + std::to_string(index) + " out of range for " + path);
    return cams[index];
}

void write_frames(const std::string& dir, const std::vector<Image>& frames, std::ostream& out) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.ppm", i);
        write_image((fs::path(dir) / name).string(), frames[i]);
        out << (fs::path(dir) / name).string() << '\n';
    }
}

RunConfig config_with_overrides(const std::string& path, std::optional<std::uint64_t> seed,
                                const std::string& output) {
    RunConfig cfg = path.empty() ? parse_config("") : load_config(path);
    if (seed) cfg.seed = cfg.train.seed = *seed;
    if (!output.empty()) cfg.output = output;
    return cfg;
}

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
    if (cfg.dataset.empty()) throw UsageError("generate: config key 'dataset' (output directory) is required");
    const SyntheticDataset data = generate_dataset(cfg.data, cfg.seed);
    save_dataset(cfg.dataset, data);
    out << "wrote " << data.views.size() << " views and " << data.init_cloud.size() << " initial points to "
        << cfg.dataset << '\n';
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.dataset.empty()) throw UsageError("train: config key 'dataset' is missing");
    if (!fs::exists(fs::path(cfg.dataset) / "manifest.txt"))
        throw UsageError("train: config key 'dataset' points to '" + cfg.dataset + "', which has no manifest.txt");
    const SyntheticDataset data = load_dataset(cfg.dataset);
    TrainConfig tc = cfg.train;
    tc.appearance.K = data.init_cloud.K;
    const auto train = data.train_views();
    const TrainView ref = train.at(data.reference_view());
    Trainer trainer(tc, train, data.test_views(), data.init_cloud, &ref);

    fs::create_directories(cfg.output);
    std::ofstream log((fs::path(cfg.output) / "train_log.txt").string());
    if (!log) throw std::runtime_error("cannot write training log in " + cfg.output);
    trainer.run([&](const LogEntry& e) {
        char line[160];
        std::snprintf(line, sizeof line, "%d %.6f %.4f %.4f %zu", e.iteration, e.loss, e.psnr_train, e.psnr_test,
                      e.points);
        log << line << '\n';
        log.flush();
        out << line << '\n';
    });
    save_scene((fs::path(cfg.output) / "scene.gsw").string(), trainer.cloud());
    save_checkpoint((fs::path(cfg.output) / "model.gswnet").string(), trainer.model());
    out << "wrote scene.gsw, model.gswnet and train_log.txt to " << cfg.output << '\n';
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gaussian splatting with per-image appearance"};
    app.require_subcommand(1);

    std::string config_path, output;
    std::uint64_t seed_value = 0;

    auto* gen = app.add_subcommand("generate", "Generate a synthetic perturbed dataset");
    gen->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    gen->add_option("--seed", seed_value, "Override the config seed");
    std::string gen_dir;
    gen->add_option("--out", gen_dir, "Dataset directory (overrides 'dataset')");

    auto* train = app.add_subcommand("train", "Train on a dataset");
    train->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", seed_value, "Override the config seed");
    train->add_option("--output", output, "Output directory (overrides 'output')");

    std::string scene_path, checkpoint_path, reference_path, ref_cam_path, cameras_path, out_dir = "frames";
    std::string dataset_dir;
    int ref_cam_index = 0;
    double weight = 1.0;
    bool cache = false, transfer = false;
    std::vector<double> weights;

    auto* render = app.add_subcommand("render", "Render novel views conditioned on a reference image");
    render->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
    render->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    render->add_option("--reference", reference_path, "Reference image (PPM)")->required()->check(CLI::ExistingFile);
    render->add_option("--reference-camera", ref_cam_path, "Camera file holding the reference pose")
        ->check(CLI::ExistingFile);
    render->add_option("--reference-camera-index", ref_cam_index, "Index into the reference camera file");
    render->add_option("--cameras", cameras_path, "Camera file of novel views")->required()->check(CLI::ExistingFile);
    render->add_option("--out", out_dir, "Output directory");
    render->add_option("--weight", weight, "Appearance tuning weight");
    render->add_flag("--cache", cache, "Compute appearance features once for all frames");
    render->add_flag("--transfer", transfer, "Style transfer: ignore the reference pose");

    auto* eval = app.add_subcommand("eval", "Evaluate on the test views of a dataset");
    eval->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", dataset_dir)->required()->check(CLI::ExistingDirectory);

    auto* tune = app.add_subcommand("tune", "Render one frame per appearance weight");
    tune->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--reference", reference_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--reference-camera", ref_cam_path)->required()->check(CLI::ExistingFile);
    tune->add_option("--reference-camera-index", ref_cam_index);
    tune->add_option("--cameras", cameras_path, "Camera file; the first camera is rendered")
        ->required()
        ->check(CLI::ExistingFile);
    tune->add_option("--weights", weights, "Weights, e.g. 0,0.5,1")->required()->delimiter(',');
    tune->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    std::optional<std::uint64_t> seed;
    if (gen->count("--seed") || train->count("--seed")) seed = seed_value;

    try {
        if (*gen) {
            RunConfig cfg = config_with_overrides(config_path, seed, "");
            if (!gen_dir.empty()) cfg.dataset = gen_dir;
            return cmd_generate(cfg, out);
        }
        if (*train) return cmd_train(config_with_overrides(config_path, seed, output), out);
        if (*render) {
            if (ref_cam_path.empty() && !transfer)
                throw UsageError("render: --reference-camera is required unless --transfer is given");
            RenderRequest req;
            req.cloud = load_scene(scene_path);
            req.model = load_checkpoint(checkpoint_path);
            req.reference = read_image(reference_path);
            if (!ref_cam_path.empty()) req.reference_camera = pick_camera(ref_cam_path, ref_cam_index);
            req.novel = load_cameras(cameras_path);
            req.weight = weight;
            req.cache = cache;
            req.transfer = transfer;
            const RenderResult res = render_frames(req);
            write_frames(out_dir, res.frames, out);
            double total = 0.0;
            for (double s : res.frame_seconds) total += s;
            char line[96];
            std::snprintf(line, sizeof line, "frames %zu mean_ms %.3f", res.frames.size(),
                          res.frames.empty() ? 0.0 : 1e3 * total / static_cast<double>(res.frames.size()));
            out << line << '\n';
            return 0;
        }
        if (*eval) {
            const auto rows = evaluate(load_scene(scene_path), load_checkpoint(checkpoint_path),
                                       load_dataset(dataset_dir));
            out << "view psnr ssim\n";
            for (const auto& r : rows) {
                char line[96];
                std::snprintf(line, sizeof line, "%s %.4f %.5f", r.name.c_str(), r.psnr, r.ssim);
                out << line << '\n';
            }
            return 0;
        }
        if (*tune) {
            RenderRequest req;
            req.cloud = load_scene(scene_path);
            req.model = load_checkpoint(checkpoint_path);
            req.reference = read_image(reference_path);
            req.reference_camera = pick_camera(ref_cam_path, ref_cam_index);
            req.novel = {load_cameras(cameras_path).at(0)};
            req.cache = true;
            fs::create_directories(out_dir);
            for (double w : weights) {
                req.weight = w;
                const Image img = render_frames(req).frames.front();
                const std::string path = (fs::path(out_dir) / tune_frame_name(w)).string();
                write_image(path, img);
                out << path << '\n';
            }
            return 0;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace gsw::cli
