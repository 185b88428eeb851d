#pragma once

#include "run_config.hpp"

#include "gsw/appearance.hpp"
#include "gsw/camera.hpp"
#include "gsw/scene.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gsw::cli {

/// Entry point shared by the executable and tests. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage or config error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct RenderRequest {
    GaussianCloud cloud;
    AppearanceModel model;
    Image reference;
    std::optional<Camera> reference_camera;
    std::vector<Camera> novel;
    double weight = 1.0;
    bool cache = false;
    bool transfer = false;
    Vec3 background = Vec3::Zero();
};

struct RenderResult {
    std::vector<Image> frames;
    std::vector<double> frame_seconds;
};

/// Renders every novel camera. With `cache` the appearance features are computed
/// once; otherwise the full pipeline runs per frame.
RenderResult render_frames(const RenderRequest& request);

struct EvalRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Per test view plus a final "mean" row, rendered from the clean reference view.
std::vector<EvalRow> evaluate(const GaussianCloud& cloud, const AppearanceModel& model,
                              const SyntheticDataset& data, const Vec3& background = Vec3::Zero());

/// File name of a tuning frame, encoding the weight.
std::string tune_frame_name(double weight);

}  // namespace gsw::cli
