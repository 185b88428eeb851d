#include "gsw/appearance.hpp"
#include "gsw/dataio.hpp"
#include "gsw/losses.hpp"
#include "gsw/pipeline.hpp"
#include "gsw/rasterizer.hpp"

#include <benchmark/benchmark.h>

#include <map>

using namespace gsw;

namespace {

struct Fixture {
    SyntheticDataset data;
    AppearanceModel model;
    TrainView ref;

    explicit Fixture(int points) {
        DatasetSpec spec;
        spec.n_points = points;
        data = generate_dataset(spec, 1);
        model = AppearanceModel(AppearanceOptions{}, 2);
        ref = data.train_views()[data.reference_view()];
        for (auto& p : data.init_cloud.points) p.opacity_logit = logit(0.6);
    }
};

const Fixture& fixture(int points) {
    static std::map<int, Fixture> cache;
    auto it = cache.find(points);
    if (it == cache.end()) it = cache.emplace(points, Fixture(points)).first;
    return it->second;
}

}  // namespace

static void BM_RenderForward(benchmark::State& state) {
    const Fixture& f = fixture(static_cast<int>(state.range(0)));
    const RenderInput in = make_render_input(f.data.ground_truth, f.data.cameras[1], f.data.colors, Vec3::Zero());
    for (auto _ : state) benchmark::DoNotOptimize(render(in));
}
BENCHMARK(BM_RenderForward)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_RenderBackward(benchmark::State& state) {
    const Fixture& f = fixture(static_cast<int>(state.range(0)));
    const RenderInput in = make_render_input(f.data.ground_truth, f.data.cameras[1], f.data.colors, Vec3::Zero());
    const RenderOutput out = render(in);
    const Image up(in.height, in.width, 0.01);
    for (auto _ : state) benchmark::DoNotOptimize(render_backward(in, out, up));
}
BENCHMARK(BM_RenderBackward)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_Extractor(benchmark::State& state) {
    const Fixture& f = fixture(2000);
    for (auto _ : state) benchmark::DoNotOptimize(extract_features(f.ref.image, f.model.extractor));
}
BENCHMARK(BM_Extractor)->Unit(benchmark::kMillisecond);

static void BM_FuseAllPoints(benchmark::State& state) {
    const Fixture& f = fixture(static_cast<int>(state.range(0)));
    const FeatureStack s = extract_features(f.ref.image, f.model.extractor);
    for (auto _ : state)
        benchmark::DoNotOptimize(cache_appearance(f.data.init_cloud, s, &f.ref.camera, f.model.nets, 1.0));
}
BENCHMARK(BM_FuseAllPoints)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_FrameUncached(benchmark::State& state) {
    const Fixture& f = fixture(2000);
    const Camera& novel = f.data.cameras[7];
    for (auto _ : state)
        benchmark::DoNotOptimize(
            render_uncached(f.data.init_cloud, f.model, f.ref.image, &f.ref.camera, novel, 1.0, Vec3::Zero()));
}
BENCHMARK(BM_FrameUncached)->Unit(benchmark::kMillisecond);

static void BM_FrameCached(benchmark::State& state) {
    const Fixture& f = fixture(2000);
    const Camera& novel = f.data.cameras[7];
    const FeatureStack s = extract_features(f.ref.image, f.model.extractor);
    const RowMatrix af = cache_appearance(f.data.init_cloud, s, &f.ref.camera, f.model.nets, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(render_cached(f.data.init_cloud, f.model.nets, af, novel, Vec3::Zero()));
}
BENCHMARK(BM_FrameCached)->Unit(benchmark::kMillisecond);

static void BM_ImageLossBackward(benchmark::State& state) {
    const Fixture& f = fixture(2000);
    const Image& a = f.ref.image;
    const Image b(a.height, a.width, 0.4);
    const Tensor vm(1, a.height, a.width, 0.7);
    for (auto _ : state) benchmark::DoNotOptimize(image_loss_backward(a, b, vm, LossWeights{}));
}
BENCHMARK(BM_ImageLossBackward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
