#include <benchmark/benchmark.h>

#include <random>

#include "fapm/pipeline.hpp"
#include "fapm/scorer.hpp"

namespace {

using Image = std::vector<fapm::FeatureTensor>;

Image random_image(std::mt19937_64& rng) {
    std::normal_distribution<float> g;
    Image img{fapm::FeatureTensor(2, 64, 28, 28), fapm::FeatureTensor(3, 128, 14, 14)};
    for (auto& t : img)
        for (auto& v : t.data) v = g(rng);
    return img;
}

struct Setup {
    std::vector<Image> train;
    Image test;

    Setup() {
        std::mt19937_64 rng(9);
        for (int i = 0; i < 20; ++i) train.push_back(random_image(rng));
        test = random_image(rng);
    }
};

const Setup& setup() {
    static const Setup s;
    return s;
}

fapm::SampledBank make_bank(const fapm::EngineConfig& cfg) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < setup().train.size(); ++i) ids.push_back(std::to_string(i));
    return fapm::sample_bank(fapm::build_memory(ids, setup().train, cfg.grid, cfg.view), cfg.sampler);
}

fapm::EngineConfig engine() {
    fapm::EngineConfig cfg;
    cfg.sampler.max_escalations = 0;
    return cfg;
}

// Patch-wise banks at the given grid side; side 1 is the single-bank baseline.
void BM_ScoreImage(benchmark::State& state) {
    auto cfg = engine();
    const auto side = static_cast<std::size_t>(state.range(0));
    cfg.grid = fapm::PatchGrid{side, side};
    const auto bank = make_bank(cfg);
    std::uint64_t comparisons = 0;
    for (auto _ : state) {
        const auto r = fapm::score_image("bench", setup().test, bank, cfg.scorer);
        comparisons = r.comparison_count;
        benchmark::DoNotOptimize(r.image_score);
    }
    state.counters["comparisons"] = static_cast<double>(comparisons);
}
BENCHMARK(BM_ScoreImage)->Arg(1)->Arg(2)->Arg(7)->Unit(benchmark::kMillisecond);

void BM_GaussianBlur(benchmark::State& state) {
    fapm::ScoreGrid g(224, 224, 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u;
    for (auto& v : g.values) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(fapm::gaussian_blur(g, 4.0));
}
BENCHMARK(BM_GaussianBlur)->Unit(benchmark::kMillisecond);

}  // namespace
