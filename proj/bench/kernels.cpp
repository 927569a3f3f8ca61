// Parallel kernels against their serial references.
#include <random>

#include <benchmark/benchmark.h>

#include "drowsy/cascade.hpp"
#include "drowsy/features.hpp"
#include "drowsy/synth.hpp"
#include "drowsy/tracker.hpp"

using namespace drowsy;

namespace {

GrayImage noise(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GrayImage img(w, h);
    for (auto& v : img.data()) {
        v = static_cast<std::uint8_t>(rng() & 0xFF);
    }
    return img;
}

GrayImage scene() {
    synth::SceneSpec s;
    s.noise = 4.0;
    return synth::render_frame(s, 0).image;
}

void BM_ncc_match(benchmark::State& st) {
    const auto img = noise(200, 150, 1);
    const auto tpl = crop(img, {90, 70, 30, 20});
    const Rect roi{40, 30, static_cast<int>(st.range(0)), static_cast<int>(st.range(0)) * 2 / 3};
    for (auto _ : st) {
        benchmark::DoNotOptimize(ncc_match(img, roi, tpl));
    }
}
BENCHMARK(BM_ncc_match)->Arg(60)->Arg(120);

void BM_ncc_match_serial(benchmark::State& st) {
    const auto img = noise(200, 150, 1);
    const auto tpl = crop(img, {90, 70, 30, 20});
    const Rect roi{40, 30, static_cast<int>(st.range(0)), static_cast<int>(st.range(0)) * 2 / 3};
    for (auto _ : st) {
        benchmark::DoNotOptimize(ncc_match_serial(img, roi, tpl));
    }
}
BENCHMARK(BM_ncc_match_serial)->Arg(60)->Arg(120);

void BM_scan_windows(benchmark::State& st) {
    const Cascade c = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    const IntegralImage ii(scene());
    const DetectParams p{.min_size = 60};
    for (auto _ : st) {
        benchmark::DoNotOptimize(scan_windows(c, ii, p));
    }
}
BENCHMARK(BM_scan_windows)->Unit(benchmark::kMillisecond);

void BM_scan_windows_serial(benchmark::State& st) {
    const Cascade c = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    const IntegralImage ii(scene());
    const DetectParams p{.min_size = 60};
    for (auto _ : st) {
        benchmark::DoNotOptimize(scan_windows_serial(c, ii, p));
    }
}
BENCHMARK(BM_scan_windows_serial)->Unit(benchmark::kMillisecond);

void BM_extract_batch(benchmark::State& st) {
    std::vector<EyePatch> patches;
    for (std::uint64_t i = 0; i < 64; ++i) {
        patches.push_back(preprocess(synth::render_eye_sample(i % 2 == 0, i, 6.0)));
    }
    const auto kind = st.range(0) == 0 ? DescriptorKind::hog : DescriptorKind::lbp;
    for (auto _ : st) {
        benchmark::DoNotOptimize(extract_batch(patches, kind));
    }
}
BENCHMARK(BM_extract_batch)->Arg(0)->Arg(1);

void BM_extract_loop(benchmark::State& st) {
    std::vector<EyePatch> patches;
    for (std::uint64_t i = 0; i < 64; ++i) {
        patches.push_back(preprocess(synth::render_eye_sample(i % 2 == 0, i, 6.0)));
    }
    const auto kind = st.range(0) == 0 ? DescriptorKind::hog : DescriptorKind::lbp;
    for (auto _ : st) {
        for (const auto& p : patches) {
            benchmark::DoNotOptimize(extract(p, kind));
        }
    }
}
BENCHMARK(BM_extract_loop)->Arg(0)->Arg(1);

void BM_integral(benchmark::State& st) {
    const auto img = noise(640, 480, 2);
    for (auto _ : st) {
        benchmark::DoNotOptimize(IntegralImage(img));
    }
}
BENCHMARK(BM_integral);

} // namespace

BENCHMARK_MAIN();
