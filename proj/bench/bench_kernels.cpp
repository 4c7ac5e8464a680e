// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pclip/kernels.hpp"

using namespace pclip;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> out(n);
  for (auto& v : out) v = g(rng);
  return out;
}

// 1000 classes x 12 combos x 512 dims, 256 images per batch
struct ScoreFixture {
  AnchorSet anchors{1000, 12, 512};
  std::vector<float> images = random_floats(256 * 512, 2);
  std::vector<double> out = std::vector<double>(256 * 1000 * 12);

  ScoreFixture() {
    const auto data = random_floats(anchors.data().size(), 1);
    std::copy(data.begin(), data.end(), anchors.data().begin());
  }
};

void score_serial(benchmark::State& state) {
  ScoreFixture f;
  for (auto _ : state) {
    kernels::score_batch_serial(f.images, f.anchors, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

void score_parallel(benchmark::State& state) {
  ScoreFixture f;
  for (auto _ : state) {
    kernels::score_batch_parallel(f.images, f.anchors, f.out, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

struct MeanFixture {
  EmbeddingMatrix texts;
  kernels::RowGroups groups;
  std::vector<float> out;

  MeanFixture() {
    texts.dim = 512;
    texts.data = random_floats(48000 * 512, 3);
    texts.ids.resize(48000);
    for (std::size_t i = 0; i < texts.ids.size(); ++i) texts.ids[i] = std::to_string(i);
    groups.resize(12000);
    for (std::size_t g = 0; g < groups.size(); ++g) groups[g] = {4 * g, 4 * g + 1, 4 * g + 2, 4 * g + 3};
    out.resize(groups.size() * 512);
  }
};

void mean_serial(benchmark::State& state) {
  MeanFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::mean_normalize_serial(f.texts, f.groups, f.out));
}

void mean_parallel(benchmark::State& state) {
  MeanFixture f;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::mean_normalize_parallel(f.texts, f.groups, f.out, static_cast<int>(state.range(0))));
  }
}

}  // namespace

BENCHMARK(score_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(score_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(mean_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(mean_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
