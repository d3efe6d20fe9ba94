#include <benchmark/benchmark.h>

#include <filesystem>

#include "trialforge/rng.hpp"
#include "trialforge/voxgrid.hpp"

namespace {

using namespace trialforge;

void BM_PhiloxU64(benchmark::State& state) {
  RandomStream s(1, "bench");
  for (auto _ : state) benchmark::DoNotOptimize(s.next_u64());
}
BENCHMARK(BM_PhiloxU64);

void BM_NormalDraw(benchmark::State& state) {
  RandomStream s(1, "bench");
  for (auto _ : state) benchmark::DoNotOptimize(s.normal(0.0, 1.0));
}
BENCHMARK(BM_NormalDraw);

void BM_VolumeWriteRead(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  LabelVolume vol({n, n, n}, {1, 1, 1});
  RandomStream s(2, "bench-vol");
  for (auto& v : vol.voxels()) v = static_cast<std::uint8_t>(s.uniform_below(24));
  const auto path = std::filesystem::temp_directory_path() / "bench.itsv";
  for (auto _ : state) {
    write_volume(vol, path);
    benchmark::DoNotOptimize(read_label_volume(path));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(vol.size()) * 2);
}
BENCHMARK(BM_VolumeWriteRead)->Arg(32)->Arg(96);

void BM_LargestComponent(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  LabelVolume vol({n, n, n}, {1, 1, 1});
  RandomStream s(3, "bench-cc");
  for (auto& v : vol.voxels()) v = s.uniform_below(3) == 0;
  for (auto _ : state) benchmark::DoNotOptimize(largest_component(vol));
}
BENCHMARK(BM_LargestComponent)->Arg(48);

}  // namespace

BENCHMARK_MAIN();
