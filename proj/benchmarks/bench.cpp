#include <benchmark/benchmark.h>

#include "xflood/model.hpp"
#include "xflood/ops.hpp"
#include "xflood/synthetic.hpp"
#include "xflood/train.hpp"

using namespace xflood;

namespace {

Tensor filled(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = filled({4, 32, 32, c}, 1), k = filled({3, 3, c, c}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(conv2d(g.constant(x), g.constant(k), 1).value().data().data());
  }
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32);

void BM_Fft2dMagnitude(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = filled({1, n, n, 16}, 3);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(fft2d_magnitude(g.constant(x)).value().data().data());
  }
}
BENCHMARK(BM_Fft2dMagnitude)->Arg(16)->Arg(32)->Arg(33);

void BM_ModelForward(benchmark::State& state) {
  const ModelConfig c;
  XFloodNet model(c);
  const auto data = generate_synthetic_dataset(static_cast<std::size_t>(state.range(0)), 1, 0.3, DataShape::from(c));
  const Batch batch = model.make_batch(data);
  for (auto _ : state) {
    Graph g;
    const Context ctx{g, model.params()};
    benchmark::DoNotOptimize(model.forward(ctx, batch).probs.value().data().data());
  }
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig c;
  XFloodNet model(c);
  const auto data = generate_synthetic_dataset(32, 1, 0.3, DataShape::from(c));
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng dropout(7);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, data, idx, dropout));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
