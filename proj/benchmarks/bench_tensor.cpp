#include <benchmark/benchmark.h>

#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/tensor.hpp"

namespace {

using namespace blocksurgeon;

TensorPtr random_tensor(std::vector<int> shape, Rng& rng) {
  auto t = tensor(std::move(shape));
  for (auto& v : t->data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(1);
  auto x = random_tensor({8, c, 32, 32}, rng);
  auto k = random_tensor({c, c, 3, 3}, rng);
  auto b = random_tensor({c}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(nullptr, x, k, b, 1, 1));
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(2);
  auto x = random_tensor({8, c, 32, 32}, rng);
  auto k = random_tensor({c, c, 3, 3}, rng);
  auto b = random_tensor({c}, rng);
  auto target = random_tensor({8, c, 32, 32}, rng);
  for (auto _ : state) {
    Tape tape;
    auto out = conv2d(&tape, x, k, b, 1, 1);
    auto loss = mse_loss(&tape, out, target);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8);

void BM_DepthwiseConv(benchmark::State& state) {
  Rng rng(3);
  auto x = random_tensor({8, 16, 32, 32}, rng);
  auto k = random_tensor({16, 1, 3, 3}, rng);
  auto b = random_tensor({16}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(depthwise_conv2d(nullptr, x, k, b, 1));
  }
}
BENCHMARK(BM_DepthwiseConv);

void BM_LayerNorm(benchmark::State& state) {
  Rng rng(4);
  auto x = random_tensor({8, 16, 32, 32}, rng);
  auto gain = tensor({16}, 1.0);
  auto offset = tensor({16});
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer_norm_channels(nullptr, x, gain, offset));
  }
}
BENCHMARK(BM_LayerNorm);

}  // namespace
