#include <benchmark/benchmark.h>

#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/network.hpp"
#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/tensor.hpp"

namespace {

using namespace blocksurgeon;

void BM_DeskForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Network net(desk_config(), 1);
  Rng rng(2);
  auto in = tensor({batch, 1, 32, 32});
  for (auto& v : in->data) v = rng.uniform(0.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(nullptr, in));
  }
}
BENCHMARK(BM_DeskForward)->Arg(1)->Arg(8)->Arg(24);

void BM_DeskTrainStep(benchmark::State& state) {
  Network net(desk_config(), 1);
  Rng rng(3);
  auto in = tensor({8, 1, 32, 32});
  auto target = tensor({8, 1, 32, 32});
  for (auto& v : in->data) v = rng.uniform(0.0, 1.0);
  for (auto& v : target->data) v = rng.uniform(0.0, 1.0);
  for (auto _ : state) {
    Tape tape;
    auto loss = mse_loss(&tape, net.forward(&tape, in), target);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_DeskTrainStep);

void BM_BlockForward(benchmark::State& state) {
  const auto kind = static_cast<BlockKind>(state.range(0));
  Block block(kind, 16);
  Rng init(4);
  block.init_params(init);
  Rng rng(5);
  auto in = tensor({8, 16, 16, 16});
  for (auto& v : in->data) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(block.forward(nullptr, in));
  }
}
BENCHMARK(BM_BlockForward)->DenseRange(0, 6);

}  // namespace
