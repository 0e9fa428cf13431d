#include "blocksurgeon/training.hpp"

#include <cmath>
#include <utility>

#include "blocksurgeon/metrics.hpp"
#include "blocksurgeon/rng.hpp"

namespace blocksurgeon {

Adam::Adam(std::vector<NamedTensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& nt : params_) {
    m_.emplace_back(nt.value->data.size(), 0.0);
    v_.emplace_back(nt.value->data.size(), 0.0);
  }
}

void Adam::step(const Gradients& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const std::vector<double> g = grads.get(params_[p].value);
    auto& m = m_[p];
    auto& v = v_[p];
    auto& data = params_[p].value->data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      data[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

namespace {

TrainReport train_loop(Network& network, const Dataset& dataset, int epochs,
                       double lr, std::uint64_t seed) {
  if (epochs < 0) throw ValueError("epochs must be >= 0");
  TrainReport report;
  const std::vector<int> train_idx = dataset.train_indices();
  if (train_idx.empty()) throw ValueError("dataset has no training pairs");

  Adam opt(network.parameters(), lr);
  Rng rng(seed);
  std::vector<int> order = train_idx;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = rng.uniform_int(i + 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += kTrainBatchSize) {
      const std::size_t stop = std::min(order.size(), start + kTrainBatchSize);
      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
      Tape tape;
      TensorPtr pred = network.forward(&tape, dataset.batch_blurred(batch));
      TensorPtr loss = mse_loss(&tape, pred, dataset.batch_sharp(batch));
      const double loss_val = loss->data[0];
      if (!std::isfinite(loss_val)) {
        throw DivergenceError("training loss became non-finite at epoch " +
                              std::to_string(epoch + 1));
      }
      opt.step(tape.backward(loss));
      epoch_loss += loss_val;
      ++batches;
    }
    report.epoch_losses.push_back(epoch_loss / batches);
  }

  report.val_psnr_db = validation_psnr(network, dataset);
  const std::vector<int> val_idx = dataset.val_indices();
  report.degraded_psnr_db =
      batch_mean_psnr(*dataset.batch_blurred(val_idx), *dataset.batch_sharp(val_idx));
  return report;
}

}  // namespace

TrainReport train_base(Network& network, const Dataset& dataset, int epochs,
                       double lr, std::uint64_t seed) {
  return train_loop(network, dataset, epochs, lr, seed);
}

TrainReport finetune(Network& network, const Dataset& dataset, int epochs,
                     double lr, std::uint64_t seed) {
  return train_loop(network, dataset, epochs, lr, seed);
}

double validation_psnr(const Network& network, const Dataset& dataset) {
  const std::vector<int> val_idx = dataset.val_indices();
  if (val_idx.empty()) throw ValueError("dataset has no validation pairs");
  TensorPtr restored = network.forward(nullptr, dataset.batch_blurred(val_idx));
  return batch_mean_psnr(*restored, *dataset.batch_sharp(val_idx));
}

}  // namespace blocksurgeon
