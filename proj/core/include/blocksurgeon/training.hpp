#pragma once

#include <cstdint>
#include <vector>

#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

inline constexpr int kTrainBatchSize = 8;

// Adaptive-moment gradient descent over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(const Gradients& grads);

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainReport {
  std::vector<double> epoch_losses;  // mean training loss per epoch
  double val_psnr_db = 0.0;          // restored vs sharp on the validation split
  double degraded_psnr_db = 0.0;     // blurred vs sharp on the validation split
};

// Trains in place on the train split; throws DivergenceError (naming the
// epoch) when the loss goes non-finite.
TrainReport train_base(Network& network, const Dataset& dataset, int epochs,
                       double lr, std::uint64_t seed);

// Same loop, intended for stitched networks; all slots trainable.
TrainReport finetune(Network& network, const Dataset& dataset, int epochs,
                     double lr, std::uint64_t seed);

// Mean per-image PSNR of forward(blurred) vs sharp on the validation split.
double validation_psnr(const Network& network, const Dataset& dataset);

}  // namespace blocksurgeon
