#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

struct DistillOptions {
  int steps = 400;
  double lr = 2e-3;
  int batch = 8;
  double fraction = 0.25;  // metadata recorded on each surrogate
};

// One trained block surrogate for a (slot, kind) pair.
struct Surrogate {
  std::string slot;
  Block block;
  double initial_feature_mse = 0.0;
  double final_feature_mse = 0.0;
  int steps = 0;
  double fraction = 0.0;  // data fraction the subset was built with (metadata)
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;  // prefix-min smoothed step losses

  Surrogate(std::string slot_id, Block b) : slot(std::move(slot_id)), block(std::move(b)) {}
  Surrogate(Surrogate&&) = default;
  Surrogate& operator=(Surrogate&&) = default;
};

class SurrogateSet {
 public:
  using Key = std::pair<std::string, int>;  // (slot, kind index)

  void insert(Surrogate s);
  const Surrogate* find(const std::string& slot, BlockKind kind) const;
  const std::map<Key, Surrogate>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

 private:
  std::map<Key, Surrogate> items_;
};

// Features entering and leaving the named slot during a base-network forward
// pass on this batch.
std::pair<TensorPtr, TensorPtr> capture_features(const Network& base,
                                                 const std::string& slot,
                                                 const TensorPtr& batch);

// Trains a surrogate of `kind` to match the base slot's output features given
// its input features, by MSE. kind == Base is the self-distillation test mode:
// the surrogate starts from the teacher's own weights.
Surrogate distill_block(const Network& base, const std::string& slot,
                        BlockKind kind, const Dataset& subset,
                        const DistillOptions& opts, std::uint64_t seed);

// Every (slot, kind) pair, distributed over workers; per-pair seeds derive
// from the master seed and the pair identity, so scheduling cannot change the
// result.
SurrogateSet distill_all(const Network& base, const Dataset& subset,
                         const std::vector<BlockKind>& kinds,
                         const std::vector<std::string>& slots,
                         const DistillOptions& opts, std::uint64_t master_seed,
                         int workers = 0);

// Base weights everywhere except the substituted slots, no retraining.
Network stitch(const Network& base, const SurrogateSet& surrogates,
               const NetworkConfig& target);

// Directory of `<slot>__<kind>` checkpoints plus one JSON index.
void save_surrogates(const SurrogateSet& set, const std::string& dir);
SurrogateSet load_surrogates(const std::string& dir);

}  // namespace blocksurgeon
