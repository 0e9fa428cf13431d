#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

inline constexpr int kSaliencyBatch = 8;

struct SlotSaliency {
  double grad_norm = 0.0;  // >= 0
  double snip = 0.0;       // >= 0
  double grasp = 0.0;      // signed
  double fisher = 0.0;     // >= 0
  double plain = 0.0;      // signed
  double synflow = 0.0;    // >= 0
};

struct SaliencyReport {
  std::vector<std::string> slot_order;
  std::map<std::string, SlotSaliency> scores;
  std::vector<std::string> consensus;          // best first
  std::map<std::string, int> consensus_rank;   // 1-based
};

// Per-slot proxies on one fixed batch: loss = MSE(forward(blurred), sharp).
std::map<std::string, double> score_grad_norm(const Network& network,
                                              const TensorPtr& batch_in,
                                              const TensorPtr& batch_target);
std::map<std::string, double> score_snip(const Network& network,
                                         const TensorPtr& batch_in,
                                         const TensorPtr& batch_target);
// -sum(theta * (H g)) per slot; H g via finite-difference hvp over the full
// parameter vector.
std::map<std::string, double> score_grasp(const Network& network,
                                          const TensorPtr& batch_in,
                                          const TensorPtr& batch_target);
// Per slot output activation a: mean over batch of sum_c (sum_hw a * dL/da)^2.
std::map<std::string, double> score_fisher(const Network& network,
                                           const TensorPtr& batch_in,
                                           const TensorPtr& batch_target);
std::map<std::string, double> score_plain(const Network& network,
                                          const TensorPtr& batch_in,
                                          const TensorPtr& batch_target);
// Data-free: parameters replaced by |theta|, normalization bypassed and the
// multiplicative gates linearized (they overflow doubles otherwise), all-ones
// input; per slot sum(theta * dR/dtheta) with R = sum of the output.
std::map<std::string, double> score_synflow(const Network& network,
                                            int image_size = 32);

struct SaliencyRanking {
  // Proxy name -> slots best-first. GraSP and Plain rank by |score|.
  std::map<std::string, std::vector<std::string>> per_proxy;
  std::vector<std::string> consensus;  // Borda count, ties by slot order
};

SaliencyRanking rank_blocks(const SaliencyReport& report);

// Top-k consensus slots to freeze (default k = 1 upstream).
std::set<std::string> select_frozen(const SaliencyRanking& ranking, int k);

// Ground-truth oracle: validation PSNR drop per slot when that slot's blocks
// are replaced by the identity.
std::map<std::string, double> ablation_sensitivity(const Network& network,
                                                   const Dataset& dataset);

// Full report with consensus, batch drawn from the train split by seed.
SaliencyReport compute_saliency(const Network& network, const Dataset& dataset,
                                std::uint64_t seed);

// Rank correlation with average ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

void write_saliency_csv(const SaliencyReport& report, const std::string& path);

}  // namespace blocksurgeon
