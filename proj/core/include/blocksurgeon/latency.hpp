#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

// Per-slot, per-kind block latencies in milliseconds; the device-feedback
// channel. Frozen slots may carry only the base entry.
struct LatencyProfile {
  std::string device;
  std::map<std::string, std::map<int, double>> slots;  // slot -> kind index -> ms

  double lookup(const std::string& slot, BlockKind kind) const;
  void set(const std::string& slot, BlockKind kind, double ms);
};

// JSON schema: {"device":"<name>","slots":{"<slot>":{"base":53.0,"alt1":15.0,...}}}.
LatencyProfile load_profile(const std::string& path);
void save_profile(const LatencyProfile& profile, const std::string& path);

// Completeness for a topology: every (searchable slot, kind) present, frozen
// slots at least the base entry.
void validate_profile(const LatencyProfile& profile, const NetworkConfig& config,
                      const std::vector<BlockKind>& kinds);

// Stand-in for on-device profiling: additive per-primitive-op cost model over
// the block composition at each slot's width and spatial size, times
// (1 + seeded noise).
LatencyProfile simulate_profile(const NetworkConfig& config, std::uint64_t seed,
                                double noise, int image_size = 32);

// Sum of block-level latencies plus a constant overhead (default 0).
double global_latency(const LatencyProfile& profile, const NetworkConfig& config,
                      double overhead_ms = 0.0);

struct PenaltyScale {
  double alpha = 0.1;   // > 0
  double l_min = 0.0;   // sum of per-slot minimum latencies
  double l_base = 0.0;  // all-base global latency
};

// alpha = max(range of initial accuracy losses, floor); aligns the penalty's
// magnitude with the observed losses.
PenaltyScale make_penalty_scale(const LatencyProfile& profile,
                                const NetworkConfig& config,
                                const std::vector<double>& initial_losses,
                                double floor = 0.1);

// alpha * (latency - l_min) / (l_base - l_min); strictly increasing.
double penalty(const PenaltyScale& scale, double latency_ms);

double speedup(double base_ms, double optimized_ms);

}  // namespace blocksurgeon
