#include "blocksurgeon/latency.hpp"

#include <cmath>

#include "blocksurgeon/rng.hpp"
#include "io_util.hpp"
#include "json.hpp"

namespace blocksurgeon {

double LatencyProfile::lookup(const std::string& slot, BlockKind kind) const {
  auto sit = slots.find(slot);
  if (sit == slots.end()) {
    throw MissingEntryError("profile has no slot '" + slot + "'");
  }
  auto kit = sit->second.find(static_cast<int>(kind));
  if (kit == sit->second.end()) {
    throw MissingEntryError("profile has no entry for (" + slot + ", " +
                            to_string(kind) + ")");
  }
  return kit->second;
}

void LatencyProfile::set(const std::string& slot, BlockKind kind, double ms) {
  slots[slot][static_cast<int>(kind)] = ms;
}

LatencyProfile load_profile(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("latency profile is not valid JSON: ") + e.what());
  }
  LatencyProfile p;
  try {
    p.device = j.at("device").get<std::string>();
    for (const auto& [slot, entries] : j.at("slots").items()) {
      for (const auto& [kind_name, ms] : entries.items()) {
        const BlockKind kind = block_kind_from_string(kind_name);
        const double v = ms.get<double>();
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw ValueError("latency for (" + slot + ", " + kind_name +
                           ") must be strictly positive and finite, got " +
                           std::to_string(v));
        }
        p.set(slot, kind, v);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("latency profile field error: ") + e.what());
  }
  if (p.slots.empty()) throw ParseError("latency profile has no slots");
  return p;
}

void save_profile(const LatencyProfile& profile, const std::string& path) {
  nlohmann::ordered_json j;
  j["device"] = profile.device;
  j["slots"] = nlohmann::ordered_json::object();
  for (const auto& [slot, entries] : profile.slots) {
    nlohmann::ordered_json e;
    for (const auto& [kind, ms] : entries) {
      e[to_string(static_cast<BlockKind>(kind))] = ms;
    }
    j["slots"][slot] = std::move(e);
  }
  io::write_file(path, j.dump(2) + "\n");
}

void validate_profile(const LatencyProfile& profile, const NetworkConfig& config,
                      const std::vector<BlockKind>& kinds) {
  for (const auto& slot : config.slots) {
    profile.lookup(slot.id, BlockKind::Base);
    if (slot.frozen) continue;
    for (BlockKind kind : kinds) profile.lookup(slot.id, kind);
  }
}

namespace {

// NPU-flavored cost model: dense MACs are cheap on wide MAC arrays, while
// normalization, pooling and broadcast scaling are memory-bound and dominate.
// Work units per slot-spatial element below; total is work * HW * kappa ms.
constexpr double kMsPerUnit = 1e-5;
constexpr double kDenseMac = 0.2;
constexpr double kDepthwiseMac = 1.0;
constexpr double kLayerNorm = 80.0;
constexpr double kGlobalPool = 60.0;
constexpr double kBroadcastMul = 60.0;
constexpr double kGate = 16.0;
constexpr double kChannelScale = 16.0;
constexpr double kCheap = 4.0;  // relu, residual add, scalar gate

double block_work_per_pixel(BlockKind kind, int c) {
  const double c2 = static_cast<double>(c) * c;
  switch (kind) {
    case BlockKind::Base:
      // norm, 1x1 expand, 3x3 dw on 2C, gate, pool, attention apply, 1x1 proj, add
      return kLayerNorm * c + kDenseMac * 2.0 * c2 + kDepthwiseMac * 18.0 * c +
             kGate * c + kGlobalPool * c + kBroadcastMul * c + kDenseMac * c2 +
             kCheap * c;
    case BlockKind::Alt1:
      return kDenseMac * 9.0 * c2 + kCheap * c + kDenseMac * c2 + kCheap * c;
    case BlockKind::Alt2:
      return kDepthwiseMac * 9.0 * c + kDenseMac * c2 + kCheap * c;
    case BlockKind::Alt3:
      return kLayerNorm * c + kDenseMac * 2.0 * c2 + kDepthwiseMac * 18.0 * c +
             kGate * c + kDenseMac * c2 + kCheap * c;
    case BlockKind::Alt4:
      return kLayerNorm * c + kDenseMac * 2.0 * c2 + kDepthwiseMac * 18.0 * c +
             kGate * c + kChannelScale * c + kDenseMac * c2 + kCheap * c;
    case BlockKind::Alt5:
      return kDenseMac * c2 + kCheap * c;
    case BlockKind::Alt6:
      return kCheap * c + kDenseMac * c2 + kCheap * c;
  }
  throw ValueError("unreachable block kind");
}

}  // namespace

LatencyProfile simulate_profile(const NetworkConfig& config, std::uint64_t seed,
                                double noise, int image_size) {
  config.validate();
  if (noise < 0.0 || noise >= 1.0) {
    throw ValueError("simulated profile noise must be in [0, 1)");
  }
  LatencyProfile p;
  p.device = "simulated";
  Rng rng(seed);
  const int e = config.num_encoders();
  for (std::size_t i = 0; i < config.slots.size(); ++i) {
    const SlotSpec& slot = config.slots[i];
    const int idx = static_cast<int>(i);
    const int stage = idx < e ? idx : (idx == e ? e : 2 * e - idx);
    const int hw = (image_size >> stage) * (image_size >> stage);
    for (int k = 0; k < kNumBlockKinds; ++k) {
      const BlockKind kind = static_cast<BlockKind>(k);
      // Noise is drawn in a fixed slot/kind order so the stream is stable.
      const double u = rng.uniform(-noise, noise);
      if (slot.frozen && kind != BlockKind::Base) continue;
      const double work =
          block_work_per_pixel(kind, slot.channels) * hw * slot.repeat;
      p.set(slot.id, kind, work * kMsPerUnit * (1.0 + u));
    }
  }
  return p;
}

double global_latency(const LatencyProfile& profile, const NetworkConfig& config,
                      double overhead_ms) {
  double total = overhead_ms;
  for (const auto& slot : config.slots) total += profile.lookup(slot.id, slot.kind);
  return total;
}

PenaltyScale make_penalty_scale(const LatencyProfile& profile,
                                const NetworkConfig& config,
                                const std::vector<double>& initial_losses,
                                double floor) {
  if (floor <= 0.0) throw ValueError("penalty floor must be > 0");
  PenaltyScale scale;
  scale.l_min = 0.0;
  for (const auto& slot : config.slots) {
    const auto& entries = profile.slots.at(slot.id);
    double best = entries.begin()->second;
    for (const auto& [kind, ms] : entries) best = std::min(best, ms);
    scale.l_min += best;
  }
  NetworkConfig all_base = config;
  for (auto& s : all_base.slots) s.kind = BlockKind::Base;
  scale.l_base = global_latency(profile, all_base);

  double range = 0.0;
  if (!initial_losses.empty()) {
    double lo = initial_losses[0], hi = initial_losses[0];
    for (double v : initial_losses) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    range = hi - lo;
  }
  scale.alpha = std::max(range, floor);
  return scale;
}

double penalty(const PenaltyScale& scale, double latency_ms) {
  const double span = scale.l_base - scale.l_min;
  if (span <= 0.0) return 0.0;  // degenerate profile: no latency signal
  return scale.alpha * (latency_ms - scale.l_min) / span;
}

double speedup(double base_ms, double optimized_ms) {
  if (!(optimized_ms > 0.0)) throw ValueError("speedup needs optimized latency > 0");
  return base_ms / optimized_ms;
}

}  // namespace blocksurgeon
