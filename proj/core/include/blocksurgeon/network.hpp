#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/tensor.hpp"

namespace blocksurgeon {

// One base block plus six hardware-friendly alternatives. All kinds map
// BCHW -> BCHW at the same channel count and behave as the identity while
// their final projection is zero.
enum class BlockKind {
  Base = 0,  // norm -> 1x1 expand -> 3x3 depthwise -> gate -> channel attention -> 1x1
  Alt1,      // 3x3 conv -> relu -> 1x1 projection
  Alt2,      // depthwise-separable: 3x3 depthwise -> 1x1 pointwise projection
  Alt3,      // Base without the channel-attention branch
  Alt4,      // Base with attention replaced by a learned per-channel scale
  Alt5,      // single 1x1 pointwise projection
  Alt6,      // learned scalar gate on the identity + 1x1 conv correction
};

inline constexpr int kNumBlockKinds = 7;

const char* to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& name);
// The six substitution candidates (everything except Base).
std::vector<BlockKind> alternative_kinds();

struct SlotSpec {
  std::string id;
  int channels = 0;
  bool frozen = false;
  BlockKind kind = BlockKind::Base;
  int repeat = 1;  // stacked blocks sharing the slot

  bool operator==(const SlotSpec&) const = default;
};

// Declarative description of the stitched U-shaped network: slots are ordered
// enc0..enc{E-1}, mid, dec{E-1}..dec0; downsampling follows each encoder slot
// and upsampling precedes each decoder slot, doubling/halving channels.
struct NetworkConfig {
  std::vector<SlotSpec> slots;
  int width = 8;
  int in_channels = 1;

  int num_encoders() const { return static_cast<int>(slots.size()) / 2; }
  const SlotSpec* find(const std::string& slot_id) const;
  std::vector<std::string> searchable_slots() const;  // non-frozen, slot order
  void validate() const;

  // Canonical JSON; serialize(parse(serialize(c))) is byte-identical.
  std::string to_json() const;
  static NetworkConfig from_json_text(const std::string& text);

  bool operator==(const NetworkConfig&) const = default;
};

// Desk preset: 2 encoders + 1 middle + 2 decoders, width 8.
NetworkConfig desk_config(int width = 8, int in_channels = 1);
// Larger preset: 4 encoders + 1 middle + 4 decoders with a 28-deep enc3 slot.
NetworkConfig paper_shape_config(int width = 8, int in_channels = 1);

struct NamedTensor {
  std::string name;
  TensorPtr value;
};

// A single residual unit of one kind at a fixed channel count.
class Block {
 public:
  Block(BlockKind kind, int channels);

  // Tensors are shared pointers; copies must be explicit deep clones.
  Block(const Block&) = delete;
  Block& operator=(const Block&) = delete;
  Block(Block&&) = default;
  Block& operator=(Block&&) = default;

  void init_params(Rng& rng);
  // linearize_products swaps the gate for a channel mean and skips the
  // attention multiply; used by positivity-preserving scoring passes.
  TensorPtr forward(Tape* tape, const TensorPtr& x, bool bypass_norm = false,
                    bool linearize_products = false) const;

  BlockKind kind() const { return kind_; }
  int channels() const { return channels_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  Block clone() const;

 private:
  TensorPtr p(const char* name) const;

  BlockKind kind_;
  int channels_;
  std::vector<NamedTensor> params_;
};

// Captured per-slot boundary features: slot id -> (input, output).
using FeatureCapture = std::map<std::string, std::pair<TensorPtr, TensorPtr>>;

struct ForwardOptions {
  Tape* tape = nullptr;
  bool bypass_norm = false;          // run normalization layers as identity
  bool linearize_products = false;   // gate -> channel mean, no attention mul
  std::string bypass_slot;           // replace this slot's blocks by identity
  FeatureCapture* capture = nullptr;
};

class Network {
 public:
  Network(NetworkConfig config, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const NetworkConfig& config() const { return config_; }

  TensorPtr forward(Tape* tape, const TensorPtr& batch) const {
    ForwardOptions opts;
    opts.tape = tape;
    return forward(batch, opts);
  }
  TensorPtr forward(const TensorPtr& batch, const ForwardOptions& opts) const;

  // Live references, structural order; names are "<component>.<param>" with
  // slot params grouped contiguously as "<slot>.<block#>.<param>".
  std::vector<NamedTensor> parameters() const;
  std::vector<double> flatten_parameters() const;
  void set_parameters_flat(const std::vector<double>& theta);
  int parameter_count() const;

  // Half-open [begin, end) coordinate range of each slot in the flat vector.
  std::map<std::string, std::pair<int, int>> slot_param_ranges() const;
  // Per-slot parameter counts; parameters outside any slot are keyed "".
  std::map<std::string, int> parameter_census() const;

  const std::vector<Block>& slot_blocks(const std::string& slot_id) const;
  void replace_slot_blocks(const std::string& slot_id, std::vector<Block> blocks);

  Network clone() const;

 private:
  void register_params();

  NetworkConfig config_;
  std::vector<std::vector<Block>> slot_blocks_;  // parallel to config_.slots

  // Shared components.
  TensorPtr stem_w_, stem_b_;
  std::vector<TensorPtr> down_w_, down_b_;  // per encoder stage
  std::vector<TensorPtr> up_w_, up_b_;      // per decoder stage
  TensorPtr end_w_, end_b_;

  std::vector<NamedTensor> param_index_;  // cached registration order
};

}  // namespace blocksurgeon
