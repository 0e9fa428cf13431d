#include "blocksurgeon/network.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace blocksurgeon {

namespace {

constexpr const char* kKindNames[kNumBlockKinds] = {
    "base", "alt1", "alt2", "alt3", "alt4", "alt5", "alt6"};

TensorPtr conv_weight(Rng& rng, int out_c, int in_c, int k) {
  auto w = tensor({out_c, in_c, k, k});
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(in_c * k * k));
  for (auto& v : w->data) v = rng.normal() * std_dev;
  return w;
}

TensorPtr dw_weight(Rng& rng, int c, int k) {
  auto w = tensor({c, 1, k, k});
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(k * k));
  for (auto& v : w->data) v = rng.normal() * std_dev;
  return w;
}

}  // namespace

const char* to_string(BlockKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

BlockKind block_kind_from_string(const std::string& name) {
  for (int i = 0; i < kNumBlockKinds; ++i) {
    if (name == kKindNames[i]) return static_cast<BlockKind>(i);
  }
  throw ParseError("unknown block kind '" + name + "'");
}

std::vector<BlockKind> alternative_kinds() {
  return {BlockKind::Alt1, BlockKind::Alt2, BlockKind::Alt3,
          BlockKind::Alt4, BlockKind::Alt5, BlockKind::Alt6};
}

const SlotSpec* NetworkConfig::find(const std::string& slot_id) const {
  for (const auto& s : slots) {
    if (s.id == slot_id) return &s;
  }
  return nullptr;
}

std::vector<std::string> NetworkConfig::searchable_slots() const {
  std::vector<std::string> out;
  for (const auto& s : slots) {
    if (!s.frozen) out.push_back(s.id);
  }
  return out;
}

void NetworkConfig::validate() const {
  if (width < 1) throw ValueError("config width must be >= 1");
  if (in_channels < 1) throw ValueError("config in_channels must be >= 1");
  const int n = static_cast<int>(slots.size());
  if (n < 3 || n % 2 == 0) {
    throw ValueError("config needs an odd slot count >= 3 (encoders + mid + decoders), got " +
                     std::to_string(n));
  }
  const int e = n / 2;
  for (int i = 0; i < n; ++i) {
    const SlotSpec& s = slots[static_cast<std::size_t>(i)];
    const int stage = i < e ? i : (i == e ? e : 2 * e - i);
    const std::string expect =
        i < e ? "enc" + std::to_string(i)
              : (i == e ? "mid" : "dec" + std::to_string(2 * e - i));
    if (s.id != expect) {
      throw ValueError("slot " + std::to_string(i) + " must be named '" + expect +
                       "', got '" + s.id + "'");
    }
    const int want_channels = width << stage;
    if (s.channels != want_channels) {
      throw ValueError("slot '" + s.id + "' must have " + std::to_string(want_channels) +
                       " channels, got " + std::to_string(s.channels));
    }
    if (s.repeat < 1) throw ValueError("slot '" + s.id + "' repeat must be >= 1");
    if (s.frozen && s.kind != BlockKind::Base) {
      throw ValueError("frozen slot '" + s.id + "' must keep the base kind");
    }
  }
}

std::string NetworkConfig::to_json() const {
  nlohmann::ordered_json j;
  j["slots"] = nlohmann::ordered_json::array();
  for (const auto& s : slots) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["channels"] = s.channels;
    js["frozen"] = s.frozen;
    js["kind"] = to_string(s.kind);
    if (s.repeat != 1) js["repeat"] = s.repeat;
    j["slots"].push_back(std::move(js));
  }
  j["width"] = width;
  j["in_channels"] = in_channels;
  return j.dump();
}

NetworkConfig NetworkConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network config is not valid JSON: ") + e.what());
  }
  NetworkConfig c;
  try {
    c.width = j.at("width").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    for (const auto& js : j.at("slots")) {
      SlotSpec s;
      s.id = js.at("id").get<std::string>();
      s.channels = js.at("channels").get<int>();
      s.frozen = js.at("frozen").get<bool>();
      s.kind = block_kind_from_string(js.at("kind").get<std::string>());
      s.repeat = js.value("repeat", 1);
      c.slots.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network config field error: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

NetworkConfig shaped_config(int encoders, int width, int in_channels) {
  NetworkConfig c;
  c.width = width;
  c.in_channels = in_channels;
  for (int i = 0; i < encoders; ++i) {
    c.slots.push_back({"enc" + std::to_string(i), width << i, false, BlockKind::Base, 1});
  }
  c.slots.push_back({"mid", width << encoders, false, BlockKind::Base, 1});
  for (int i = encoders - 1; i >= 0; --i) {
    c.slots.push_back({"dec" + std::to_string(i), width << i, false, BlockKind::Base, 1});
  }
  return c;
}

}  // namespace

NetworkConfig desk_config(int width, int in_channels) {
  return shaped_config(2, width, in_channels);
}

NetworkConfig paper_shape_config(int width, int in_channels) {
  NetworkConfig c = shaped_config(4, width, in_channels);
  for (auto& s : c.slots) {
    if (s.id == "enc3") s.repeat = 28;
  }
  return c;
}

Block::Block(BlockKind kind, int channels) : kind_(kind), channels_(channels) {
  if (channels < 1) throw ValueError("block channels must be >= 1");
  const int c = channels;
  auto addp = [this](const char* name, TensorPtr t) {
    params_.push_back({name, std::move(t)});
  };
  switch (kind_) {
    case BlockKind::Base:
      addp("norm.gain", tensor({c}, 1.0));
      addp("norm.offset", tensor({c}));
      addp("expand.w", tensor({2 * c, c, 1, 1}));
      addp("expand.b", tensor({2 * c}));
      addp("dw.w", tensor({2 * c, 1, 3, 3}));
      addp("dw.b", tensor({2 * c}));
      addp("attn.w", tensor({c, c, 1, 1}));
      addp("attn.b", tensor({c}));
      break;
    case BlockKind::Alt1:
      addp("conv.w", tensor({c, c, 3, 3}));
      addp("conv.b", tensor({c}));
      break;
    case BlockKind::Alt2:
      addp("dw.w", tensor({c, 1, 3, 3}));
      addp("dw.b", tensor({c}));
      break;
    case BlockKind::Alt3:
      addp("norm.gain", tensor({c}, 1.0));
      addp("norm.offset", tensor({c}));
      addp("expand.w", tensor({2 * c, c, 1, 1}));
      addp("expand.b", tensor({2 * c}));
      addp("dw.w", tensor({2 * c, 1, 3, 3}));
      addp("dw.b", tensor({2 * c}));
      break;
    case BlockKind::Alt4:
      addp("norm.gain", tensor({c}, 1.0));
      addp("norm.offset", tensor({c}));
      addp("expand.w", tensor({2 * c, c, 1, 1}));
      addp("expand.b", tensor({2 * c}));
      addp("dw.w", tensor({2 * c, 1, 3, 3}));
      addp("dw.b", tensor({2 * c}));
      addp("chscale", tensor({1, c, 1, 1}, 1.0));
      break;
    case BlockKind::Alt5:
      break;
    case BlockKind::Alt6:
      addp("gate", tensor({1}, 1.0));
      break;
  }
  // Every kind ends in a zero-initialized 1x1 projection so a fresh block is
  // the identity.
  addp("proj.w", tensor({c, c, 1, 1}));
  addp("proj.b", tensor({c}));
}

TensorPtr Block::p(const char* name) const {
  for (const auto& nt : params_) {
    if (nt.name == name) return nt.value;
  }
  throw ValueError("block has no parameter '" + std::string(name) + "'");
}

void Block::init_params(Rng& rng) {
  const int c = channels_;
  switch (kind_) {
    case BlockKind::Base:
      p("expand.w")->data = conv_weight(rng, 2 * c, c, 1)->data;
      p("dw.w")->data = dw_weight(rng, 2 * c, 3)->data;
      p("attn.w")->data = conv_weight(rng, c, c, 1)->data;
      break;
    case BlockKind::Alt1:
      p("conv.w")->data = conv_weight(rng, c, c, 3)->data;
      break;
    case BlockKind::Alt2:
      p("dw.w")->data = dw_weight(rng, c, 3)->data;
      break;
    case BlockKind::Alt3:
    case BlockKind::Alt4:
      p("expand.w")->data = conv_weight(rng, 2 * c, c, 1)->data;
      p("dw.w")->data = dw_weight(rng, 2 * c, 3)->data;
      break;
    case BlockKind::Alt5:
    case BlockKind::Alt6:
      break;
  }
  // Projections stay zero; gains/scales stay at their identity values.
}

TensorPtr Block::forward(Tape* tape, const TensorPtr& x, bool bypass_norm,
                         bool linearize_products) const {
  auto gate = [&](const TensorPtr& t) {
    return linearize_products ? channel_halves_mean(tape, t) : simple_gate(tape, t);
  };
  TensorPtr y = x;
  switch (kind_) {
    case BlockKind::Base: {
      if (!bypass_norm) y = layer_norm_channels(tape, y, p("norm.gain"), p("norm.offset"));
      y = conv2d(tape, y, p("expand.w"), p("expand.b"));
      y = depthwise_conv2d(tape, y, p("dw.w"), p("dw.b"), 1);
      y = gate(y);
      if (!linearize_products) {
        TensorPtr att = global_avg_pool(tape, y);
        att = conv2d(tape, att, p("attn.w"), p("attn.b"));
        y = mul(tape, y, att);
      }
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt1: {
      y = conv2d(tape, y, p("conv.w"), p("conv.b"), 1, 1);
      y = relu(tape, y);
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt2: {
      y = depthwise_conv2d(tape, y, p("dw.w"), p("dw.b"), 1);
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt3: {
      if (!bypass_norm) y = layer_norm_channels(tape, y, p("norm.gain"), p("norm.offset"));
      y = conv2d(tape, y, p("expand.w"), p("expand.b"));
      y = depthwise_conv2d(tape, y, p("dw.w"), p("dw.b"), 1);
      y = gate(y);
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt4: {
      if (!bypass_norm) y = layer_norm_channels(tape, y, p("norm.gain"), p("norm.offset"));
      y = conv2d(tape, y, p("expand.w"), p("expand.b"));
      y = depthwise_conv2d(tape, y, p("dw.w"), p("dw.b"), 1);
      y = gate(y);
      y = mul(tape, y, p("chscale"));
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt5: {
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, x, y);
    }
    case BlockKind::Alt6: {
      TensorPtr gated = mul(tape, x, p("gate"));
      y = conv2d(tape, y, p("proj.w"), p("proj.b"));
      return add(tape, gated, y);
    }
  }
  throw ValueError("unreachable block kind");
}

Block Block::clone() const {
  Block b(kind_, channels_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    b.params_[i].value->data = params_[i].value->data;
  }
  return b;
}

Network::Network(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const int e = config_.num_encoders();
  const int w = config_.width;

  auto forked = [&](const std::string& name) {
    return Rng(mix_seed(seed, fnv1a64(name)));
  };

  for (const auto& slot : config_.slots) {
    std::vector<Block> blocks;
    for (int r = 0; r < slot.repeat; ++r) {
      Block b(slot.kind, slot.channels);
      Rng rng = forked(slot.id + "." + std::to_string(r));
      b.init_params(rng);
      blocks.push_back(std::move(b));
    }
    slot_blocks_.push_back(std::move(blocks));
  }

  Rng stem_rng = forked("stem");
  stem_w_ = conv_weight(stem_rng, w, config_.in_channels, 3);
  stem_b_ = tensor({w});
  for (int i = 0; i < e; ++i) {
    Rng down_rng = forked("down" + std::to_string(i));
    down_w_.push_back(conv_weight(down_rng, w << (i + 1), w << i, 3));
    down_b_.push_back(tensor({w << (i + 1)}));
  }
  for (int i = 0; i < e; ++i) {
    Rng up_rng = forked("up" + std::to_string(i));
    up_w_.push_back(conv_weight(up_rng, w << i, w << (i + 1), 1));
    up_b_.push_back(tensor({w << i}));
  }
  // Zero-initialized end conv: the whole correction path starts at zero, so a
  // fresh network is the identity (matching the per-block zero projections).
  end_w_ = tensor({config_.in_channels, w, 3, 3});
  end_b_ = tensor({config_.in_channels});

  register_params();
}

void Network::register_params() {
  param_index_.clear();
  const int e = config_.num_encoders();
  auto reg = [this](const std::string& name, const TensorPtr& t) {
    param_index_.push_back({name, t});
  };
  reg("stem.w", stem_w_);
  reg("stem.b", stem_b_);
  for (std::size_t i = 0; i < config_.slots.size(); ++i) {
    const auto& slot = config_.slots[i];
    for (std::size_t r = 0; r < slot_blocks_[i].size(); ++r) {
      for (const auto& nt : slot_blocks_[i][r].params()) {
        reg(slot.id + "." + std::to_string(r) + "." + nt.name, nt.value);
      }
    }
    // Down/upsampling params follow the slot they feed.
    const int idx = static_cast<int>(i);
    if (idx < e) {
      reg("down" + std::to_string(idx) + ".w", down_w_[static_cast<std::size_t>(idx)]);
      reg("down" + std::to_string(idx) + ".b", down_b_[static_cast<std::size_t>(idx)]);
    } else if (idx > e && idx < 2 * e) {
      const int d = 2 * e - idx - 1;
      reg("up" + std::to_string(d) + ".w", up_w_[static_cast<std::size_t>(d)]);
      reg("up" + std::to_string(d) + ".b", up_b_[static_cast<std::size_t>(d)]);
    } else if (idx == e && e > 0) {
      const int d = e - 1;
      reg("up" + std::to_string(d) + ".w", up_w_[static_cast<std::size_t>(d)]);
      reg("up" + std::to_string(d) + ".b", up_b_[static_cast<std::size_t>(d)]);
    }
  }
  reg("end.w", end_w_);
  reg("end.b", end_b_);
}

TensorPtr Network::forward(const TensorPtr& batch, const ForwardOptions& opts) const {
  if (batch->shape.size() != 4 || batch->dim(1) != config_.in_channels) {
    throw ShapeError("network input must be [B," + std::to_string(config_.in_channels) +
                     ",H,W], got " + batch->shape_str());
  }
  const int e = config_.num_encoders();
  const int div = 1 << e;
  if (batch->dim(2) % div != 0 || batch->dim(3) % div != 0) {
    throw ShapeError("input spatial dims must be divisible by " + std::to_string(div));
  }
  Tape* tape = opts.tape;

  auto run_slot = [&](int slot_idx, const TensorPtr& in) {
    const auto& slot = config_.slots[static_cast<std::size_t>(slot_idx)];
    TensorPtr out = in;
    if (slot.id != opts.bypass_slot) {
      for (const auto& block : slot_blocks_[static_cast<std::size_t>(slot_idx)]) {
        out = block.forward(tape, out, opts.bypass_norm, opts.linearize_products);
      }
    }
    if (opts.capture) (*opts.capture)[slot.id] = {in, out};
    return out;
  };

  TensorPtr a = conv2d(tape, batch, stem_w_, stem_b_, 1, 1);
  std::vector<TensorPtr> skips;
  for (int i = 0; i < e; ++i) {
    a = run_slot(i, a);
    skips.push_back(a);
    a = conv2d(tape, a, down_w_[static_cast<std::size_t>(i)],
               down_b_[static_cast<std::size_t>(i)], 2, 1);
  }
  a = run_slot(e, a);
  for (int d = e - 1; d >= 0; --d) {
    a = upsample_nearest2x(tape, a);
    a = conv2d(tape, a, up_w_[static_cast<std::size_t>(d)],
               up_b_[static_cast<std::size_t>(d)]);
    a = add(tape, a, skips[static_cast<std::size_t>(d)]);
    a = run_slot(2 * e - d, a);
  }
  a = conv2d(tape, a, end_w_, end_b_, 1, 1);
  return add(tape, batch, a);
}

std::vector<NamedTensor> Network::parameters() const { return param_index_; }

std::vector<double> Network::flatten_parameters() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(parameter_count()));
  for (const auto& nt : param_index_) {
    flat.insert(flat.end(), nt.value->data.begin(), nt.value->data.end());
  }
  return flat;
}

void Network::set_parameters_flat(const std::vector<double>& theta) {
  if (static_cast<int>(theta.size()) != parameter_count()) {
    throw ShapeError("flat parameter vector has length " + std::to_string(theta.size()) +
                     ", expected " + std::to_string(parameter_count()));
  }
  std::size_t off = 0;
  for (const auto& nt : param_index_) {
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
              theta.begin() + static_cast<std::ptrdiff_t>(off + nt.value->data.size()),
              nt.value->data.begin());
    off += nt.value->data.size();
  }
}

int Network::parameter_count() const {
  int n = 0;
  for (const auto& nt : param_index_) n += nt.value->numel();
  return n;
}

namespace {

// Slot of a registered parameter name, or "" for shared components.
std::string slot_of(const std::string& param_name,
                    const std::vector<SlotSpec>& slots) {
  const auto dot = param_name.find('.');
  const std::string head = param_name.substr(0, dot);
  for (const auto& s : slots) {
    if (s.id == head) return s.id;
  }
  return "";
}

}  // namespace

std::map<std::string, std::pair<int, int>> Network::slot_param_ranges() const {
  std::map<std::string, std::pair<int, int>> ranges;
  int off = 0;
  for (const auto& nt : param_index_) {
    const std::string slot = slot_of(nt.name, config_.slots);
    const int end = off + nt.value->numel();
    if (!slot.empty()) {
      auto it = ranges.find(slot);
      if (it == ranges.end()) {
        ranges[slot] = {off, end};
      } else {
        it->second.first = std::min(it->second.first, off);
        it->second.second = std::max(it->second.second, end);
      }
    }
    off = end;
  }
  return ranges;
}

std::map<std::string, int> Network::parameter_census() const {
  std::map<std::string, int> census;
  for (const auto& nt : param_index_) {
    census[slot_of(nt.name, config_.slots)] += nt.value->numel();
  }
  return census;
}

const std::vector<Block>& Network::slot_blocks(const std::string& slot_id) const {
  for (std::size_t i = 0; i < config_.slots.size(); ++i) {
    if (config_.slots[i].id == slot_id) return slot_blocks_[i];
  }
  throw ValueError("network has no slot '" + slot_id + "'");
}

void Network::replace_slot_blocks(const std::string& slot_id, std::vector<Block> blocks) {
  if (blocks.empty()) throw ValueError("cannot replace slot '" + slot_id + "' with no blocks");
  for (std::size_t i = 0; i < config_.slots.size(); ++i) {
    if (config_.slots[i].id != slot_id) continue;
    for (const auto& b : blocks) {
      if (b.channels() != config_.slots[i].channels) {
        throw ShapeError("replacement block for '" + slot_id + "' has " +
                         std::to_string(b.channels()) + " channels, slot needs " +
                         std::to_string(config_.slots[i].channels));
      }
    }
    config_.slots[i].kind = blocks[0].kind();
    config_.slots[i].repeat = static_cast<int>(blocks.size());
    slot_blocks_[i] = std::move(blocks);
    register_params();
    return;
  }
  throw ValueError("network has no slot '" + slot_id + "'");
}

Network Network::clone() const {
  Network copy(config_, 0);
  // Same config implies the same structure and registration order.
  for (std::size_t i = 0; i < param_index_.size(); ++i) {
    copy.param_index_[i].value->data = param_index_[i].value->data;
  }
  return copy;
}

}  // namespace blocksurgeon
