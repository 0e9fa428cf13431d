#include "blocksurgeon/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#include "blocksurgeon/parallel.hpp"
#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/training.hpp"
#include "io_util.hpp"
#include "json.hpp"

namespace blocksurgeon {

void SurrogateSet::insert(Surrogate s) {
  const Key key{s.slot, static_cast<int>(s.block.kind())};
  items_.erase(key);
  items_.emplace(key, std::move(s));
}

const Surrogate* SurrogateSet::find(const std::string& slot, BlockKind kind) const {
  auto it = items_.find({slot, static_cast<int>(kind)});
  return it == items_.end() ? nullptr : &it->second;
}

std::pair<TensorPtr, TensorPtr> capture_features(const Network& base,
                                                 const std::string& slot,
                                                 const TensorPtr& batch) {
  FeatureCapture capture;
  ForwardOptions opts;
  opts.capture = &capture;
  base.forward(batch, opts);
  auto it = capture.find(slot);
  if (it == capture.end()) throw ValueError("network has no slot '" + slot + "'");
  return it->second;
}

namespace {

// Per-image boundary features; the teacher pass is always the clean base
// network.
struct SlotFeatures {
  std::vector<TensorPtr> inputs;
  std::vector<TensorPtr> outputs;
};

SlotFeatures capture_slot_features(const Network& base, const std::string& slot,
                                   const Dataset& subset) {
  SlotFeatures f;
  for (int i = 0; i < subset.count(); ++i) {
    auto pair = capture_features(base, slot, subset.batch_blurred({i}));
    f.inputs.push_back(pair.first);
    f.outputs.push_back(pair.second);
  }
  return f;
}

TensorPtr concat_batch(const std::vector<TensorPtr>& images,
                       const std::vector<int>& indices) {
  const auto& shape0 = images[0]->shape;
  auto out = tensor({static_cast<int>(indices.size()), shape0[1], shape0[2], shape0[3]});
  std::size_t off = 0;
  for (int idx : indices) {
    const auto& d = images[static_cast<std::size_t>(idx)]->data;
    std::copy(d.begin(), d.end(), out->data.begin() + static_cast<std::ptrdiff_t>(off));
    off += d.size();
  }
  return out;
}

double feature_mse(const Block& block, const SlotFeatures& feats) {
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < feats.inputs.size(); ++i) {
    TensorPtr pred = block.forward(nullptr, feats.inputs[i]);
    const auto& target = feats.outputs[i]->data;
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double d = pred->data[k] - target[k];
      acc += d * d;
    }
    n += static_cast<long>(target.size());
  }
  return acc / static_cast<double>(n);
}

Surrogate distill_from_features(const Network& base, const std::string& slot,
                                BlockKind kind, const SlotFeatures& feats,
                                const DistillOptions& opts, std::uint64_t seed) {
  const SlotSpec* spec = base.config().find(slot);
  if (!spec) throw ValueError("network has no slot '" + slot + "'");

  Block block(kind, spec->channels);
  if (kind == BlockKind::Base && spec->repeat == 1) {
    block = base.slot_blocks(slot)[0].clone();
  } else {
    Rng init_rng(mix_seed(seed, fnv1a64("init")));
    block.init_params(init_rng);
  }

  Surrogate s(slot, std::move(block));
  s.steps = opts.steps;
  s.seed = seed;
  s.fraction = opts.fraction;
  s.initial_feature_mse = feature_mse(s.block, feats);

  std::vector<NamedTensor> params;
  for (const auto& nt : s.block.params()) params.push_back(nt);
  Adam opt(params, opts.lr);
  Rng rng(mix_seed(seed, fnv1a64("batches")));
  const int n = static_cast<int>(feats.inputs.size());

  double best = std::numeric_limits<double>::infinity();
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<int> batch(static_cast<std::size_t>(std::min(opts.batch, n)));
    for (auto& idx : batch) idx = rng.uniform_int(n);
    TensorPtr in = concat_batch(feats.inputs, batch);
    TensorPtr target = concat_batch(feats.outputs, batch);
    Tape tape;
    TensorPtr pred = s.block.forward(&tape, in);
    TensorPtr loss = mse_loss(&tape, pred, target);
    if (!std::isfinite(loss->data[0])) {
      throw DivergenceError("distillation of (" + slot + ", " + to_string(kind) +
                            ") diverged at step " + std::to_string(step));
    }
    opt.step(tape.backward(loss));
    best = std::min(best, loss->data[0]);
    s.loss_curve.push_back(best);
  }

  s.final_feature_mse = feature_mse(s.block, feats);
  return s;
}

}  // namespace

Surrogate distill_block(const Network& base, const std::string& slot,
                        BlockKind kind, const Dataset& subset,
                        const DistillOptions& opts, std::uint64_t seed) {
  if (subset.count() < 1) throw ValueError("distillation subset is empty");
  const SlotFeatures feats = capture_slot_features(base, slot, subset);
  return distill_from_features(base, slot, kind, feats, opts, seed);
}

SurrogateSet distill_all(const Network& base, const Dataset& subset,
                         const std::vector<BlockKind>& kinds,
                         const std::vector<std::string>& slots,
                         const DistillOptions& opts, std::uint64_t master_seed,
                         int workers) {
  struct Pair {
    std::string slot;
    BlockKind kind;
  };
  std::vector<Pair> pairs;
  for (const auto& slot : slots) {
    for (BlockKind kind : kinds) pairs.push_back({slot, kind});
  }

  // Teacher features per slot, shared read-only by every kind. Map entries
  // are created up front; workers fill disjoint slots.
  std::map<std::string, SlotFeatures> features;
  std::vector<SlotFeatures*> feature_ptr;
  for (const auto& slot : slots) feature_ptr.push_back(&features[slot]);
  parallel_for(static_cast<int>(slots.size()), workers, [&](int i) {
    *feature_ptr[static_cast<std::size_t>(i)] =
        capture_slot_features(base, slots[static_cast<std::size_t>(i)], subset);
  });

  std::vector<std::unique_ptr<Surrogate>> results(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), workers, [&](int i) {
    const Pair& p = pairs[static_cast<std::size_t>(i)];
    const std::uint64_t seed =
        mix_seed(master_seed, fnv1a64(p.slot + ":" + to_string(p.kind)));
    Surrogate s = distill_from_features(base, p.slot, p.kind, features.at(p.slot),
                                        opts, seed);
    results[static_cast<std::size_t>(i)] = std::make_unique<Surrogate>(std::move(s));
  });

  SurrogateSet set;
  for (auto& r : results) set.insert(std::move(*r));
  return set;
}

Network stitch(const Network& base, const SurrogateSet& surrogates,
               const NetworkConfig& target) {
  target.validate();
  const NetworkConfig& bc = base.config();
  if (target.width != bc.width || target.in_channels != bc.in_channels ||
      target.slots.size() != bc.slots.size()) {
    throw ValueError("stitch target topology does not match the base network");
  }
  for (std::size_t i = 0; i < target.slots.size(); ++i) {
    if (target.slots[i].id != bc.slots[i].id ||
        target.slots[i].channels != bc.slots[i].channels) {
      throw ValueError("stitch target slot '" + target.slots[i].id +
                       "' does not match the base network");
    }
  }

  Network out = base.clone();
  for (const auto& slot : target.slots) {
    if (slot.kind == BlockKind::Base) continue;
    const Surrogate* s = surrogates.find(slot.id, slot.kind);
    if (!s) {
      throw MissingEntryError("no surrogate for (" + slot.id + ", " +
                              to_string(slot.kind) + ")");
    }
    std::vector<Block> blocks;
    blocks.push_back(s->block.clone());
    out.replace_slot_blocks(slot.id, std::move(blocks));
  }
  return out;
}

namespace {

std::string surrogate_stem(const std::string& slot, BlockKind kind) {
  return slot + "__" + to_string(kind);
}

}  // namespace

void save_surrogates(const SurrogateSet& set, const std::string& dir) {
  io::ensure_dir(dir);
  nlohmann::ordered_json index;
  index["entries"] = nlohmann::ordered_json::array();
  for (const auto& [key, s] : set.items()) {
    const std::string stem = surrogate_stem(s.slot, s.block.kind());

    nlohmann::ordered_json j;
    j["slot"] = s.slot;
    j["kind"] = to_string(s.block.kind());
    j["channels"] = s.block.channels();
    j["initial_feature_mse"] = s.initial_feature_mse;
    j["final_feature_mse"] = s.final_feature_mse;
    j["steps"] = s.steps;
    j["fraction"] = s.fraction;
    j["seed"] = s.seed;
    j["tensors"] = nlohmann::ordered_json::array();
    std::string blob;
    std::size_t offset = 0;
    for (const auto& nt : s.block.params()) {
      nlohmann::ordered_json t;
      t["name"] = nt.name;
      t["shape"] = nt.value->shape;
      t["offset"] = offset;
      j["tensors"].push_back(std::move(t));
      const std::size_t bytes = nt.value->data.size() * 8;
      const std::size_t at = blob.size();
      blob.resize(at + bytes);
      std::memcpy(blob.data() + at, nt.value->data.data(), bytes);
      offset += bytes;
    }
    io::write_file(io::join(dir, stem + ".json"), j.dump(2) + "\n");
    io::write_file(io::join(dir, stem + ".bin"), blob);

    nlohmann::ordered_json e;
    e["slot"] = s.slot;
    e["kind"] = to_string(s.block.kind());
    e["final_feature_mse"] = s.final_feature_mse;
    e["seed"] = s.seed;
    index["entries"].push_back(std::move(e));
  }
  io::write_file(io::join(dir, "index.json"), index.dump(2) + "\n");
}

SurrogateSet load_surrogates(const std::string& dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(io::read_file(io::join(dir, "index.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("surrogate index is not valid JSON: ") + e.what());
  }
  SurrogateSet set;
  try {
    for (const auto& e : index.at("entries")) {
      const std::string slot = e.at("slot").get<std::string>();
      const BlockKind kind = block_kind_from_string(e.at("kind").get<std::string>());
      const std::string stem = surrogate_stem(slot, kind);
      nlohmann::json j = nlohmann::json::parse(io::read_file(io::join(dir, stem + ".json")));
      const std::string blob = io::read_file(io::join(dir, stem + ".bin"));

      Block block(kind, j.at("channels").get<int>());
      const auto& params = block.params();
      const auto& tensors = j.at("tensors");
      if (tensors.size() != params.size()) {
        throw ParseError("surrogate '" + stem + "' lists " + std::to_string(tensors.size()) +
                         " tensors, block has " + std::to_string(params.size()));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != params[i].name) {
          throw ParseError("surrogate '" + stem + "' tensor order mismatch");
        }
        const std::size_t offset = t.at("offset").get<std::size_t>();
        const std::size_t bytes = params[i].value->data.size() * 8;
        if (offset + bytes > blob.size()) {
          throw ParseError("surrogate '" + stem + "' blob too short");
        }
        std::memcpy(params[i].value->data.data(), blob.data() + offset, bytes);
      }

      Surrogate s(slot, std::move(block));
      s.initial_feature_mse = j.at("initial_feature_mse").get<double>();
      s.final_feature_mse = j.at("final_feature_mse").get<double>();
      s.steps = j.at("steps").get<int>();
      s.fraction = j.at("fraction").get<double>();
      s.seed = j.at("seed").get<std::uint64_t>();
      set.insert(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("surrogate manifest field error: ") + e.what());
  }
  return set;
}

}  // namespace blocksurgeon
