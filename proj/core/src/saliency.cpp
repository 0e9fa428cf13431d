#include "blocksurgeon/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "blocksurgeon/metrics.hpp"
#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/training.hpp"
#include "io_util.hpp"

namespace blocksurgeon {

namespace {

std::vector<double> flatten_grads(const Network& network, const Gradients& grads) {
  std::vector<double> flat;
  for (const auto& nt : network.parameters()) {
    const std::vector<double> g = grads.get(nt.value);
    flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

// Loss gradient w.r.t. all parameters at the network's current values.
std::vector<double> loss_gradient(const Network& network, const TensorPtr& in,
                                  const TensorPtr& target) {
  Tape tape;
  TensorPtr pred = network.forward(&tape, in);
  TensorPtr loss = mse_loss(&tape, pred, target);
  return flatten_grads(network, tape.backward(loss));
}

std::map<std::string, double> per_slot_reduce(
    const Network& network, const std::vector<double>& per_param) {
  std::map<std::string, double> out;
  for (const auto& [slot, range] : network.slot_param_ranges()) {
    double acc = 0.0;
    for (int i = range.first; i < range.second; ++i) {
      acc += per_param[static_cast<std::size_t>(i)];
    }
    out[slot] = acc;
  }
  return out;
}

}  // namespace

std::map<std::string, double> score_grad_norm(const Network& network,
                                              const TensorPtr& batch_in,
                                              const TensorPtr& batch_target) {
  const std::vector<double> g = loss_gradient(network, batch_in, batch_target);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw ValueError("non-finite gradient at parameter index " + std::to_string(i));
    }
  }
  std::vector<double> sq(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) sq[i] = g[i] * g[i];
  std::map<std::string, double> out = per_slot_reduce(network, sq);
  for (auto& [slot, v] : out) v = std::sqrt(v);
  return out;
}

std::map<std::string, double> score_snip(const Network& network,
                                         const TensorPtr& batch_in,
                                         const TensorPtr& batch_target) {
  const std::vector<double> g = loss_gradient(network, batch_in, batch_target);
  const std::vector<double> theta = network.flatten_parameters();
  std::vector<double> prod(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) prod[i] = std::abs(theta[i] * g[i]);
  return per_slot_reduce(network, prod);
}

std::map<std::string, double> score_plain(const Network& network,
                                          const TensorPtr& batch_in,
                                          const TensorPtr& batch_target) {
  const std::vector<double> g = loss_gradient(network, batch_in, batch_target);
  const std::vector<double> theta = network.flatten_parameters();
  std::vector<double> prod(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) prod[i] = theta[i] * g[i];
  return per_slot_reduce(network, prod);
}

std::map<std::string, double> score_grasp(const Network& network,
                                          const TensorPtr& batch_in,
                                          const TensorPtr& batch_target) {
  const std::vector<double> theta = network.flatten_parameters();
  const std::vector<double> g = loss_gradient(network, batch_in, batch_target);

  Network work = network.clone();
  GradFn grad_at = [&work, &batch_in, &batch_target](const std::vector<double>& th) {
    work.set_parameters_flat(th);
    return loss_gradient(work, batch_in, batch_target);
  };
  const std::vector<double> hg = hvp(grad_at, theta, g);

  std::vector<double> prod(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) prod[i] = -theta[i] * hg[i];
  return per_slot_reduce(network, prod);
}

std::map<std::string, double> score_fisher(const Network& network,
                                           const TensorPtr& batch_in,
                                           const TensorPtr& batch_target) {
  Tape tape;
  FeatureCapture capture;
  ForwardOptions opts;
  opts.tape = &tape;
  opts.capture = &capture;
  TensorPtr pred = network.forward(batch_in, opts);
  TensorPtr loss = mse_loss(&tape, pred, batch_target);
  Gradients grads = tape.backward(loss);

  std::map<std::string, double> out;
  for (const auto& [slot, feats] : capture) {
    const TensorPtr& a = feats.second;
    const std::vector<double> g = grads.get(a);
    const int B = a->dim(0), C = a->dim(1), H = a->dim(2), W = a->dim(3);
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      double per_image = 0.0;
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        const std::size_t base = static_cast<std::size_t>((b * C + c) * H * W);
        for (int i = 0; i < H * W; ++i) {
          s += a->data[base + static_cast<std::size_t>(i)] * g[base + static_cast<std::size_t>(i)];
        }
        per_image += s * s;
      }
      acc += per_image;
    }
    out[slot] = acc / B;
  }
  return out;
}

std::map<std::string, double> score_synflow(const Network& network, int image_size) {
  Network work = network.clone();
  for (const auto& nt : work.parameters()) {
    for (auto& v : nt.value->data) v = std::abs(v);
  }
  auto ones = tensor({1, work.config().in_channels, image_size, image_size}, 1.0);

  // The pass linearizes the multiplicative gates along with the norm bypass:
  // on the |theta| network the gates square activations per block, which
  // overflows doubles after a handful of blocks.
  Tape tape;
  ForwardOptions opts;
  opts.tape = &tape;
  opts.bypass_norm = true;
  opts.linearize_products = true;
  TensorPtr out_t = work.forward(ones, opts);
  TensorPtr r = reduce_sum(&tape, out_t);
  Gradients grads = tape.backward(r);

  const std::vector<double> theta = work.flatten_parameters();
  const std::vector<double> g = flatten_grads(work, grads);
  std::vector<double> prod(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) prod[i] = theta[i] * g[i];
  return per_slot_reduce(work, prod);
}

namespace {

// Descending stable sort; ties keep slot order.
std::vector<std::string> ranked(const std::vector<std::string>& slot_order,
                                const std::map<std::string, double>& value) {
  std::vector<std::string> slots = slot_order;
  std::stable_sort(slots.begin(), slots.end(),
                   [&value](const std::string& a, const std::string& b) {
                     return value.at(a) > value.at(b);
                   });
  return slots;
}

}  // namespace

SaliencyRanking rank_blocks(const SaliencyReport& report) {
  SaliencyRanking ranking;
  std::map<std::string, std::map<std::string, double>> keyed;
  for (const auto& slot : report.slot_order) {
    const SlotSaliency& s = report.scores.at(slot);
    keyed["grad_norm"][slot] = s.grad_norm;
    keyed["snip"][slot] = s.snip;
    keyed["grasp"][slot] = std::abs(s.grasp);  // magnitude carries the signal
    keyed["fisher"][slot] = s.fisher;
    keyed["plain"][slot] = std::abs(s.plain);
    keyed["synflow"][slot] = s.synflow;
  }

  std::map<std::string, double> borda;
  const int n = static_cast<int>(report.slot_order.size());
  for (const auto& [proxy, values] : keyed) {
    const std::vector<std::string> order = ranked(report.slot_order, values);
    ranking.per_proxy[proxy] = order;
    for (int pos = 0; pos < n; ++pos) {
      borda[order[static_cast<std::size_t>(pos)]] += n - 1 - pos;
    }
  }

  ranking.consensus = report.slot_order;
  std::stable_sort(ranking.consensus.begin(), ranking.consensus.end(),
                   [&borda](const std::string& a, const std::string& b) {
                     return borda.at(a) > borda.at(b);
                   });
  return ranking;
}

std::set<std::string> select_frozen(const SaliencyRanking& ranking, int k) {
  if (k < 0) throw ValueError("select_frozen k must be >= 0");
  k = std::min<int>(k, static_cast<int>(ranking.consensus.size()));
  return {ranking.consensus.begin(), ranking.consensus.begin() + k};
}

std::map<std::string, double> ablation_sensitivity(const Network& network,
                                                   const Dataset& dataset) {
  const double base = validation_psnr(network, dataset);
  const std::vector<int> val_idx = dataset.val_indices();
  const TensorPtr blurred = dataset.batch_blurred(val_idx);
  const TensorPtr sharp = dataset.batch_sharp(val_idx);

  std::map<std::string, double> drops;
  for (const auto& slot : network.config().slots) {
    ForwardOptions opts;
    opts.bypass_slot = slot.id;
    TensorPtr restored = network.forward(blurred, opts);
    drops[slot.id] = base - batch_mean_psnr(*restored, *sharp);
  }
  return drops;
}

SaliencyReport compute_saliency(const Network& network, const Dataset& dataset,
                                std::uint64_t seed) {
  std::vector<int> train = dataset.train_indices();
  Rng rng(seed);
  for (int i = static_cast<int>(train.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(train[static_cast<std::size_t>(i)], train[static_cast<std::size_t>(j)]);
  }
  const int take = std::min<int>(kSaliencyBatch, static_cast<int>(train.size()));
  const std::vector<int> batch(train.begin(), train.begin() + take);
  const TensorPtr in = dataset.batch_blurred(batch);
  const TensorPtr target = dataset.batch_sharp(batch);

  SaliencyReport report;
  for (const auto& slot : network.config().slots) report.slot_order.push_back(slot.id);

  const auto grad_norm = score_grad_norm(network, in, target);
  const auto snip = score_snip(network, in, target);
  const auto grasp = score_grasp(network, in, target);
  const auto fisher = score_fisher(network, in, target);
  const auto plain = score_plain(network, in, target);
  const auto synflow = score_synflow(network, dataset.spec.image_size);

  for (const auto& slot : report.slot_order) {
    SlotSaliency s;
    s.grad_norm = grad_norm.at(slot);
    s.snip = snip.at(slot);
    s.grasp = grasp.at(slot);
    s.fisher = fisher.at(slot);
    s.plain = plain.at(slot);
    s.synflow = synflow.at(slot);
    report.scores[slot] = s;
  }

  const SaliencyRanking ranking = rank_blocks(report);
  report.consensus = ranking.consensus;
  for (std::size_t i = 0; i < ranking.consensus.size(); ++i) {
    report.consensus_rank[ranking.consensus[i]] = static_cast<int>(i) + 1;
  }
  return report;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValueError("spearman needs two equal-length series of >= 2 values");
  }
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&v](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;  // a constant series carries no ranking
  return num / std::sqrt(da * db);
}

void write_saliency_csv(const SaliencyReport& report, const std::string& path) {
  std::string csv = "slot_id,grad_norm,snip,grasp,fisher,plain,synflow,consensus_rank\n";
  char buf[256];
  for (const auto& slot : report.slot_order) {
    const SlotSaliency& s = report.scores.at(slot);
    std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%d\n",
                  slot.c_str(), s.grad_norm, s.snip, s.grasp, s.fisher, s.plain,
                  s.synflow, report.consensus_rank.at(slot));
    csv += buf;
  }
  io::write_file(path, csv);
}

}  // namespace blocksurgeon
