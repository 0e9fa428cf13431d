#include "blocksurgeon/saliency.hpp"

#include <cmath>
#include <fstream>

#include "blocksurgeon/metrics.hpp"
#include "blocksurgeon/training.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace blocksurgeon;
using namespace bs_test;

namespace {

struct SaliencyFixture {
  Network net;
  TensorPtr in;
  TensorPtr target;

  SaliencyFixture() : net(desk_config(4), 404) {
    randomize_parameters(net, 405);
    Rng rng(406);
    in = random_tensor({4, 1, 16, 16}, rng, 0.0, 1.0);
    target = random_tensor({4, 1, 16, 16}, rng, 0.0, 1.0);
  }
};

std::vector<double> test_side_gradient(const Network& net, const TensorPtr& in,
                                       const TensorPtr& target) {
  Tape tape;
  auto loss = mse_loss(&tape, net.forward(&tape, in), target);
  auto grads = tape.backward(loss);
  std::vector<double> flat;
  for (const auto& nt : net.parameters()) {
    const auto g = grads.get(nt.value);
    flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

void zero_slot(Network& net, const std::string& slot) {
  const auto ranges = net.slot_param_ranges();
  auto theta = net.flatten_parameters();
  for (int i = ranges.at(slot).first; i < ranges.at(slot).second; ++i) {
    theta[(std::size_t)i] = 0.0;
  }
  net.set_parameters_flat(theta);
}

}  // namespace

TEST_CASE("grad_norm, snip, fisher and synflow are non-negative") {
  SaliencyFixture f;
  for (const auto& [slot, v] : score_grad_norm(f.net, f.in, f.target)) CHECK(v >= 0.0);
  for (const auto& [slot, v] : score_snip(f.net, f.in, f.target)) CHECK(v >= 0.0);
  for (const auto& [slot, v] : score_fisher(f.net, f.in, f.target)) CHECK(v >= 0.0);
  for (const auto& [slot, v] : score_synflow(f.net, 16)) CHECK(v >= 0.0);
}

TEST_CASE("grad_norm matches a finite-difference gradient norm on one slot") {
  Network net(desk_config(4), 42);
  randomize_parameters(net, 43);
  Rng rng(44);
  auto in = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
  auto target = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);

  const auto scores = score_grad_norm(net, in, target);
  const auto ranges = net.slot_param_ranges();
  const auto range = ranges.at("mid");
  const std::vector<double> theta = net.flatten_parameters();

  LossFn loss_at = [&](const std::vector<double>& th) {
    net.set_parameters_flat(th);
    return mse_loss(nullptr, net.forward(nullptr, in), target)->data[0];
  };
  double acc = 0.0;
  std::vector<double> probe = theta;
  for (int i = range.first; i < range.second; ++i) {
    const double h = 1e-5;
    probe[(std::size_t)i] = theta[(std::size_t)i] + h;
    const double lp = loss_at(probe);
    probe[(std::size_t)i] = theta[(std::size_t)i] - h;
    const double lm = loss_at(probe);
    probe[(std::size_t)i] = theta[(std::size_t)i];
    const double g = (lp - lm) / (2 * h);
    acc += g * g;
  }
  net.set_parameters_flat(theta);
  const double fd_norm = std::sqrt(acc);
  CHECK(scores.at("mid") == doctest::Approx(fd_norm).epsilon(1e-3));
}

TEST_CASE("snip recomputes after doubling a slot's parameters") {
  SaliencyFixture f;
  Network doubled = f.net.clone();
  const auto ranges = doubled.slot_param_ranges();
  auto theta = doubled.flatten_parameters();
  for (int i = ranges.at("enc0").first; i < ranges.at("enc0").second; ++i) {
    theta[(std::size_t)i] *= 2.0;
  }
  doubled.set_parameters_flat(theta);

  // Direct recomputation from the doubled network's own gradient.
  const auto g = test_side_gradient(doubled, f.in, f.target);
  double want = 0.0;
  for (int i = ranges.at("enc0").first; i < ranges.at("enc0").second; ++i) {
    want += std::abs(theta[(std::size_t)i] * g[(std::size_t)i]);
  }
  const auto scores = score_snip(doubled, f.in, f.target);
  CHECK(scores.at("enc0") == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("plain is the signed version of snip and vanishes on zero gradients") {
  SaliencyFixture f;
  const auto plain = score_plain(f.net, f.in, f.target);
  const auto snip = score_snip(f.net, f.in, f.target);
  for (const auto& [slot, v] : plain) {
    CHECK(std::abs(v) <= snip.at(slot) + 1e-12);
  }

  // All-zero slot parameters: every product is zero, so plain == snip == 0.
  Network zeroed = f.net.clone();
  zero_slot(zeroed, "mid");
  CHECK(score_plain(zeroed, f.in, f.target).at("mid") == 0.0);
  CHECK(score_snip(zeroed, f.in, f.target).at("mid") == 0.0);
}

TEST_CASE("plain and grasp can be negative") {
  // Observed signs are data: scan a few fixtures until both signs appear.
  bool plain_neg = false, grasp_neg = false;
  for (std::uint64_t seed = 0; seed < 6 && !(plain_neg && grasp_neg); ++seed) {
    Network net(desk_config(4), 500 + seed);
    randomize_parameters(net, 600 + seed);
    Rng rng(700 + seed);
    auto in = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
    auto target = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
    for (const auto& [slot, v] : score_plain(net, in, target)) plain_neg |= v < 0.0;
    for (const auto& [slot, v] : score_grasp(net, in, target)) grasp_neg |= v < 0.0;
  }
  CHECK(plain_neg);
  CHECK(grasp_neg);
}

TEST_CASE("grasp matches a test-side recomputation and zeroed slots score zero") {
  Network net(desk_config(4), 808);
  randomize_parameters(net, 809);
  Rng rng(810);
  auto in = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
  auto target = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);

  const std::vector<double> theta = net.flatten_parameters();
  const std::vector<double> g = test_side_gradient(net, in, target);
  Network work = net.clone();
  GradFn grad_at = [&](const std::vector<double>& th) {
    work.set_parameters_flat(th);
    return test_side_gradient(work, in, target);
  };
  const std::vector<double> hg = hvp(grad_at, theta, g);
  const auto ranges = net.slot_param_ranges();
  const auto scores = score_grasp(net, in, target);
  for (const auto& [slot, range] : ranges) {
    double want = 0.0;
    for (int i = range.first; i < range.second; ++i) {
      want -= theta[(std::size_t)i] * hg[(std::size_t)i];
    }
    CHECK(scores.at(slot) ==
          doctest::Approx(want).epsilon(1e-4).scale(std::max(1.0, std::abs(want))));
  }

  Network zeroed = net.clone();
  zero_slot(zeroed, "dec0");
  CHECK(score_grasp(zeroed, in, target).at("dec0") == doctest::Approx(0.0));
}

TEST_CASE("fisher matches a direct recomputation from captured activations") {
  SaliencyFixture f;
  const auto scores = score_fisher(f.net, f.in, f.target);

  Tape tape;
  FeatureCapture capture;
  ForwardOptions opts;
  opts.tape = &tape;
  opts.capture = &capture;
  auto loss = mse_loss(&tape, f.net.forward(f.in, opts), f.target);
  auto grads = tape.backward(loss);
  for (const auto& [slot, feats] : capture) {
    const TensorPtr& a = feats.second;
    const auto g = grads.get(a);
    const int B = a->dim(0), C = a->dim(1), HW = a->dim(2) * a->dim(3);
    double want = 0.0;
    for (int b = 0; b < B; ++b) {
      double img = 0.0;
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = 0; i < HW; ++i) {
          const std::size_t idx = (std::size_t)((b * C + c) * HW + i);
          s += a->data[idx] * g[idx];
        }
        img += s * s;
      }
      want += img;
    }
    want /= B;
    CHECK(scores.at(slot) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("fisher vanishes when the downstream path is zeroed") {
  // A fresh network has a zero end conv, so no loss gradient reaches any
  // slot's output activations.
  Network net(desk_config(4), 3030);
  Rng rng(3031);
  auto in = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
  auto target = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
  for (const auto& [slot, v] : score_fisher(net, in, target)) CHECK(v == 0.0);
}

TEST_CASE("synflow is zero for a zero-parameter slot and scales superlinearly") {
  Network net(desk_config(4), 111);
  randomize_parameters(net, 112);

  Network zeroed = net.clone();
  zero_slot(zeroed, "enc1");
  CHECK(score_synflow(zeroed, 16).at("enc1") == doctest::Approx(0.0));

  const double base_score = score_synflow(net, 16).at("enc0");
  REQUIRE(base_score > 0.0);
  Network scaled = net.clone();
  const auto ranges = scaled.slot_param_ranges();
  auto theta = scaled.flatten_parameters();
  for (int i = ranges.at("enc0").first; i < ranges.at("enc0").second; ++i) {
    theta[(std::size_t)i] *= 2.0;
  }
  scaled.set_parameters_flat(theta);
  const double scaled_score = score_synflow(scaled, 16).at("enc0");
  // The gated block carries multiplicative parameter chains, so doubling the
  // slot more than doubles its score.
  CHECK(scaled_score > 2.0 * base_score * 1.01);
}

TEST_CASE("rankings: single slot, scale invariance, Borda consensus") {
  SaliencyReport single;
  single.slot_order = {"mid"};
  single.scores["mid"] = {1.0, 1.0, -1.0, 1.0, -1.0, 1.0};
  const auto r1 = rank_blocks(single);
  for (const auto& [proxy, order] : r1.per_proxy) {
    CHECK(order == std::vector<std::string>{"mid"});
  }
  CHECK(r1.consensus == std::vector<std::string>{"mid"});

  SaliencyReport rep;
  rep.slot_order = {"enc0", "enc1", "mid"};
  rep.scores["enc0"] = {3.0, 1.0, 0.5, 2.0, -0.1, 9.0};
  rep.scores["enc1"] = {2.0, 5.0, -4.0, 1.0, 0.2, 8.0};
  rep.scores["mid"] = {1.0, 2.0, 1.0, 3.0, -0.3, 7.0};
  const auto base_rank = rank_blocks(rep);

  SaliencyReport scaled = rep;
  for (auto& [slot, s] : scaled.scores) s.snip *= 17.0;  // positive rescale
  const auto scaled_rank = rank_blocks(scaled);
  CHECK(scaled_rank.per_proxy == base_rank.per_proxy);
  CHECK(scaled_rank.consensus == base_rank.consensus);

  // Hand-computed Borda: grad_norm enc0>enc1>mid, snip enc1>mid>enc0,
  // grasp(|.|) enc1>mid>enc0, fisher mid>enc0>enc1, plain(|.|) mid>enc1>enc0,
  // synflow enc0>enc1>mid. Totals: enc0 = 2+0+0+1+0+2 = 5, enc1 = 1+2+2+0+1+1 = 7,
  // mid = 0+1+1+2+2+0 = 6.
  CHECK(base_rank.consensus == std::vector<std::string>{"enc1", "mid", "enc0"});
}

TEST_CASE("select_frozen takes the top-k consensus slots") {
  SaliencyRanking ranking;
  ranking.consensus = {"enc1", "mid", "enc0"};
  CHECK(select_frozen(ranking, 0).empty());
  CHECK(select_frozen(ranking, 1) == std::set<std::string>{"enc1"});
  CHECK(select_frozen(ranking, 3) ==
        std::set<std::string>{"enc0", "enc1", "mid"});
  CHECK(select_frozen(ranking, 99) ==
        std::set<std::string>{"enc0", "enc1", "mid"});
}

TEST_CASE("ablation drop is exactly zero for identity slots") {
  // Fresh network: every block is the identity, so bypassing changes nothing.
  Network net(desk_config(4), 77);
  DatasetSpec spec;
  spec.count = 8;
  spec.image_size = 16;
  spec.seed = 5;
  const Dataset ds = generate_dataset(spec);
  for (const auto& [slot, drop] : ablation_sensitivity(net, ds)) {
    CHECK(drop == 0.0);
  }
}

TEST_CASE("saliency report is deterministic and the CSV lists every slot") {
  DatasetSpec spec;
  spec.count = 12;
  spec.image_size = 16;
  spec.seed = 9;
  const Dataset ds = generate_dataset(spec);
  Network net(desk_config(4), 21);
  randomize_parameters(net, 22);

  const SaliencyReport a = compute_saliency(net, ds, 33);
  const SaliencyReport b = compute_saliency(net, ds, 33);
  REQUIRE(a.slot_order == b.slot_order);
  for (const auto& slot : a.slot_order) {
    CHECK(a.scores.at(slot).grad_norm == b.scores.at(slot).grad_norm);
    CHECK(a.scores.at(slot).snip == b.scores.at(slot).snip);
    CHECK(a.scores.at(slot).grasp == b.scores.at(slot).grasp);
    CHECK(a.scores.at(slot).fisher == b.scores.at(slot).fisher);
    CHECK(a.scores.at(slot).plain == b.scores.at(slot).plain);
    CHECK(a.scores.at(slot).synflow == b.scores.at(slot).synflow);
  }
  CHECK(a.consensus == b.consensus);

  write_saliency_csv(a, "/tmp/bs_saliency.csv");
  std::ifstream in("/tmp/bs_saliency.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "slot_id,grad_norm,snip,grasp,fisher,plain,synflow,consensus_rank");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == (int)a.slot_order.size());
}

TEST_CASE("spearman rank correlation handles order, reversal, and ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 2}) > 0.0);
  CHECK(spearman({1, 1, 1, 1}, {1, 2, 3, 4}) == doctest::Approx(0.0));
}

TEST_CASE("the 28-block slot dominates consensus saliency in the paper shape") {
  Network net(paper_shape_config(), 1234);
  randomize_parameters(net, 1235, 0.05);
  DatasetSpec spec;
  spec.count = 12;
  spec.image_size = 32;
  spec.seed = 44;
  const Dataset ds = generate_dataset(spec);
  const SaliencyReport report = compute_saliency(net, ds, 55);
  const SaliencyRanking ranking = rank_blocks(report);
  CHECK(ranking.consensus[0] == "enc3");
  CHECK(select_frozen(ranking, 1) == std::set<std::string>{"enc3"});
}
