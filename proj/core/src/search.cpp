#include "blocksurgeon/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blocksurgeon/metrics.hpp"
#include "blocksurgeon/parallel.hpp"

namespace blocksurgeon {

std::vector<int> decode_encoding(const std::vector<double>& x, int n) {
  if (n < 1) throw ValueError("decode needs n >= 1 options per dimension");
  std::vector<int> idx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int k = static_cast<int>(std::floor(x[i] * n));
    idx[i] = std::clamp(k, 0, n - 1);
  }
  return idx;
}

std::vector<double> encode_indices(const std::vector<int>& indices, int n) {
  if (n < 1) throw ValueError("encode needs n >= 1 options per dimension");
  std::vector<double> x(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n) {
      throw ValueError("index " + std::to_string(indices[i]) + " out of range [0," +
                       std::to_string(n) + ")");
    }
    x[i] = (indices[i] + 0.5) / n;
  }
  return x;
}

bool dominates(const std::pair<double, double>& a, const std::pair<double, double>& b) {
  return a.first <= b.first && a.second <= b.second &&
         (a.first < b.first || a.second < b.second);
}

bool ParetoArchive::insert(const SearchObservation& obs) {
  const std::pair<double, double> p{obs.f1, obs.f2};
  for (const auto& m : members_) {
    const std::pair<double, double> q{m.f1, m.f2};
    if (dominates(q, p) || q == p) return false;
  }
  std::erase_if(members_, [&p](const SearchObservation& m) {
    return dominates(p, {m.f1, m.f2});
  });
  members_.push_back(obs);
  return true;
}

std::vector<std::pair<double, double>> ParetoArchive::objective_pairs() const {
  std::vector<std::pair<double, double>> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.emplace_back(m.f1, m.f2);
  return out;
}

namespace {

// Non-dominated subset strictly inside the reference box, ascending f1
// (hence strictly descending f2).
std::vector<std::pair<double, double>> clipped_front(
    const std::vector<std::pair<double, double>>& points,
    const std::pair<double, double>& ref) {
  std::vector<std::pair<double, double>> in_box;
  for (const auto& p : points) {
    if (p.first < ref.first && p.second < ref.second) in_box.push_back(p);
  }
  std::vector<std::pair<double, double>> front;
  for (const auto& p : in_box) {
    bool dominated = false;
    for (const auto& q : in_box) {
      if (dominates(q, p)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  std::sort(front.begin(), front.end());
  front.erase(std::unique(front.begin(), front.end()), front.end());
  return front;
}

}  // namespace

double hypervolume_2d(const std::vector<std::pair<double, double>>& front,
                      const std::pair<double, double>& ref) {
  const auto f = clipped_front(front, ref);
  double hv = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double right = (i + 1 < f.size()) ? f[i + 1].first : ref.first;
    hv += (right - f[i].first) * (ref.second - f[i].second);
  }
  return hv;
}

namespace {

// Lower Cholesky factor of a dense row-major SPD matrix; false on failure.
bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i * n + j)];
      for (int k = 0; k < j; ++k) {
        s -= a[static_cast<std::size_t>(i * n + k)] * a[static_cast<std::size_t>(j * n + k)];
      }
      if (i == j) {
        if (s <= 1e-12) return false;
        a[static_cast<std::size_t>(i * n + i)] = std::sqrt(s);
      } else {
        a[static_cast<std::size_t>(i * n + j)] = s / a[static_cast<std::size_t>(j * n + j)];
      }
    }
    for (int j = i + 1; j < n; ++j) a[static_cast<std::size_t>(i * n + j)] = 0.0;
  }
  return true;
}

void solve_lower(const std::vector<double>& l, int n, std::vector<double>& b) {
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) s -= l[static_cast<std::size_t>(i * n + k)] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i * n + i)];
  }
}

void solve_upper_from_lower(const std::vector<double>& l, int n, std::vector<double>& b) {
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= l[static_cast<std::size_t>(k * n + i)] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i * n + i)];
  }
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace

GpModel GpModel::fit_fixed(const std::vector<std::vector<double>>& inputs,
                           const std::vector<double>& targets, const Hyper& hyper) {
  if (inputs.size() != targets.size() || inputs.empty()) {
    throw ValueError("gp fit needs matching, non-empty inputs and targets");
  }
  GpModel m;
  m.x_ = inputs;
  m.hyper_ = hyper;
  m.n_ = static_cast<int>(inputs.size());
  const int n = m.n_;

  double mean = 0.0;
  for (double y : targets) mean += y;
  mean /= n;
  double var = 0.0;
  for (double y : targets) var += (y - mean) * (y - mean);
  var /= n;
  m.y_mean_ = mean;
  m.y_std_ = var > 1e-24 ? std::sqrt(var) : 1.0;

  std::vector<double> y_std(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) y_std[i] = (targets[i] - mean) / m.y_std_;

  std::vector<double> k(static_cast<std::size_t>(n) * n);
  const double inv2l2 = 1.0 / (2.0 * hyper.lengthscale * hyper.lengthscale);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = hyper.amplitude2 * std::exp(-sq_dist(inputs[static_cast<std::size_t>(i)],
                                                            inputs[static_cast<std::size_t>(j)]) *
                                                   inv2l2);
      k[static_cast<std::size_t>(i * n + j)] = v;
      k[static_cast<std::size_t>(j * n + i)] = v;
    }
    k[static_cast<std::size_t>(i * n + i)] += hyper.noise2;
  }
  if (!cholesky(k, n)) {
    throw ValueError("gp kernel matrix is not positive definite at noise " +
                     std::to_string(hyper.noise2));
  }
  m.chol_ = std::move(k);
  m.alpha_ = y_std;
  solve_lower(m.chol_, n, m.alpha_);
  solve_upper_from_lower(m.chol_, n, m.alpha_);
  return m;
}

GpModel GpModel::fit(const std::vector<std::vector<double>>& inputs,
                     const std::vector<double>& targets) {
  static constexpr double kLengthscales[] = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
  static constexpr double kAmplitudes[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  static constexpr double kNoises[] = {1e-6, 1e-4, 1e-2};

  const int n = static_cast<int>(inputs.size());
  double best_lml = -std::numeric_limits<double>::infinity();
  GpModel best;
  bool found = false;
  for (double ls : kLengthscales) {
    for (double amp : kAmplitudes) {
      for (double noise : kNoises) {
        GpModel m;
        try {
          m = fit_fixed(inputs, targets, Hyper{ls, amp, noise});
        } catch (const ValueError&) {
          continue;  // non-SPD combo, skip
        }
        // LML on standardized targets: -1/2 y^T alpha - sum(log Lii) - n/2 log(2pi).
        double fit_term = 0.0;
        for (int i = 0; i < n; ++i) {
          fit_term += ((targets[static_cast<std::size_t>(i)] - m.y_mean_) / m.y_std_) *
                      m.alpha_[static_cast<std::size_t>(i)];
        }
        double log_det = 0.0;
        for (int i = 0; i < n; ++i) {
          log_det += std::log(m.chol_[static_cast<std::size_t>(i * n + i)]);
        }
        const double lml = -0.5 * fit_term - log_det -
                           0.5 * n * std::log(2.0 * 3.14159265358979323846);
        if (lml > best_lml) {
          best_lml = lml;
          best = std::move(m);
          found = true;
        }
      }
    }
  }
  if (!found) {
    throw ValueError("gp fit failed: no hyperparameter combination factorizes");
  }
  return best;
}

GpModel::Prediction GpModel::predict(const std::vector<double>& x) const {
  const int n = n_;
  const double inv2l2 = 1.0 / (2.0 * hyper_.lengthscale * hyper_.lengthscale);
  std::vector<double> kstar(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    kstar[static_cast<std::size_t>(i)] =
        hyper_.amplitude2 * std::exp(-sq_dist(x_[static_cast<std::size_t>(i)], x) * inv2l2);
  }
  double mean_std = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_std += kstar[static_cast<std::size_t>(i)] * alpha_[static_cast<std::size_t>(i)];
  }
  std::vector<double> z = kstar;
  solve_lower(chol_, n, z);
  double explained = 0.0;
  for (double v : z) explained += v * v;
  double var_std = hyper_.amplitude2 + hyper_.noise2 - explained;
  if (var_std < 0.0) var_std = 0.0;

  Prediction p;
  p.mean = y_mean_ + y_std_ * mean_std;
  p.var = var_std * y_std_ * y_std_;
  return p;
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double norm_cdf(double t) { return 0.5 * std::erfc(-t * 0.7071067811865475244); }
double norm_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

// Integral of the Gaussian CDF: psi(u) = int_{-inf}^{u} P(Y <= z) dz.
double psi(double u, double mu, double sigma) {
  if (std::isinf(u) && u < 0.0) return 0.0;
  if (sigma <= 0.0) return std::max(0.0, u - mu);
  const double t = (u - mu) / sigma;
  return (u - mu) * norm_cdf(t) + sigma * norm_pdf(t);
}

}  // namespace

double ehvi_gaussian(double mu1, double sigma1, double mu2, double sigma2,
                     const std::vector<std::pair<double, double>>& front,
                     const std::pair<double, double>& ref) {
  if (sigma1 < 0.0 || sigma2 < 0.0) throw ValueError("ehvi needs sigma >= 0");
  const auto f = clipped_front(front, ref);
  const std::size_t k = f.size();
  double total = 0.0;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s <= k; ++s) {
    const double lo = (s == 0) ? neg_inf : f[s - 1].first;
    const double hi = (s == k) ? ref.first : f[s].first;
    const double u = (s == 0) ? ref.second : f[s - 1].second;
    const double width = psi(hi, mu1, sigma1) - psi(lo, mu1, sigma1);
    if (width <= 0.0) continue;
    total += width * psi(u, mu2, sigma2);
  }
  return total < 0.0 ? 0.0 : total;
}

double ehvi(const GpModel& model_f1, const GpModel& model_f2,
            const std::vector<double>& x,
            const std::vector<std::pair<double, double>>& front,
            const std::pair<double, double>& ref) {
  const GpModel::Prediction p1 = model_f1.predict(x);
  const GpModel::Prediction p2 = model_f2.predict(x);
  return ehvi_gaussian(p1.mean, std::sqrt(p1.var), p2.mean, std::sqrt(p2.var),
                       front, ref);
}

std::vector<std::vector<double>> latin_hypercube(int dims, int count, Rng& rng) {
  if (dims < 1 || count < 1) throw ValueError("latin_hypercube needs dims, count >= 1");
  std::vector<std::vector<double>> samples(
      static_cast<std::size_t>(count), std::vector<double>(static_cast<std::size_t>(dims)));
  std::vector<int> strata(static_cast<std::size_t>(count));
  for (int d = 0; d < dims; ++d) {
    for (int i = 0; i < count; ++i) strata[static_cast<std::size_t>(i)] = i;
    for (int i = count - 1; i > 0; --i) {
      const int j = rng.uniform_int(i + 1);
      std::swap(strata[static_cast<std::size_t>(i)], strata[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < count; ++i) {
      samples[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] =
          (strata[static_cast<std::size_t>(i)] + rng.uniform()) / count;
    }
  }
  return samples;
}

long long search_space_size(int dims, int n) {
  long long size = 1;
  for (int i = 0; i < dims; ++i) {
    if (size > (std::numeric_limits<long long>::max() / n)) {
      return std::numeric_limits<long long>::max();
    }
    size *= n;
  }
  return size;
}

namespace {

std::vector<int> nth_config(long long index, int dims, int n) {
  std::vector<int> kinds(static_cast<std::size_t>(dims));
  for (int d = dims - 1; d >= 0; --d) {
    kinds[static_cast<std::size_t>(d)] = static_cast<int>(index % n);
    index /= n;
  }
  return kinds;
}

}  // namespace

std::vector<double> propose(const GpModel& model_f1, const GpModel& model_f2,
                            const ParetoArchive& archive,
                            const std::pair<double, double>& ref, int dims, int n,
                            const std::set<std::vector<int>>& evaluated, int pool,
                            Rng& rng) {
  if (archive.empty()) {
    throw ValueError("propose requires a non-empty archive (run the initial design first)");
  }
  const long long space = search_space_size(dims, n);
  if (static_cast<long long>(evaluated.size()) >= space) {
    throw SearchExhaustedError("all " + std::to_string(space) +
                               " configurations already evaluated");
  }
  const auto front = archive.objective_pairs();

  std::vector<std::vector<double>> candidates;
  std::set<std::vector<int>> seen;
  auto consider = [&](std::vector<double> x) {
    const std::vector<int> kinds = decode_encoding(x, n);
    if (evaluated.count(kinds) || seen.count(kinds)) return;
    seen.insert(kinds);
    candidates.push_back(std::move(x));
  };

  for (int round = 0; round < 64 && candidates.empty(); ++round) {
    for (int q = 0; q < pool; ++q) {
      std::vector<double> x(static_cast<std::size_t>(dims));
      for (auto& v : x) v = rng.uniform();
      consider(std::move(x));
    }
    for (const auto& m : archive.members()) {
      for (int d = 0; d < dims; ++d) {
        for (const double delta : {-1.0 / n, 1.0 / n}) {
          std::vector<double> x = m.encoding;
          x[static_cast<std::size_t>(d)] =
              std::clamp(x[static_cast<std::size_t>(d)] + delta, 0.0, 1.0);
          consider(std::move(x));
        }
      }
    }
    if (!candidates.empty()) break;
    if (space <= kBruteForceLimit) {
      for (long long i = 0; i < space; ++i) {
        std::vector<int> kinds = nth_config(i, dims, n);
        if (!evaluated.count(kinds)) {
          candidates.push_back(encode_indices(kinds, n));
          break;
        }
      }
      break;
    }
  }
  if (candidates.empty()) {
    throw SearchExhaustedError("could not draw an unevaluated configuration");
  }

  std::size_t best = 0;
  double best_score = -1.0;
  double best_f2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = ehvi(model_f1, model_f2, candidates[i], front, ref);
    const double f2_mean = model_f2.predict(candidates[i]).mean;
    if (score > best_score || (score == best_score && f2_mean < best_f2)) {
      best = i;
      best_score = score;
      best_f2 = f2_mean;
    }
  }
  return candidates[best];
}

MoboResult mobo_run(int dims, int n, const Evaluator& evaluator,
                    const ScaleFactory& scale_factory, const MoboOptions& options) {
  if (dims < 1 || n < 1) throw ValueError("mobo_run needs dims, n >= 1");
  if (options.budget < 1) throw ValueError("mobo_run needs budget >= 1");

  MoboResult result;
  Rng rng(options.seed);
  const long long space = search_space_size(dims, n);

  int init = options.init > 0 ? options.init : std::max(2 * dims, 8);
  init = static_cast<int>(
      std::min<long long>(std::min(init, options.budget), space));

  // Initial design: Latin hypercube, deduplicated after decode.
  std::vector<std::vector<double>> init_x;
  std::set<std::vector<int>> evaluated;
  for (const auto& x : latin_hypercube(dims, init, rng)) {
    const std::vector<int> kinds = decode_encoding(x, n);
    if (evaluated.count(kinds)) continue;
    evaluated.insert(kinds);
    init_x.push_back(x);
  }

  std::vector<EvalPoint> init_points;
  for (const auto& x : init_x) {
    SearchObservation obs;
    obs.encoding = x;
    obs.kinds = decode_encoding(x, n);
    const EvalPoint ep = evaluator(obs.kinds);
    obs.f1 = ep.f1;
    obs.latency_ms = ep.latency_ms;
    obs.order = static_cast<int>(result.log.size());
    init_points.push_back(ep);
    result.log.push_back(std::move(obs));
  }

  const PenaltyFn penalty_fn = scale_factory(init_points);
  for (auto& obs : result.log) obs.f2 = penalty_fn(obs.latency_ms);

  // Reference point, fixed after the initial design. The 1.1x + 0.1 rule is
  // only a valid upper bound for maxima > -1; the max()+0.1 guard keeps r
  // strictly worse even then.
  double max_f1 = result.log[0].f1, max_f2 = result.log[0].f2;
  for (const auto& obs : result.log) {
    max_f1 = std::max(max_f1, obs.f1);
    max_f2 = std::max(max_f2, obs.f2);
  }
  result.ref = {std::max(max_f1 * 1.1 + 0.1, max_f1 + 0.1),
                std::max(max_f2 * 1.1 + 0.1, max_f2 + 0.1)};

  for (const auto& obs : result.log) {
    result.archive.insert(obs);
    result.hv_trace.push_back(hypervolume_2d(result.archive.objective_pairs(), result.ref));
  }

  while (static_cast<int>(result.log.size()) < options.budget) {
    std::vector<std::vector<double>> xs;
    std::vector<double> y_f1, y_f2;
    for (const auto& obs : result.log) {
      xs.push_back(obs.encoding);
      y_f1.push_back(obs.f1);
      y_f2.push_back(obs.f2);
    }
    const GpModel g1 = GpModel::fit(xs, y_f1);
    const GpModel g2 = GpModel::fit(xs, y_f2);

    std::vector<double> x;
    try {
      x = propose(g1, g2, result.archive, result.ref, dims, n, evaluated,
                  options.pool, rng);
    } catch (const SearchExhaustedError&) {
      break;
    }

    SearchObservation obs;
    obs.encoding = x;
    obs.kinds = decode_encoding(x, n);
    evaluated.insert(obs.kinds);
    const EvalPoint ep = evaluator(obs.kinds);
    obs.f1 = ep.f1;
    obs.f2 = penalty_fn(ep.latency_ms);
    obs.latency_ms = ep.latency_ms;
    obs.order = static_cast<int>(result.log.size());
    result.archive.insert(obs);
    result.log.push_back(std::move(obs));
    result.hv_trace.push_back(hypervolume_2d(result.archive.objective_pairs(), result.ref));
  }
  return result;
}

BruteForceResult brute_force_pareto(int dims, int n, const Evaluator& evaluator,
                                    const PenaltyFn& penalty_fn, int workers) {
  const long long space = search_space_size(dims, n);
  if (space > kBruteForceLimit) {
    throw SpaceTooLargeError("exhaustive search refused: " + std::to_string(space) +
                                 " configurations exceed the limit of " +
                                 std::to_string(kBruteForceLimit),
                             space);
  }
  BruteForceResult result;
  result.evaluated = space;
  result.all.resize(static_cast<std::size_t>(space));
  parallel_for(static_cast<int>(space), workers, [&](int i) {
    SearchObservation obs;
    obs.kinds = nth_config(i, dims, n);
    obs.encoding = encode_indices(obs.kinds, n);
    const EvalPoint ep = evaluator(obs.kinds);
    obs.f1 = ep.f1;
    obs.f2 = penalty_fn(ep.latency_ms);
    obs.latency_ms = ep.latency_ms;
    obs.order = i;
    result.all[static_cast<std::size_t>(i)] = std::move(obs);
  });
  for (const auto& obs : result.all) result.archive.insert(obs);
  return result;
}

SearchObservation knee_select(const ParetoArchive& archive) {
  if (archive.empty()) throw ValueError("knee_select on an empty archive");
  const auto& members = archive.members();

  auto lowest_f2 = [&members]() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < members.size(); ++i) {
      if (members[i].f2 < members[best].f2 ||
          (members[i].f2 == members[best].f2 && members[i].f1 < members[best].f1)) {
        best = i;
      }
    }
    return members[best];
  };
  if (members.size() <= 2) return lowest_f2();

  double min1 = members[0].f1, max1 = members[0].f1;
  double min2 = members[0].f2, max2 = members[0].f2;
  for (const auto& m : members) {
    min1 = std::min(min1, m.f1);
    max1 = std::max(max1, m.f1);
    min2 = std::min(min2, m.f2);
    max2 = std::max(max2, m.f2);
  }
  const double r1 = max1 > min1 ? max1 - min1 : 1.0;
  const double r2 = max2 > min2 ? max2 - min2 : 1.0;
  auto norm = [&](const SearchObservation& m) {
    return std::pair<double, double>{(m.f1 - min1) / r1, (m.f2 - min2) / r2};
  };

  // Chord endpoints: the two extreme archive points (min f1 and min f2).
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].f1 < members[ia].f1 ||
        (members[i].f1 == members[ia].f1 && members[i].f2 < members[ia].f2)) {
      ia = i;
    }
    if (members[i].f2 < members[ib].f2 ||
        (members[i].f2 == members[ib].f2 && members[i].f1 < members[ib].f1)) {
      ib = i;
    }
  }
  const auto a = norm(members[ia]);
  const auto b = norm(members[ib]);
  const double len = std::hypot(b.first - a.first, b.second - a.second);
  if (len == 0.0) return lowest_f2();

  std::size_t best = 0;
  double best_dist = -1.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto p = norm(members[i]);
    const double cross = (b.first - a.first) * (p.second - a.second) -
                         (b.second - a.second) * (p.first - a.first);
    const double dist = std::abs(cross) / len;
    if (dist > best_dist ||
        (dist == best_dist && members[i].f2 < members[best].f2)) {
      best = i;
      best_dist = dist;
    }
  }
  return members[best];
}

SearchObservation least_latency_select(const ParetoArchive& archive) {
  if (archive.empty()) throw ValueError("least_latency_select on an empty archive");
  const auto& members = archive.members();
  std::size_t best = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].latency_ms < members[best].latency_ms ||
        (members[i].latency_ms == members[best].latency_ms &&
         members[i].f1 < members[best].f1)) {
      best = i;
    }
  }
  return members[best];
}

Evaluator make_stitched_evaluator(const Network& base,
                                  const SurrogateSet& surrogates,
                                  const LatencyProfile& profile,
                                  const Dataset& dataset, double base_val_psnr,
                                  const std::vector<std::string>& searchable_slots,
                                  const std::vector<BlockKind>& kind_table) {
  if (kind_table.empty() || kind_table[0] != BlockKind::Base) {
    throw ValueError("evaluator kind table must start with the base kind");
  }
  // The referenced base network and surrogate set must outlive the evaluator.
  const std::vector<int> val_idx = dataset.val_indices();
  const TensorPtr blurred = dataset.batch_blurred(val_idx);
  const TensorPtr sharp = dataset.batch_sharp(val_idx);
  const Network* base_ptr = &base;
  const SurrogateSet* surr_ptr = &surrogates;
  const LatencyProfile profile_copy = profile;
  const std::vector<std::string> slots = searchable_slots;
  const std::vector<BlockKind> table = kind_table;

  return [base_ptr, surr_ptr, profile_copy, slots, table, blurred, sharp,
          base_val_psnr](const std::vector<int>& kinds) {
    if (kinds.size() != slots.size()) {
      throw ValueError("evaluator got " + std::to_string(kinds.size()) +
                       " kinds for " + std::to_string(slots.size()) + " slots");
    }
    NetworkConfig target = base_ptr->config();
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const int idx = kinds[i];
      if (idx < 0 || idx >= static_cast<int>(table.size())) {
        throw ValueError("kind index " + std::to_string(idx) + " out of table range");
      }
      for (auto& s : target.slots) {
        if (s.id == slots[i]) {
          s.kind = table[static_cast<std::size_t>(idx)];
          if (s.kind != BlockKind::Base) s.repeat = 1;
        }
      }
    }
    const Network stitched = stitch(*base_ptr, *surr_ptr, target);
    const TensorPtr restored = stitched.forward(nullptr, blurred);
    EvalPoint ep;
    ep.f1 = base_val_psnr - batch_mean_psnr(*restored, *sharp);
    ep.latency_ms = global_latency(profile_copy, stitched.config());
    return ep;
  };
}

}  // namespace blocksurgeon
