#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/distill.hpp"
#include "blocksurgeon/latency.hpp"
#include "blocksurgeon/network.hpp"
#include "blocksurgeon/rng.hpp"

namespace blocksurgeon {

// Equal-interval partitioning of [0,1]: index = min(floor(x*n), n-1).
std::vector<int> decode_encoding(const std::vector<double>& x, int n);
// Interval midpoints: x_i = (index + 0.5) / n; decode(encode(idx)) == idx.
std::vector<double> encode_indices(const std::vector<int>& indices, int n);

// One evaluated configuration. f1 = accuracy loss in dB (signed),
// f2 = latency penalty; both minimized.
struct SearchObservation {
  std::vector<double> encoding;
  std::vector<int> kinds;  // kind index per searchable slot
  double f1 = 0.0;
  double f2 = 0.0;
  double latency_ms = 0.0;
  int order = 0;  // evaluation order stamp
};

// Strict Pareto dominance, minimization in both objectives.
bool dominates(const std::pair<double, double>& a, const std::pair<double, double>& b);

// Running non-dominated set; duplicates of an existing objective pair keep
// the earlier observation.
class ParetoArchive {
 public:
  bool insert(const SearchObservation& obs);
  const std::vector<SearchObservation>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  std::vector<std::pair<double, double>> objective_pairs() const;

 private:
  std::vector<SearchObservation> members_;
};

// Area dominated by the front within the reference box; points not strictly
// dominating ref contribute nothing.
double hypervolume_2d(const std::vector<std::pair<double, double>>& front,
                      const std::pair<double, double>& ref);

// Isotropic squared-exponential GP on standardized targets; hyperparameters
// by grid-searched log marginal likelihood.
class GpModel {
 public:
  struct Hyper {
    double lengthscale = 0.2;
    double amplitude2 = 1.0;
    double noise2 = 1e-6;
  };
  struct Prediction {
    double mean = 0.0;
    double var = 0.0;  // includes the noise term; >= 0
  };

  static GpModel fit(const std::vector<std::vector<double>>& inputs,
                     const std::vector<double>& targets);
  static GpModel fit_fixed(const std::vector<std::vector<double>>& inputs,
                           const std::vector<double>& targets, const Hyper& hyper);

  Prediction predict(const std::vector<double>& x) const;

  const Hyper& hyper() const { return hyper_; }
  double target_mean() const { return y_mean_; }
  double target_std() const { return y_std_; }

 private:
  std::vector<std::vector<double>> x_;
  std::vector<double> chol_;   // lower-triangular factor of K + noise I
  std::vector<double> alpha_;  // (K + noise I)^-1 y_std
  Hyper hyper_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  int n_ = 0;
};

// Exact 2-D expected hypervolume improvement for independent Gaussian
// objectives (minimization); sigma = 0 degenerates to the plain improvement.
double ehvi_gaussian(double mu1, double sigma1, double mu2, double sigma2,
                     const std::vector<std::pair<double, double>>& front,
                     const std::pair<double, double>& ref);

double ehvi(const GpModel& model_f1, const GpModel& model_f2,
            const std::vector<double>& x,
            const std::vector<std::pair<double, double>>& front,
            const std::pair<double, double>& ref);

// count x dims matrix of stratified samples in [0,1)^dims.
std::vector<std::vector<double>> latin_hypercube(int dims, int count, Rng& rng);

// Objective evaluation: f1 plus raw latency; the penalty scale is applied by
// the caller once the initial design fixes it.
struct EvalPoint {
  double f1 = 0.0;
  double latency_ms = 0.0;
};
using Evaluator = std::function<EvalPoint(const std::vector<int>& kinds)>;
using PenaltyFn = std::function<double(double latency_ms)>;
// Built after the initial design from its accuracy losses.
using ScaleFactory = std::function<PenaltyFn(const std::vector<EvalPoint>&)>;

// Candidate pool = `pool` uniform encodings + +-1/n per-dimension
// perturbations of archive members; already-evaluated configs are excluded;
// ties on EHVI go to the lower predicted f2.
std::vector<double> propose(const GpModel& model_f1, const GpModel& model_f2,
                            const ParetoArchive& archive,
                            const std::pair<double, double>& ref, int dims, int n,
                            const std::set<std::vector<int>>& evaluated, int pool,
                            Rng& rng);

struct MoboOptions {
  int budget = 120;     // total evaluations including the initial design
  int init = 0;         // 0 -> max(2*dims, 8)
  int pool = 64;
  std::uint64_t seed = 0;
};

struct MoboResult {
  std::vector<SearchObservation> log;  // every evaluation in order
  ParetoArchive archive;
  std::pair<double, double> ref{1.0, 1.0};
  std::vector<double> hv_trace;  // archive hypervolume after each evaluation
  PenaltyScale scale_used;       // filled by callers that track it
};

MoboResult mobo_run(int dims, int n, const Evaluator& evaluator,
                    const ScaleFactory& scale_factory, const MoboOptions& options);

long long search_space_size(int dims, int n);

inline constexpr long long kBruteForceLimit = 100000;

struct BruteForceResult {
  ParetoArchive archive;
  long long evaluated = 0;
  std::vector<SearchObservation> all;  // every configuration, enumeration order
};

// Exhaustive oracle; refuses (SpaceTooLargeError carrying the count) beyond
// kBruteForceLimit configurations.
BruteForceResult brute_force_pareto(int dims, int n, const Evaluator& evaluator,
                                    const PenaltyFn& penalty_fn, int workers = 0);

// Knee of the min-max normalized front: maximum perpendicular distance to the
// chord between the extreme points; archives of size <= 2 and ties fall back
// to the lowest f2.
SearchObservation knee_select(const ParetoArchive& archive);
// Archive member with minimum raw latency; ties go to the lower f1.
SearchObservation least_latency_select(const ParetoArchive& archive);

// Plug-and-play evaluator: stitch, forward on the fixed validation split,
// PSNR loss vs the base network, additive latency. No parameter updates.
// kind_table maps decoded indices to block kinds; index 0 must be Base.
Evaluator make_stitched_evaluator(const Network& base,
                                  const SurrogateSet& surrogates,
                                  const LatencyProfile& profile,
                                  const Dataset& dataset, double base_val_psnr,
                                  const std::vector<std::string>& searchable_slots,
                                  const std::vector<BlockKind>& kind_table);

}  // namespace blocksurgeon
