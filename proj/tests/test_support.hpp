#pragma once

// Shared test fixtures and independent oracles. Everything here must stay
// independent of the implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "blocksurgeon/network.hpp"
#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/tensor.hpp"

namespace bs_test {

using namespace blocksurgeon;

inline TensorPtr random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
  auto t = tensor(std::move(shape));
  for (auto& v : t->data) v = rng.uniform(lo, hi);
  return t;
}

// Plain six-loop convolution, zero padding, no cleverness.
inline TensorPtr naive_conv2d(const TensorPtr& x, const TensorPtr& k,
                              const TensorPtr& bias, int stride, int padding) {
  const int B = x->dim(0), Ci = x->dim(1), H = x->dim(2), W = x->dim(3);
  const int Co = k->dim(0), Kh = k->dim(2), Kw = k->dim(3);
  const int Ho = (H + 2 * padding - Kh) / stride + 1;
  const int Wo = (W + 2 * padding - Kw) / stride + 1;
  auto out = tensor({B, Co, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bias->data[(std::size_t)co];
          for (int ci = 0; ci < Ci; ++ci)
            for (int kh = 0; kh < Kh; ++kh)
              for (int kw = 0; kw < Kw; ++kw) {
                const int ih = oh * stride - padding + kh;
                const int iw = ow * stride - padding + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x->at4(b, ci, ih, iw) * k->at4(co, ci, kh, kw);
              }
          out->at4(b, co, oh, ow) = acc;
        }
  return out;
}

inline TensorPtr naive_depthwise(const TensorPtr& x, const TensorPtr& k,
                                 const TensorPtr& bias, int padding) {
  const int B = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  const int Kh = k->dim(2), Kw = k->dim(3);
  const int Ho = H + 2 * padding - Kh + 1;
  const int Wo = W + 2 * padding - Kw + 1;
  auto out = tensor({B, C, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bias->data[(std::size_t)c];
          for (int kh = 0; kh < Kh; ++kh)
            for (int kw = 0; kw < Kw; ++kw) {
              const int ih = oh - padding + kh;
              const int iw = ow - padding + kw;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += x->at4(b, c, ih, iw) * k->at4(c, 0, kh, kw);
            }
          out->at4(b, c, oh, ow) = acc;
        }
  return out;
}

inline double max_abs_diff(const TensorPtr& a, const TensorPtr& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    m = std::max(m, std::abs(a->data[i] - b->data[i]));
  }
  return m;
}

// rel < tol, or abs < abs_tol near zero.
inline bool grad_close(double got, double want, double rel_tol = 1e-4,
                       double abs_tol = 1e-7) {
  const double diff = std::abs(got - want);
  if (diff <= abs_tol) return true;
  return diff <= rel_tol * std::max(std::abs(got), std::abs(want));
}

// Jitters every parameter so zero-initialized projections become active.
inline void randomize_parameters(Network& net, std::uint64_t seed, double mag = 0.1) {
  Rng rng(seed);
  for (const auto& nt : net.parameters()) {
    for (auto& v : nt.value->data) v += rng.uniform(-mag, mag);
  }
}

// Brute-force non-dominated filter (minimization).
inline std::vector<std::pair<double, double>> nondominated_filter(
    const std::vector<std::pair<double, double>>& pts) {
  std::vector<std::pair<double, double>> front;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      const bool leq = q.first <= p.first && q.second <= p.second;
      const bool strict = q.first < p.first || q.second < p.second;
      if (leq && strict) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  return front;
}

// Monte-Carlo area of the dominated region inside the reference box.
inline double mc_hypervolume(const std::vector<std::pair<double, double>>& front,
                             std::pair<double, double> ref, int samples, Rng& rng) {
  double lo1 = ref.first, lo2 = ref.second;
  for (const auto& p : front) {
    lo1 = std::min(lo1, p.first);
    lo2 = std::min(lo2, p.second);
  }
  const double area = (ref.first - lo1) * (ref.second - lo2);
  if (area <= 0.0) return 0.0;
  int hit = 0;
  for (int s = 0; s < samples; ++s) {
    const double z1 = rng.uniform(lo1, ref.first);
    const double z2 = rng.uniform(lo2, ref.second);
    for (const auto& p : front) {
      if (p.first <= z1 && p.second <= z2) {
        ++hit;
        break;
      }
    }
  }
  return area * hit / samples;
}

// Hypervolume improvement of candidate y over a front, by direct geometry:
// integrates the dominated-but-new region with a sweep over f1 breakpoints.
inline double improvement_over_front(
    const std::vector<std::pair<double, double>>& front, std::pair<double, double> y,
    std::pair<double, double> ref) {
  if (y.first >= ref.first || y.second >= ref.second) return 0.0;
  // Breakpoints between y1 and r1.
  std::vector<double> xs{y.first, ref.first};
  for (const auto& p : front) {
    if (p.first > y.first && p.first < ref.first) xs.push_back(p.first);
  }
  std::sort(xs.begin(), xs.end());
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double x_lo = xs[i], x_hi = xs[i + 1];
    // Existing staircase height on this strip: lowest f2 among points with
    // f1 <= x_lo; capped at r2.
    double top = ref.second;
    for (const auto& p : front) {
      if (p.first <= x_lo && p.second < ref.second) top = std::min(top, p.second);
    }
    const double bottom = y.second;
    if (top > bottom) area += (x_hi - x_lo) * (top - bottom);
  }
  return area;
}

}  // namespace bs_test
