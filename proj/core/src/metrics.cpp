#include "blocksurgeon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "blocksurgeon/errors.hpp"

namespace blocksurgeon {

double mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("mse shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.numel());
}

namespace {

double psnr_from_mse(double m, double max_val) {
  if (m <= 0.0) return kPsnrCapDb;
  const double v = 10.0 * std::log10(max_val * max_val / m);
  return std::min(v, kPsnrCapDb);
}

}  // namespace

double psnr(const Tensor& pred, const Tensor& target, double max_val) {
  if (max_val <= 0.0) throw ValueError("psnr max_val must be > 0");
  return psnr_from_mse(mse(pred, target), max_val);
}

double batch_mean_psnr(const Tensor& pred, const Tensor& target, double max_val) {
  if (pred.shape != target.shape) {
    throw ShapeError("psnr shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  }
  if (pred.shape.size() != 4) throw ShapeError("batch_mean_psnr expects BCHW");
  const int B = pred.dim(0);
  const std::size_t per = pred.data.size() / static_cast<std::size_t>(B);
  double acc = 0.0;
  for (int b = 0; b < B; ++b) {
    double m = 0.0;
    const std::size_t base = static_cast<std::size_t>(b) * per;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = pred.data[base + i] - target.data[base + i];
      m += d * d;
    }
    acc += psnr_from_mse(m / static_cast<double>(per), max_val);
  }
  return acc / B;
}

double ssim(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("ssim shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  }
  if (pred.shape.size() != 4) throw ShapeError("ssim expects BCHW");
  constexpr int kWin = 7;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int B = pred.dim(0), C = pred.dim(1), H = pred.dim(2), W = pred.dim(3);
  if (H < kWin || W < kWin) {
    throw ShapeError("ssim needs images of at least " + std::to_string(kWin) + "x" +
                     std::to_string(kWin));
  }
  const double n = static_cast<double>(kWin * kWin);
  double acc = 0.0;
  long count = 0;
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int oh = 0; oh + kWin <= H; ++oh) {
        for (int ow = 0; ow + kWin <= W; ++ow) {
          double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
          for (int i = 0; i < kWin; ++i) {
            for (int j = 0; j < kWin; ++j) {
              const double x = pred.at4(b, c, oh + i, ow + j);
              const double y = target.at4(b, c, oh + i, ow + j);
              sx += x;
              sy += y;
              sxx += x * x;
              syy += y * y;
              sxy += x * y;
            }
          }
          const double mx = sx / n, my = sy / n;
          const double vx = sxx / n - mx * mx;
          const double vy = syy / n - my * my;
          const double cov = sxy / n - mx * my;
          acc += ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) /
                 ((mx * mx + my * my + kC1) * (vx + vy + kC2));
          ++count;
        }
      }
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace blocksurgeon
