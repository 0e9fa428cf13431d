#pragma once

#include "blocksurgeon/tensor.hpp"

namespace blocksurgeon {

// PSNR is capped at 100 dB so the zero-MSE sentinel stays the maximum.
inline constexpr double kPsnrCapDb = 100.0;

double mse(const Tensor& pred, const Tensor& target);

// 10 * log10(max_val^2 / MSE) over all elements, capped at 100 dB.
double psnr(const Tensor& pred, const Tensor& target, double max_val = 1.0);

// Mean of per-image PSNR over a BCHW batch pair.
double batch_mean_psnr(const Tensor& pred, const Tensor& target, double max_val = 1.0);

// Mean local SSIM with a 7x7 uniform window, C1=0.01^2, C2=0.03^2 for unit
// dynamic range, averaged over valid windows, channels and batch.
double ssim(const Tensor& pred, const Tensor& target);

}  // namespace blocksurgeon
