#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blocksurgeon/tensor.hpp"

namespace blocksurgeon {

enum class BlurKind { Identity, Gaussian, Box, LinearMotion };

const char* to_string(BlurKind kind);
BlurKind blur_kind_from_string(const std::string& name);

struct DatasetSpec {
  int count = 96;
  int image_size = 32;  // square
  int channels = 1;
  std::vector<BlurKind> blur_kinds = {BlurKind::Gaussian, BlurKind::Box,
                                      BlurKind::LinearMotion};
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSpec&) const = default;
};

// Index-aligned sharp/blurred pairs, pixels in [0,1], stored per image CHW.
struct Dataset {
  DatasetSpec spec;
  std::vector<std::vector<double>> sharp;
  std::vector<std::vector<double>> blurred;

  int count() const { return static_cast<int>(sharp.size()); }
  int image_numel() const { return spec.channels * spec.image_size * spec.image_size; }

  TensorPtr batch_sharp(const std::vector<int>& indices) const;
  TensorPtr batch_blurred(const std::vector<int>& indices) const;

  // Fixed 75/25 split: validation is the trailing quarter.
  std::vector<int> train_indices() const;
  std::vector<int> val_indices() const;
  Dataset subset(const std::vector<int>& indices) const;
};

// Sharp images are seeded compositions of blobs, edges and checkerboards;
// blurred = sharp (*) kernel + Gaussian noise, clamped to [0,1].
Dataset generate_dataset(const DatasetSpec& spec);

// Deterministic seeded subset of ceil(fraction * N) pairs.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

// On-disk form: JSON manifest + raw little-endian float32 blobs.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace blocksurgeon
