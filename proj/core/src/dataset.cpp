#include "blocksurgeon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "blocksurgeon/rng.hpp"
#include "io_util.hpp"
#include "json.hpp"

namespace blocksurgeon {

namespace {

constexpr const char* kBlurNames[] = {"identity", "gaussian", "box", "linear-motion"};

struct Kernel {
  int size = 1;
  std::vector<double> w;  // size x size, sums to 1
};

Kernel gaussian_kernel(double sigma) {
  Kernel k;
  k.size = 5;
  k.w.resize(25);
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double di = i - 2.0, dj = j - 2.0;
      const double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      k.w[static_cast<std::size_t>(i * 5 + j)] = v;
      total += v;
    }
  }
  for (auto& v : k.w) v /= total;
  return k;
}

Kernel box_kernel(int size) {
  Kernel k;
  k.size = size;
  k.w.assign(static_cast<std::size_t>(size * size), 1.0 / (size * size));
  return k;
}

Kernel motion_kernel(int length, double angle) {
  Kernel k;
  k.size = length;
  k.w.assign(static_cast<std::size_t>(length * length), 0.0);
  const double cx = (length - 1) / 2.0, cy = (length - 1) / 2.0;
  const double dx = std::cos(angle), dy = std::sin(angle);
  const int steps = 4 * length;
  for (int s = 0; s <= steps; ++s) {
    const double t = (static_cast<double>(s) / steps - 0.5) * (length - 1);
    const double x = cx + t * dx, y = cy + t * dy;
    const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
    const double fx = x - xi, fy = y - yi;
    // Bilinear splat onto the grid.
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        const int gx = xi + dj, gy = yi + di;
        if (gx < 0 || gx >= length || gy < 0 || gy >= length) continue;
        const double wgt = (di ? fy : 1.0 - fy) * (dj ? fx : 1.0 - fx);
        k.w[static_cast<std::size_t>(gy * length + gx)] += wgt;
      }
    }
  }
  double total = 0.0;
  for (double v : k.w) total += v;
  for (auto& v : k.w) v /= total;
  return k;
}

Kernel identity_kernel() {
  Kernel k;
  k.size = 1;
  k.w = {1.0};
  return k;
}

// Convolution with partition-of-unity border handling: out-of-bounds kernel
// mass is renormalized away so flat regions stay flat.
void convolve_channel(const std::vector<double>& in, std::vector<double>& out,
                      int size, const Kernel& k) {
  const int r = k.size / 2;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc = 0.0, mass = 0.0;
      for (int i = 0; i < k.size; ++i) {
        const int sy = y + i - r;
        if (sy < 0 || sy >= size) continue;
        for (int j = 0; j < k.size; ++j) {
          const int sx = x + j - r;
          if (sx < 0 || sx >= size) continue;
          const double w = k.w[static_cast<std::size_t>(i * k.size + j)];
          acc += w * in[static_cast<std::size_t>(sy * size + sx)];
          mass += w;
        }
      }
      out[static_cast<std::size_t>(y * size + x)] = mass > 0.0 ? acc / mass : 0.0;
    }
  }
}

void compose_sharp_channel(Rng& rng, std::vector<double>& img, int size) {
  const double base = rng.uniform(0.2, 0.8);
  std::fill(img.begin(), img.end(), base);

  const int blobs = 2 + rng.uniform_int(4);
  for (int n = 0; n < blobs; ++n) {
    const double cx = rng.uniform(0.0, size - 1.0);
    const double cy = rng.uniform(0.0, size - 1.0);
    const double sigma = rng.uniform(2.0, 6.0);
    const double amp = rng.uniform(-0.6, 0.6);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img[static_cast<std::size_t>(y * size + x)] += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
  }

  const int edges = 1 + rng.uniform_int(2);
  for (int n = 0; n < edges; ++n) {
    const double theta = rng.uniform(0.0, 3.14159265358979323846);
    const double nx = std::cos(theta), ny = std::sin(theta);
    const double off = rng.uniform(0.25, 0.75) * size;
    const double amp = rng.uniform(-0.5, 0.5);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (nx * x + ny * y > off) img[static_cast<std::size_t>(y * size + x)] += amp;
      }
    }
  }

  if (rng.uniform() < 0.5) {
    const int period = 2 + rng.uniform_int(6);
    const int phase = rng.uniform_int(period);
    const double amp = rng.uniform(0.2, 0.5);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const int cell = ((x + phase) / period + (y + phase) / period) % 2;
        img[static_cast<std::size_t>(y * size + x)] += cell ? amp : -amp;
      }
    }
  }

  double lo = img[0], hi = img[0];
  for (double v : img) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (auto& v : img) v = (v - lo) / (hi - lo);
  } else {
    std::fill(img.begin(), img.end(), 0.5);
  }
}

}  // namespace

const char* to_string(BlurKind kind) { return kBlurNames[static_cast<int>(kind)]; }

BlurKind blur_kind_from_string(const std::string& name) {
  for (int i = 0; i < 4; ++i) {
    if (name == kBlurNames[i]) return static_cast<BlurKind>(i);
  }
  throw ParseError("unknown blur kind '" + name + "'");
}

TensorPtr Dataset::batch_sharp(const std::vector<int>& indices) const {
  const int s = spec.image_size;
  auto t = tensor({static_cast<int>(indices.size()), spec.channels, s, s});
  std::size_t off = 0;
  for (int idx : indices) {
    const auto& img = sharp[static_cast<std::size_t>(idx)];
    std::copy(img.begin(), img.end(), t->data.begin() + static_cast<std::ptrdiff_t>(off));
    off += img.size();
  }
  return t;
}

TensorPtr Dataset::batch_blurred(const std::vector<int>& indices) const {
  const int s = spec.image_size;
  auto t = tensor({static_cast<int>(indices.size()), spec.channels, s, s});
  std::size_t off = 0;
  for (int idx : indices) {
    const auto& img = blurred[static_cast<std::size_t>(idx)];
    std::copy(img.begin(), img.end(), t->data.begin() + static_cast<std::ptrdiff_t>(off));
    off += img.size();
  }
  return t;
}

std::vector<int> Dataset::train_indices() const {
  const int n = count();
  const int val = (n + 3) / 4;  // ceil(n/4)
  std::vector<int> idx;
  for (int i = 0; i < n - val; ++i) idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::val_indices() const {
  const int n = count();
  const int val = (n + 3) / 4;
  std::vector<int> idx;
  for (int i = n - val; i < n; ++i) idx.push_back(i);
  return idx;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.spec = spec;
  out.spec.count = static_cast<int>(indices.size());
  for (int i : indices) {
    out.sharp.push_back(sharp[static_cast<std::size_t>(i)]);
    out.blurred.push_back(blurred[static_cast<std::size_t>(i)]);
  }
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.count < 1) throw ValueError("dataset count must be >= 1");
  if (spec.image_size < 8) throw ValueError("dataset image_size must be >= 8");
  if (spec.channels < 1) throw ValueError("dataset channels must be >= 1");
  if (spec.blur_kinds.empty()) throw ValueError("dataset needs at least one blur kind");
  if (spec.noise_sigma < 0.0) throw ValueError("noise sigma must be >= 0");

  Dataset ds;
  ds.spec = spec;
  const int s = spec.image_size;
  const int ch_numel = s * s;

  for (int i = 0; i < spec.count; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    std::vector<double> sharp_img(static_cast<std::size_t>(spec.channels * ch_numel));
    std::vector<double> blurred_img(sharp_img.size());

    const BlurKind kind =
        spec.blur_kinds[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(spec.blur_kinds.size())))];
    Kernel k;
    switch (kind) {
      case BlurKind::Identity:
        k = identity_kernel();
        break;
      case BlurKind::Gaussian:
        k = gaussian_kernel(rng.uniform(0.6, 1.6));
        break;
      case BlurKind::Box:
        k = box_kernel(rng.uniform() < 0.5 ? 3 : 5);
        break;
      case BlurKind::LinearMotion:
        k = motion_kernel(rng.uniform() < 0.5 ? 5 : 7, rng.uniform(0.0, 3.14159265358979323846));
        break;
    }

    for (int c = 0; c < spec.channels; ++c) {
      std::vector<double> plane(static_cast<std::size_t>(ch_numel));
      compose_sharp_channel(rng, plane, s);
      std::vector<double> blurred_plane(plane.size());
      convolve_channel(plane, blurred_plane, s, k);
      if (spec.noise_sigma > 0.0) {
        for (auto& v : blurred_plane) v += spec.noise_sigma * rng.normal();
      }
      for (auto& v : blurred_plane) v = std::clamp(v, 0.0, 1.0);
      std::copy(plane.begin(), plane.end(),
                sharp_img.begin() + static_cast<std::ptrdiff_t>(c * ch_numel));
      std::copy(blurred_plane.begin(), blurred_plane.end(),
                blurred_img.begin() + static_cast<std::ptrdiff_t>(c * ch_numel));
    }
    ds.sharp.push_back(std::move(sharp_img));
    ds.blurred.push_back(std::move(blurred_img));
  }
  return ds;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ValueError("subsample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const int n = dataset.count();
  const int k = static_cast<int>(std::ceil(fraction * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> chosen(order.begin(), order.begin() + k);
  std::sort(chosen.begin(), chosen.end());
  return dataset.subset(chosen);
}

namespace {

std::string floats_to_blob(const std::vector<std::vector<double>>& images) {
  std::string bytes;
  for (const auto& img : images) {
    for (double v : img) {
      const float f = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      bytes.append(buf, 4);
    }
  }
  return bytes;
}

std::vector<std::vector<double>> blob_to_floats(const std::string& bytes, int count,
                                                int numel, const std::string& what) {
  if (bytes.size() != static_cast<std::size_t>(count) * static_cast<std::size_t>(numel) * 4) {
    throw ParseError(what + " blob has " + std::to_string(bytes.size()) +
                     " bytes, expected " + std::to_string(4ll * count * numel));
  }
  std::vector<std::vector<double>> images;
  std::size_t off = 0;
  for (int i = 0; i < count; ++i) {
    std::vector<double> img(static_cast<std::size_t>(numel));
    for (int j = 0; j < numel; ++j) {
      float f;
      std::memcpy(&f, bytes.data() + off, 4);
      img[static_cast<std::size_t>(j)] = static_cast<double>(f);
      off += 4;
    }
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  io::ensure_dir(dir);
  nlohmann::ordered_json j;
  j["count"] = dataset.count();
  j["image_size"] = dataset.spec.image_size;
  j["channels"] = dataset.spec.channels;
  j["blur_kinds"] = nlohmann::ordered_json::array();
  for (BlurKind k : dataset.spec.blur_kinds) j["blur_kinds"].push_back(to_string(k));
  j["noise_sigma"] = dataset.spec.noise_sigma;
  j["seed"] = dataset.spec.seed;
  io::write_file(io::join(dir, "manifest.json"), j.dump(2) + "\n");
  io::write_file(io::join(dir, "sharp.f32"), floats_to_blob(dataset.sharp));
  io::write_file(io::join(dir, "blurred.f32"), floats_to_blob(dataset.blurred));
}

Dataset load_dataset(const std::string& dir) {
  const std::string text = io::read_file(io::join(dir, "manifest.json"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset manifest is not valid JSON: ") + e.what());
  }
  Dataset ds;
  try {
    ds.spec.count = j.at("count").get<int>();
    ds.spec.image_size = j.at("image_size").get<int>();
    ds.spec.channels = j.at("channels").get<int>();
    ds.spec.blur_kinds.clear();
    for (const auto& k : j.at("blur_kinds")) {
      ds.spec.blur_kinds.push_back(blur_kind_from_string(k.get<std::string>()));
    }
    ds.spec.noise_sigma = j.at("noise_sigma").get<double>();
    ds.spec.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset manifest field error: ") + e.what());
  }
  const int numel = ds.spec.channels * ds.spec.image_size * ds.spec.image_size;
  ds.sharp = blob_to_floats(io::read_file(io::join(dir, "sharp.f32")), ds.spec.count,
                            numel, "sharp");
  ds.blurred = blob_to_floats(io::read_file(io::join(dir, "blurred.f32")), ds.spec.count,
                              numel, "blurred");
  return ds;
}

}  // namespace blocksurgeon
