#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "blocksurgeon/errors.hpp"

namespace blocksurgeon {

// Dense row-major tensor of 64-bit floats. Image data is laid out
// batch x channels x height x width; parameters may be flat.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor(std::vector<int> s, double fill);
  Tensor(std::vector<int> s, std::vector<double> d);

  int numel() const { return static_cast<int>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& at4(int b, int c, int h, int w) {
    return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at4(int b, int c, int h, int w) const {
    return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor(std::vector<int> shape, double fill = 0.0);
TensorPtr tensor(std::vector<int> shape, std::vector<double> data);
TensorPtr scalar_tensor(double value);

// Gradients keyed by tensor identity. Tensors the loss never touched read
// back as exact zeros.
class Gradients {
 public:
  bool contains(const TensorPtr& t) const { return slots_.count(t.get()) != 0; }

  // Zero-filled vector when the tensor was not reached by backpropagation.
  std::vector<double> get(const TensorPtr& t) const;

  // Accumulation slot, created zero-filled on first use.
  std::vector<double>& slot(const TensorPtr& t);

  // Existing gradient; throws if absent.
  const std::vector<double>& ref(const TensorPtr& t) const;

 private:
  std::unordered_map<const Tensor*, std::vector<double>> slots_;
};

// Ordered record of primitive operations. Replaying it back to front visits
// nodes in reverse topological order because ops append in execution order.
class Tape {
 public:
  using BackwardFn = std::function<void(Gradients&)>;

  void record(TensorPtr output, BackwardFn fn) {
    nodes_.push_back({std::move(output), std::move(fn)});
  }

  // Gradient of a scalar loss w.r.t. every recorded tensor. Gradients
  // accumulate across fan-out.
  Gradients backward(const TensorPtr& loss) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    TensorPtr output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

// Primitive ops. Passing tape == nullptr runs forward-only.
TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride = 1, int padding = 0);
TensorPtr depthwise_conv2d(Tape* tape, const TensorPtr& input,
                           const TensorPtr& kernel, const TensorPtr& bias,
                           int padding = 0);
TensorPtr layer_norm_channels(Tape* tape, const TensorPtr& input,
                              const TensorPtr& gain, const TensorPtr& offset,
                              double eps = 1e-6);
// Elementwise product of the two channel halves: B x 2C x H x W -> B x C x H x W.
TensorPtr simple_gate(Tape* tape, const TensorPtr& input);
// Mean of the two channel halves; the linear stand-in for simple_gate used by
// passes that must avoid multiplicative blow-up.
TensorPtr channel_halves_mean(Tape* tape, const TensorPtr& input);
TensorPtr global_avg_pool(Tape* tape, const TensorPtr& input);
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// b may be same-shape, a single element, or a channel vector shaped
// [1|B, C, 1, 1] broadcast over batch and spatial dims.
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double s);
// relu'(0) is defined as 0.
TensorPtr relu(Tape* tape, const TensorPtr& a);
TensorPtr upsample_nearest2x(Tape* tape, const TensorPtr& a);
TensorPtr mse_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& target);
TensorPtr reduce_sum(Tape* tape, const TensorPtr& a);

using LossFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Hessian-vector product by central differences of the gradient:
// (grad(theta + eps v) - grad(theta - eps v)) / (2 eps),
// eps = 1e-4 / max(1, |v|_inf).
std::vector<double> hvp(const GradFn& grad_at, const std::vector<double>& theta,
                        const std::vector<double>& v);

// Central-difference gradient; the test oracle for reverse mode.
std::vector<double> finite_diff_grad(const LossFn& loss,
                                     const std::vector<double>& theta,
                                     double h);

}  // namespace blocksurgeon
