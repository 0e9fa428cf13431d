#include "blocksurgeon/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

namespace blocksurgeon {

namespace {

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

void require_4d(const TensorPtr& t, const char* what) {
  if (t->shape.size() != 4) {
    throw ShapeError(std::string(what) + " must be 4-D (BCHW), got " + t->shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> s, double fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != static_cast<int>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str());
  }
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorPtr tensor(std::vector<int> shape, double fill) {
  return std::make_shared<Tensor>(std::move(shape), fill);
}

TensorPtr tensor(std::vector<int> shape, std::vector<double> data) {
  return std::make_shared<Tensor>(std::move(shape), std::move(data));
}

TensorPtr scalar_tensor(double value) {
  return tensor({1}, std::vector<double>{value});
}

std::vector<double> Gradients::get(const TensorPtr& t) const {
  auto it = slots_.find(t.get());
  if (it != slots_.end()) return it->second;
  return std::vector<double>(static_cast<std::size_t>(t->numel()), 0.0);
}

std::vector<double>& Gradients::slot(const TensorPtr& t) {
  auto it = slots_.find(t.get());
  if (it == slots_.end()) {
    it = slots_.emplace(t.get(), std::vector<double>(static_cast<std::size_t>(t->numel()), 0.0)).first;
  }
  return it->second;
}

const std::vector<double>& Gradients::ref(const TensorPtr& t) const {
  auto it = slots_.find(t.get());
  if (it == slots_.end()) throw ValueError("no gradient recorded for tensor");
  return it->second;
}

Gradients Tape::backward(const TensorPtr& loss) const {
  if (loss->numel() != 1) {
    throw ValueError("backward needs a scalar loss, got shape " + loss->shape_str());
  }
  Gradients grads;
  grads.slot(loss)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!grads.contains(it->output)) continue;  // unused branch, grad stays zero
    it->fn(grads);
  }
  return grads;
}

TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding) {
  require_4d(input, "conv2d input");
  require_4d(kernel, "conv2d kernel");
  if (stride < 1) throw ValueError("conv2d stride must be >= 1");
  if (padding < 0) throw ValueError("conv2d padding must be >= 0");
  const int B = input->dim(0), Ci = input->dim(1), H = input->dim(2), W = input->dim(3);
  const int Co = kernel->dim(0), Kh = kernel->dim(2), Kw = kernel->dim(3);
  if (kernel->dim(1) != Ci) {
    throw ShapeError("conv2d channel mismatch: input " + input->shape_str() +
                     " vs kernel " + kernel->shape_str());
  }
  if (bias->numel() != Co) {
    throw ShapeError("conv2d bias length " + std::to_string(bias->numel()) +
                     " does not match " + std::to_string(Co) + " output channels");
  }
  const int Ho = (H + 2 * padding - Kh) / stride + 1;
  const int Wo = (W + 2 * padding - Kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) {
    throw ShapeError("conv2d output would be empty for input " + input->shape_str());
  }

  auto out = tensor({B, Co, Ho, Wo});
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Co; ++co) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bias->data[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < Ci; ++ci) {
            for (int kh = 0; kh < Kh; ++kh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              for (int kw = 0; kw < Kw; ++kw) {
                const int iw = ow * stride - padding + kw;
                if (iw < 0 || iw >= W) continue;
                acc += input->at4(b, ci, ih, iw) * kernel->at4(co, ci, kh, kw);
              }
            }
          }
          out->at4(b, co, oh, ow) = acc;
        }
      }
    }
  }

  if (tape) {
    tape->record(out, [input, kernel, bias, out, stride, padding, B, Ci, H, W,
                       Co, Kh, Kw, Ho, Wo](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      auto& gk = g.slot(kernel);
      auto& gb = g.slot(bias);
      std::size_t o = 0;
      for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
          for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow, ++o) {
              const double d = go[o];
              if (d == 0.0) continue;
              gb[static_cast<std::size_t>(co)] += d;
              for (int ci = 0; ci < Ci; ++ci) {
                for (int kh = 0; kh < Kh; ++kh) {
                  const int ih = oh * stride - padding + kh;
                  if (ih < 0 || ih >= H) continue;
                  for (int kw = 0; kw < Kw; ++kw) {
                    const int iw = ow * stride - padding + kw;
                    if (iw < 0 || iw >= W) continue;
                    const std::size_t xi =
                        static_cast<std::size_t>(((b * Ci + ci) * H + ih) * W + iw);
                    const std::size_t ki =
                        static_cast<std::size_t>(((co * Ci + ci) * Kh + kh) * Kw + kw);
                    gk[ki] += d * input->data[xi];
                    gi[xi] += d * kernel->data[ki];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr depthwise_conv2d(Tape* tape, const TensorPtr& input,
                           const TensorPtr& kernel, const TensorPtr& bias,
                           int padding) {
  require_4d(input, "depthwise_conv2d input");
  require_4d(kernel, "depthwise_conv2d kernel");
  if (padding < 0) throw ValueError("depthwise_conv2d padding must be >= 0");
  const int B = input->dim(0), C = input->dim(1), H = input->dim(2), W = input->dim(3);
  const int Kh = kernel->dim(2), Kw = kernel->dim(3);
  if (kernel->dim(0) != C || kernel->dim(1) != 1) {
    throw ShapeError("depthwise kernel must be [C,1,Kh,Kw] with C=" +
                     std::to_string(C) + ", got " + kernel->shape_str());
  }
  if (bias->numel() != C) {
    throw ShapeError("depthwise bias length mismatch: " + std::to_string(bias->numel()));
  }
  const int Ho = H + 2 * padding - Kh + 1;
  const int Wo = W + 2 * padding - Kw + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("depthwise output would be empty");

  auto out = tensor({B, C, Ho, Wo});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bias->data[static_cast<std::size_t>(c)];
          for (int kh = 0; kh < Kh; ++kh) {
            const int ih = oh - padding + kh;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < Kw; ++kw) {
              const int iw = ow - padding + kw;
              if (iw < 0 || iw >= W) continue;
              acc += input->at4(b, c, ih, iw) * kernel->at4(c, 0, kh, kw);
            }
          }
          out->at4(b, c, oh, ow) = acc;
        }
      }
    }
  }

  if (tape) {
    tape->record(out, [input, kernel, bias, out, padding, B, C, H, W, Kh, Kw,
                       Ho, Wo](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      auto& gk = g.slot(kernel);
      auto& gb = g.slot(bias);
      std::size_t o = 0;
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow, ++o) {
              const double d = go[o];
              if (d == 0.0) continue;
              gb[static_cast<std::size_t>(c)] += d;
              for (int kh = 0; kh < Kh; ++kh) {
                const int ih = oh - padding + kh;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < Kw; ++kw) {
                  const int iw = ow - padding + kw;
                  if (iw < 0 || iw >= W) continue;
                  const std::size_t xi =
                      static_cast<std::size_t>(((b * C + c) * H + ih) * W + iw);
                  const std::size_t ki =
                      static_cast<std::size_t>((c * Kh + kh) * Kw + kw);
                  gk[ki] += d * input->data[xi];
                  gi[xi] += d * kernel->data[ki];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr layer_norm_channels(Tape* tape, const TensorPtr& input,
                              const TensorPtr& gain, const TensorPtr& offset,
                              double eps) {
  require_4d(input, "layer_norm input");
  if (eps <= 0.0) throw ValueError("layer_norm eps must be > 0");
  const int B = input->dim(0), C = input->dim(1), H = input->dim(2), W = input->dim(3);
  if (gain->numel() != C || offset->numel() != C) {
    throw ShapeError("layer_norm gain/offset must have length C=" + std::to_string(C));
  }

  auto out = tensor({B, C, H, W});
  // Normalized values are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(input->data.size(), 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B * H * W), 0.0);
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        double mean = 0.0;
        for (int c = 0; c < C; ++c) mean += input->at4(b, c, h, w);
        mean /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
          const double d = input->at4(b, c, h, w) - mean;
          var += d * d;
        }
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>((b * H + h) * W + w)] = is;
        for (int c = 0; c < C; ++c) {
          const double xh = (input->at4(b, c, h, w) - mean) * is;
          (*xhat)[static_cast<std::size_t>(((b * C + c) * H + h) * W + w)] = xh;
          out->at4(b, c, h, w) = gain->data[static_cast<std::size_t>(c)] * xh +
                                 offset->data[static_cast<std::size_t>(c)];
        }
      }
    }
  }

  if (tape) {
    tape->record(out, [input, gain, offset, out, xhat, inv_std, B, C, H, W](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      auto& gg = g.slot(gain);
      auto& gof = g.slot(offset);
      std::vector<double> gq(static_cast<std::size_t>(C));
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
          for (int w = 0; w < W; ++w) {
            const double is = (*inv_std)[static_cast<std::size_t>((b * H + h) * W + w)];
            double sum_gq = 0.0, sum_gq_xh = 0.0;
            for (int c = 0; c < C; ++c) {
              const std::size_t idx =
                  static_cast<std::size_t>(((b * C + c) * H + h) * W + w);
              const double d = go[idx];
              const double xh = (*xhat)[idx];
              gg[static_cast<std::size_t>(c)] += d * xh;
              gof[static_cast<std::size_t>(c)] += d;
              const double q = d * gain->data[static_cast<std::size_t>(c)];
              gq[static_cast<std::size_t>(c)] = q;
              sum_gq += q;
              sum_gq_xh += q * xh;
            }
            for (int c = 0; c < C; ++c) {
              const std::size_t idx =
                  static_cast<std::size_t>(((b * C + c) * H + h) * W + w);
              const double xh = (*xhat)[idx];
              gi[idx] += is * (gq[static_cast<std::size_t>(c)] - sum_gq / C -
                               xh * sum_gq_xh / C);
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr simple_gate(Tape* tape, const TensorPtr& input) {
  require_4d(input, "simple_gate input");
  const int B = input->dim(0), C2 = input->dim(1), H = input->dim(2), W = input->dim(3);
  if (C2 % 2 != 0) {
    throw ShapeError("simple_gate needs an even channel count, got " + std::to_string(C2));
  }
  const int C = C2 / 2;
  auto out = tensor({B, C, H, W});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          out->at4(b, c, h, w) = input->at4(b, c, h, w) * input->at4(b, c + C, h, w);
        }
      }
    }
  }
  if (tape) {
    tape->record(out, [input, out, B, C, H, W](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      std::size_t o = 0;
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w, ++o) {
              const double d = go[o];
              const std::size_t ia =
                  static_cast<std::size_t>(((b * 2 * C + c) * H + h) * W + w);
              const std::size_t ib =
                  static_cast<std::size_t>(((b * 2 * C + c + C) * H + h) * W + w);
              gi[ia] += d * input->data[ib];
              gi[ib] += d * input->data[ia];
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr channel_halves_mean(Tape* tape, const TensorPtr& input) {
  require_4d(input, "channel_halves_mean input");
  const int B = input->dim(0), C2 = input->dim(1), H = input->dim(2), W = input->dim(3);
  if (C2 % 2 != 0) {
    throw ShapeError("channel_halves_mean needs an even channel count, got " +
                     std::to_string(C2));
  }
  const int C = C2 / 2;
  auto out = tensor({B, C, H, W});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          out->at4(b, c, h, w) =
              0.5 * (input->at4(b, c, h, w) + input->at4(b, c + C, h, w));
        }
      }
    }
  }
  if (tape) {
    tape->record(out, [input, out, B, C, H, W](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      std::size_t o = 0;
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w, ++o) {
              const double d = 0.5 * go[o];
              gi[(std::size_t)(((b * 2 * C + c) * H + h) * W + w)] += d;
              gi[(std::size_t)(((b * 2 * C + c + C) * H + h) * W + w)] += d;
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr global_avg_pool(Tape* tape, const TensorPtr& input) {
  require_4d(input, "global_avg_pool input");
  const int B = input->dim(0), C = input->dim(1), H = input->dim(2), W = input->dim(3);
  auto out = tensor({B, C, 1, 1});
  const double inv = 1.0 / (H * W);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) acc += input->at4(b, c, h, w);
      }
      out->at4(b, c, 0, 0) = acc * inv;
    }
  }
  if (tape) {
    tape->record(out, [input, out, B, C, H, W, inv](Gradients& g) {
      const auto& go = g.ref(out);
      auto& gi = g.slot(input);
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          const double d = go[static_cast<std::size_t>(b * C + c)] * inv;
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
              gi[static_cast<std::size_t>(((b * C + c) * H + h) * W + w)] += d;
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b)) {
    throw ShapeError("add shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
  }
  auto out = tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (tape) {
    tape->record(out, [a, b, out](Gradients& g) {
      const auto& go = g.ref(out);
      auto& ga = g.slot(a);
      auto& gb = g.slot(b);
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
  }
  return out;
}

namespace {

enum class MulMode { Elementwise, Scalar, ChannelVec };

MulMode mul_mode(const TensorPtr& a, const TensorPtr& b) {
  if (a->same_shape(*b)) return MulMode::Elementwise;
  if (b->numel() == 1) return MulMode::Scalar;
  if (a->shape.size() == 4 && b->shape.size() == 4 && b->dim(1) == a->dim(1) &&
      b->dim(2) == 1 && b->dim(3) == 1 && (b->dim(0) == 1 || b->dim(0) == a->dim(0))) {
    return MulMode::ChannelVec;
  }
  throw ShapeError("mul: unsupported broadcast " + a->shape_str() + " * " + b->shape_str());
}

}  // namespace

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  const MulMode mode = mul_mode(a, b);
  auto out = tensor(a->shape);
  switch (mode) {
    case MulMode::Elementwise:
      for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
      break;
    case MulMode::Scalar: {
      const double s = b->data[0];
      for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * s;
      break;
    }
    case MulMode::ChannelVec: {
      const int B = a->dim(0), C = a->dim(1), H = a->dim(2), W = a->dim(3);
      const bool per_batch = b->dim(0) == B;
      for (int bb = 0; bb < B; ++bb) {
        for (int c = 0; c < C; ++c) {
          const double s = b->data[static_cast<std::size_t>((per_batch ? bb : 0) * C + c)];
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) out->at4(bb, c, h, w) = a->at4(bb, c, h, w) * s;
          }
        }
      }
      break;
    }
  }
  if (tape) {
    tape->record(out, [a, b, out, mode](Gradients& g) {
      const auto& go = g.ref(out);
      auto& ga = g.slot(a);
      auto& gb = g.slot(b);
      switch (mode) {
        case MulMode::Elementwise:
          for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * b->data[i];
            gb[i] += go[i] * a->data[i];
          }
          break;
        case MulMode::Scalar: {
          const double s = b->data[0];
          for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * s;
            gb[0] += go[i] * a->data[i];
          }
          break;
        }
        case MulMode::ChannelVec: {
          const int B = a->dim(0), C = a->dim(1), H = a->dim(2), W = a->dim(3);
          const bool per_batch = b->dim(0) == B;
          for (int bb = 0; bb < B; ++bb) {
            for (int c = 0; c < C; ++c) {
              const std::size_t bi = static_cast<std::size_t>((per_batch ? bb : 0) * C + c);
              const double s = b->data[bi];
              for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                  const std::size_t i =
                      static_cast<std::size_t>(((bb * C + c) * H + h) * W + w);
                  ga[i] += go[i] * s;
                  gb[bi] += go[i] * a->data[i];
                }
              }
            }
          }
          break;
        }
      }
    });
  }
  return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double s) {
  auto out = tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * s;
  if (tape) {
    tape->record(out, [a, out, s](Gradients& g) {
      const auto& go = g.ref(out);
      auto& ga = g.slot(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
  }
  return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& a) {
  auto out = tensor(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    out->data[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
  }
  if (tape) {
    tape->record(out, [a, out](Gradients& g) {
      const auto& go = g.ref(out);
      auto& ga = g.slot(a);
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (a->data[i] > 0.0) ga[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr upsample_nearest2x(Tape* tape, const TensorPtr& a) {
  require_4d(a, "upsample input");
  const int B = a->dim(0), C = a->dim(1), H = a->dim(2), W = a->dim(3);
  auto out = tensor({B, C, 2 * H, 2 * W});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          const double v = a->at4(b, c, h, w);
          out->at4(b, c, 2 * h, 2 * w) = v;
          out->at4(b, c, 2 * h, 2 * w + 1) = v;
          out->at4(b, c, 2 * h + 1, 2 * w) = v;
          out->at4(b, c, 2 * h + 1, 2 * w + 1) = v;
        }
      }
    }
  }
  if (tape) {
    tape->record(out, [a, out, B, C, H, W](Gradients& g) {
      const auto& go = g.ref(out);
      auto& ga = g.slot(a);
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
              double acc = 0.0;
              for (int dh = 0; dh < 2; ++dh) {
                for (int dw = 0; dw < 2; ++dw) {
                  acc += go[static_cast<std::size_t>(
                      ((b * C + c) * 2 * H + 2 * h + dh) * 2 * W + 2 * w + dw)];
                }
              }
              ga[static_cast<std::size_t>(((b * C + c) * H + h) * W + w)] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr mse_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& target) {
  if (!pred->same_shape(*target)) {
    throw ShapeError("mse_loss shape mismatch: " + pred->shape_str() + " vs " +
                     target->shape_str());
  }
  const double n = static_cast<double>(pred->numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->data.size(); ++i) {
    const double d = pred->data[i] - target->data[i];
    acc += d * d;
  }
  auto out = scalar_tensor(acc / n);
  if (tape) {
    tape->record(out, [pred, target, out, n](Gradients& g) {
      const double d0 = g.ref(out)[0];
      auto& gp = g.slot(pred);
      auto& gt = g.slot(target);
      const double k = 2.0 * d0 / n;
      for (std::size_t i = 0; i < pred->data.size(); ++i) {
        const double d = pred->data[i] - target->data[i];
        gp[i] += k * d;
        gt[i] -= k * d;
      }
    });
  }
  return out;
}

TensorPtr reduce_sum(Tape* tape, const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->data) acc += v;
  auto out = scalar_tensor(acc);
  if (tape) {
    tape->record(out, [a, out](Gradients& g) {
      const double d0 = g.ref(out)[0];
      auto& ga = g.slot(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d0;
    });
  }
  return out;
}

std::vector<double> hvp(const GradFn& grad_at, const std::vector<double>& theta,
                        const std::vector<double>& v) {
  if (theta.size() != v.size()) {
    throw ShapeError("hvp: direction length " + std::to_string(v.size()) +
                     " does not match parameter count " + std::to_string(theta.size()));
  }
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  const double eps = 1e-4 / std::max(1.0, vmax);

  std::vector<double> plus(theta), minus(theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += eps * v[i];
    minus[i] -= eps * v[i];
  }
  const std::vector<double> gp = grad_at(plus);
  const std::vector<double> gm = grad_at(minus);
  if (gp.size() != theta.size() || gm.size() != theta.size()) {
    throw ShapeError("hvp: gradient callback returned wrong length");
  }
  std::vector<double> result(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    result[i] = (gp[i] - gm[i]) / (2.0 * eps);
    if (!std::isfinite(result[i])) {
      throw ValueError("hvp produced a non-finite value at parameter index " +
                       std::to_string(i));
    }
  }
  return result;
}

std::vector<double> finite_diff_grad(const LossFn& loss,
                                     const std::vector<double>& theta,
                                     double h) {
  if (h <= 0.0) throw ValueError("finite_diff_grad step must be > 0");
  std::vector<double> grad(theta.size());
  std::vector<double> probe(theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double lp = loss(probe);
    probe[i] = orig - h;
    const double lm = loss(probe);
    probe[i] = orig;
    grad[i] = (lp - lm) / (2.0 * h);
  }
  return grad;
}

}  // namespace blocksurgeon
