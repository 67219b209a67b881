#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "topoaug/error.hpp"

// Small fixed-purpose neural-network kernel: dense tensors, the handful of
// layers the policy network needs (each with a hand-written backward), and
// Adam. Everything is templated on the scalar so gradient checks can run in
// double while training runs in float.
namespace topoaug::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    data_.assign(element_count(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor data length does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

// ---- convolution: stride 1, odd square kernel, zero "same" padding ----

// input [C,H,W], weights [O,C,K,K], bias [O] -> [O,H,W]
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 3 || weights.rank() != 4 || bias.rank() != 1) {
    throw ShapeError("conv2d expects input [C,H,W], weights [O,C,K,K], bias [O]");
  }
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t outs = weights.dim(0), kernel = weights.dim(2);
  if (weights.dim(1) != channels || weights.dim(3) != kernel || kernel % 2 == 0 ||
      bias.dim(0) != outs) {
    throw ShapeError("conv2d shape mismatch: input " + shape_string(input.shape()) + ", weights " +
                     shape_string(weights.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  Tensor<T> out({outs, height, width});
  for (std::size_t o = 0; o < outs; ++o) {
    T* plane = out.data() + o * height * width;
    std::fill(plane, plane + height * width, bias[o]);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* in = input.data() + c * height * width;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const T w = weights[((o * channels + c) * kernel + ky) * kernel + kx];
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width), static_cast<std::ptrdiff_t>(width) - dx));
          for (std::size_t y = 0; y < height; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
            const T* src = in + static_cast<std::size_t>(sy) * width;
            T* dst = plane + y * width;
            for (std::size_t x = x0; x < x1; ++x) {
              dst[x] += w * src[static_cast<std::ptrdiff_t>(x) + dx];
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight and bias gradients; writes the input gradient when
// `grad_input` is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                     Tensor<T>* grad_input, Tensor<T>& grad_weights, Tensor<T>& grad_bias) {
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t outs = weights.dim(0), kernel = weights.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  if (grad_input) *grad_input = Tensor<T>(input.shape());
  for (std::size_t o = 0; o < outs; ++o) {
    const T* g = grad_out.data() + o * height * width;
    T bias_sum = 0;
    for (std::size_t i = 0; i < height * width; ++i) bias_sum += g[i];
    grad_bias[o] += bias_sum;
    for (std::size_t c = 0; c < channels; ++c) {
      const T* in = input.data() + c * height * width;
      T* gin = grad_input ? grad_input->data() + c * height * width : nullptr;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::size_t widx = ((o * channels + c) * kernel + ky) * kernel + kx;
          const T w = weights[widx];
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width), static_cast<std::ptrdiff_t>(width) - dx));
          T acc = 0;
          for (std::size_t y = 0; y < height; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
            const T* src = in + static_cast<std::size_t>(sy) * width;
            const T* grow = g + y * width;
            for (std::size_t x = x0; x < x1; ++x) {
              acc += grow[x] * src[static_cast<std::ptrdiff_t>(x) + dx];
            }
            if (gin) {
              T* dst = gin + static_cast<std::size_t>(sy) * width;
              for (std::size_t x = x0; x < x1; ++x) {
                dst[static_cast<std::ptrdiff_t>(x) + dx] += w * grow[x];
              }
            }
          }
          grad_weights[widx] += acc;
        }
      }
    }
  }
}

// ---- fully connected: weights [out, in] ----

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const std::size_t outs = weights.dim(0), ins = weights.dim(1);
  if (input.size() != ins || bias.size() != outs) {
    throw ShapeError("dense layer expects " + std::to_string(ins) + " inputs, got " +
                     std::to_string(input.size()));
  }
  Tensor<T> out({outs});
  for (std::size_t o = 0; o < outs; ++o) {
    const T* row = weights.data() + o * ins;
    T acc = bias[o];
    for (std::size_t i = 0; i < ins; ++i) acc += row[i] * input[i];
    out[o] = acc;
  }
  return out;
}

template <typename T>
void dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                    Tensor<T>* grad_input, Tensor<T>& grad_weights, Tensor<T>& grad_bias) {
  const std::size_t outs = weights.dim(0), ins = weights.dim(1);
  if (grad_input) *grad_input = Tensor<T>(input.shape());
  for (std::size_t o = 0; o < outs; ++o) {
    const T g = grad_out[o];
    grad_bias[o] += g;
    if (g == T(0)) continue;
    T* grow = grad_weights.data() + o * ins;
    for (std::size_t i = 0; i < ins; ++i) grow[i] += g * input[i];
    if (grad_input) {
      const T* row = weights.data() + o * ins;
      T* gin = grad_input->data();
      for (std::size_t i = 0; i < ins; ++i) gin[i] += g * row[i];
    }
  }
}

// ---- pointwise ----

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

// Gradient through ReLU given its forward output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (T& v : out) v /= total;
  require_finite<T>(out, "softmax");
  return out;
}

// log-softmax, max-shifted.
template <typename T>
std::vector<T> log_softmax(std::span<const T> logits) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (T v : logits) total += std::exp(v - peak);
  const T log_total = std::log(total) + peak;
  std::vector<T> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_total;
  return out;
}

// ---- parameter collections and Adam ----

template <typename T>
struct ParamSet {
  std::vector<Tensor<T>> tensors;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  void zero() {
    for (auto& t : tensors) t.fill(T(0));
  }
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors) out.tensors.emplace_back(t.shape());
    return out;
  }
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
};

template <typename T>
void require_congruent(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (a.tensors.size() != b.tensors.size()) throw ShapeError("parameter sets differ in length");
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].shape() != b.tensors[i].shape()) {
      throw ShapeError("parameter tensor " + std::to_string(i) + " shape mismatch");
    }
  }
}

template <typename T>
double global_norm(const ParamSet<T>& grads) {
  double sq = 0.0;
  for (const auto& t : grads.tensors) {
    for (T v : t.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(sq);
}

// Rescales so the global L2 norm is at most `max_norm`; returns the norm
// before clipping. `max_norm <= 0` disables clipping.
template <typename T>
double clip_global_norm(ParamSet<T>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& t : grads.tensors) {
      for (T& v : t.values()) v *= scale;
    }
  }
  return norm;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment estimates live here; the parameters are
// passed on each update.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void update(ParamSet<T>& params, const ParamSet<T>& grads, double lr) {
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    require_congruent(params, grads);
    if (first_.tensors.empty()) {
      first_ = params.zeros_like();
      second_ = params.zeros_like();
    }
    require_congruent(params, first_);
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T step = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(config_.epsilon);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      T* p = params.tensors[k].data();
      const T* g = grads.tensors[k].data();
      T* m = first_.tensors[k].data();
      T* v = second_.tensors[k].data();
      const std::size_t n = params.tensors[k].size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  long long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const ParamSet<T>& first_moment() const { return first_; }
  const ParamSet<T>& second_moment() const { return second_; }

  void restore(long long steps, ParamSet<T> first, ParamSet<T> second) {
    steps_ = steps;
    first_ = std::move(first);
    second_ = std::move(second);
  }

 private:
  AdamConfig config_;
  long long steps_ = 0;
  ParamSet<T> first_;
  ParamSet<T> second_;
};

// Per-episode exponential decay: lr0 * decay^episode.
double decay_lr(double lr0, long long episode, double decay = 0.95);

}  // namespace topoaug::nn
