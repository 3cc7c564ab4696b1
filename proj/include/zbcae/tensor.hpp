#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zbcae/errors.hpp"

namespace zbcae {

/**
 * Dense row-major tensor of doubles with between one and four dimensions.
 *
 * A default-constructed tensor is empty (rank 0, no elements) and only
 * serves as a placeholder; every other constructor enforces positive
 * extents and a matching element count.
 */
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != element_count(shape_)) {
      std::ostringstream msg;
      msg << "tensor data length " << data_.size() << " does not match shape volume "
          << element_count(shape_);
      throw ShapeError(msg.str());
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  std::size_t rank() const noexcept { return shape_.size(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t flat) noexcept { return data_[flat]; }
  double operator[](std::size_t flat) const noexcept { return data_[flat]; }

  template <typename... Idx>
  double& at(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double at(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    return out.str();
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4) {
      throw ShapeError("tensor rank must be between 1 and 4, got " + std::to_string(shape.size()));
    }
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] == 0) {
        throw ShapeError("tensor extent " + std::to_string(i) + " must be positive");
      }
    }
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t flat = 0;
    std::size_t dim = 0;
    for (std::size_t i : idx) flat = flat * shape_[dim++] + i;
    return flat;
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t pad = 1;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Output extent of a convolution along one axis; throws if the kernel does
/// not fit the padded input.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvSpec& spec) {
  if (spec.stride == 0) throw ShapeError("convolution stride must be positive");
  const std::size_t padded = in + 2 * spec.pad;
  if (kernel > padded) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(padded) + "; output extent would be < 1");
  }
  return (padded - kernel) / spec.stride + 1;
}

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must be " + std::to_string(rank) + "-D, got shape " +
                     Tensor::shape_string(t.shape()));
  }
}

}  // namespace detail

/**
 * 2-D cross-correlation of a C×H×W input with a K×C×kh×kw filter bank.
 *
 * out[k,i,j] = bias[k] + sum_{c,u,v} xpad[c, i*stride+u, j*stride+v] * w[k,c,u,v]
 *
 * The kernel is not flipped; use flip180 or tied_decoder_weights for that.
 * Each output element accumulates in (c,u,v) order.
 */
inline Tensor conv2d(const Tensor& x, const Tensor& weights, std::span<const double> bias,
                     const ConvSpec& spec) {
  detail::require_rank(x, 3, "conv2d input");
  detail::require_rank(weights, 4, "conv2d weights");
  const std::size_t channels = x.extent(0), height = x.extent(1), width = x.extent(2);
  const std::size_t filters = weights.extent(0), kh = weights.extent(2), kw = weights.extent(3);
  if (weights.extent(1) != channels) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(channels) +
                     " channels but weights dimension 1 is " + std::to_string(weights.extent(1)));
  }
  if (bias.size() != filters) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) +
                     " does not match filter count (weights dimension 0) " + std::to_string(filters));
  }
  const std::size_t out_h = conv_output_extent(height, kh, spec);
  const std::size_t out_w = conv_output_extent(width, kw, spec);
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  Tensor out({filters, out_h, out_w});
  const double* xd = x.data().data();
  const double* wd = weights.data().data();
  double* od = out.data().data();
  const std::size_t plane = out_h * out_w;

  for (std::size_t k = 0; k < filters; ++k) {
    double* acc = od + k * plane;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = xd + c * height * width;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const double wv = wd[((k * channels + c) * kh + u) * kw + v];
          for (std::size_t i = 0; i < out_h; ++i) {
            const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(i) * stride + static_cast<std::ptrdiff_t>(u) - pad;
            if (row < 0 || row >= static_cast<std::ptrdiff_t>(height)) continue;
            const double* xr = xc + static_cast<std::size_t>(row) * width;
            double* ar = acc + i * out_w;
            for (std::size_t j = 0; j < out_w; ++j) {
              const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j) * stride + static_cast<std::ptrdiff_t>(v) - pad;
              if (col < 0 || col >= static_cast<std::ptrdiff_t>(width)) continue;
              ar[j] += xr[col] * wv;
            }
          }
        }
      }
    }
    for (std::size_t p = 0; p < plane; ++p) acc[p] += bias[k];
  }
  return out;
}

/// Gradient of a conv2d output w.r.t. its C×height×width input, given the
/// output gradient and the weights used in the forward pass.
inline Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights, const ConvSpec& spec,
                                    std::size_t height, std::size_t width) {
  detail::require_rank(grad_out, 3, "conv2d output gradient");
  detail::require_rank(weights, 4, "conv2d weights");
  const std::size_t filters = weights.extent(0), channels = weights.extent(1);
  const std::size_t kh = weights.extent(2), kw = weights.extent(3);
  const std::size_t out_h = grad_out.extent(1), out_w = grad_out.extent(2);
  if (grad_out.extent(0) != filters || out_h != conv_output_extent(height, kh, spec) ||
      out_w != conv_output_extent(width, kw, spec)) {
    throw ShapeError("conv2d output gradient shape " + Tensor::shape_string(grad_out.shape()) +
                     " is inconsistent with the weights and input extents");
  }
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  Tensor grad_in({channels, height, width});
  double* gi = grad_in.data().data();
  const double* go = grad_out.data().data();
  const double* wd = weights.data().data();
  for (std::size_t k = 0; k < filters; ++k) {
    const double* gk = go + k * out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
      double* gc = gi + c * height * width;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const double wv = wd[((k * channels + c) * kh + u) * kw + v];
          for (std::size_t i = 0; i < out_h; ++i) {
            const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(i) * stride + static_cast<std::ptrdiff_t>(u) - pad;
            if (row < 0 || row >= static_cast<std::ptrdiff_t>(height)) continue;
            for (std::size_t j = 0; j < out_w; ++j) {
              const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j) * stride + static_cast<std::ptrdiff_t>(v) - pad;
              if (col < 0 || col >= static_cast<std::ptrdiff_t>(width)) continue;
              gc[static_cast<std::size_t>(row) * width + static_cast<std::size_t>(col)] += gk[i * out_w + j] * wv;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

/// Gradient of a conv2d output w.r.t. a K×C×kh×kw filter bank.
inline Tensor conv2d_backward_weights(const Tensor& x, const Tensor& grad_out, const ConvSpec& spec,
                                      std::size_t kh, std::size_t kw) {
  detail::require_rank(x, 3, "conv2d input");
  detail::require_rank(grad_out, 3, "conv2d output gradient");
  const std::size_t channels = x.extent(0), height = x.extent(1), width = x.extent(2);
  const std::size_t filters = grad_out.extent(0), out_h = grad_out.extent(1), out_w = grad_out.extent(2);
  if (out_h != conv_output_extent(height, kh, spec) || out_w != conv_output_extent(width, kw, spec)) {
    throw ShapeError("conv2d output gradient shape " + Tensor::shape_string(grad_out.shape()) +
                     " is inconsistent with input shape " + Tensor::shape_string(x.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  Tensor grad_w({filters, channels, kh, kw});
  double* gw = grad_w.data().data();
  const double* xd = x.data().data();
  const double* go = grad_out.data().data();
  for (std::size_t k = 0; k < filters; ++k) {
    const double* gk = go + k * out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = xd + c * height * width;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          double acc = 0.0;
          for (std::size_t i = 0; i < out_h; ++i) {
            const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(i) * stride + static_cast<std::ptrdiff_t>(u) - pad;
            if (row < 0 || row >= static_cast<std::ptrdiff_t>(height)) continue;
            for (std::size_t j = 0; j < out_w; ++j) {
              const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j) * stride + static_cast<std::ptrdiff_t>(v) - pad;
              if (col < 0 || col >= static_cast<std::ptrdiff_t>(width)) continue;
              acc += gk[i * out_w + j] * xc[static_cast<std::size_t>(row) * width + static_cast<std::size_t>(col)];
            }
          }
          gw[((k * channels + c) * kh + u) * kw + v] = acc;
        }
      }
    }
  }
  return grad_w;
}

/// Per-channel sums of a K×H×W tensor (the bias gradient of conv2d).
inline Tensor channel_sums(const Tensor& t) {
  detail::require_rank(t, 3, "channel_sums input");
  const std::size_t plane = t.extent(1) * t.extent(2);
  Tensor out({t.extent(0)});
  for (std::size_t k = 0; k < t.extent(0); ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += t[k * plane + p];
    out[k] = acc;
  }
  return out;
}

/// out[k,c,u,v] = w[k,c,kh-1-u,kw-1-v]
inline Tensor flip180(const Tensor& weights) {
  detail::require_rank(weights, 4, "flip180 input");
  const std::size_t kh = weights.extent(2), kw = weights.extent(3);
  const std::size_t slices = weights.extent(0) * weights.extent(1);
  Tensor out(weights.shape());
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t u = 0; u < kh; ++u) {
      for (std::size_t v = 0; v < kw; ++v) {
        out[(s * kh + u) * kw + v] = weights[(s * kh + (kh - 1 - u)) * kw + (kw - 1 - v)];
      }
    }
  }
  return out;
}

/**
 * Decoder filter bank tied to a K×C×kh×kw encoder bank: swaps the filter and
 * channel axes and flips every kernel by 180 degrees, giving C×K×kh×kw with
 * out[c,k,u,v] = w[k,c,kh-1-u,kw-1-v].
 */
inline Tensor tied_decoder_weights(const Tensor& encoder_weights) {
  detail::require_rank(encoder_weights, 4, "tied_decoder_weights input");
  const std::size_t filters = encoder_weights.extent(0), channels = encoder_weights.extent(1);
  const std::size_t kh = encoder_weights.extent(2), kw = encoder_weights.extent(3);
  Tensor out({channels, filters, kh, kw});
  for (std::size_t k = 0; k < filters; ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          out[((c * filters + k) * kh + u) * kw + v] =
              encoder_weights[((k * channels + c) * kh + (kh - 1 - u)) * kw + (kw - 1 - v)];
        }
      }
    }
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Multiplies grad elementwise by the ReLU derivative evaluated at the
/// pre-activation (subgradient 0 at exactly 0).
inline Tensor relu_backward(const Tensor& grad, const Tensor& pre_activation) {
  if (grad.shape() != pre_activation.shape()) throw ShapeError("relu_backward shape mismatch");
  Tensor out = grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(pre_activation[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

struct PoolResult {
  Tensor output;
  // Flat index into the pooled input of each output element's maximum.
  std::vector<std::size_t> argmax;
};

/**
 * 2×2 max-pooling with stride 2 over a K×H×W map. Odd extents get a
 * truncated window at the border; ties resolve to the first element in
 * row-major window order.
 */
inline PoolResult maxpool2(const Tensor& x) {
  detail::require_rank(x, 3, "maxpool2 input");
  const std::size_t channels = x.extent(0), height = x.extent(1), width = x.extent(2);
  const std::size_t out_h = (height + 1) / 2, out_w = (width + 1) / 2;
  PoolResult result{Tensor({channels, out_h, out_w}), std::vector<std::size_t>(channels * out_h * out_w)};
  for (std::size_t k = 0; k < channels; ++k) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        std::size_t best = (k * height + 2 * i) * width + 2 * j;
        for (std::size_t r = 2 * i; r < std::min(2 * i + 2, height); ++r) {
          for (std::size_t c = 2 * j; c < std::min(2 * j + 2, width); ++c) {
            const std::size_t idx = (k * height + r) * width + c;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (k * out_h + i) * out_w + j;
        result.output[o] = x[best];
        result.argmax[o] = best;
      }
    }
  }
  return result;
}

/// Routes a pooled-output gradient back to the recorded maxima.
inline Tensor maxpool2_backward(const Tensor& grad_out, std::span<const std::size_t> argmax,
                                const Tensor::Shape& input_shape) {
  if (grad_out.size() != argmax.size()) throw ShapeError("maxpool2_backward: index map length mismatch");
  Tensor grad_in(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] >= grad_in.size()) throw ShapeError("maxpool2_backward: index out of range");
    grad_in[argmax[o]] += grad_out[o];
  }
  return grad_in;
}

inline Tensor flatten(const Tensor& x) { return x.reshaped({x.size()}); }

}  // namespace zbcae
