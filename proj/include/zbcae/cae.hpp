#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "zbcae/errors.hpp"
#include "zbcae/parallel.hpp"
#include "zbcae/random.hpp"
#include "zbcae/tensor.hpp"

namespace zbcae::cae {

enum class BiasMode {
  // Biases are trained with the weights and bypassed at feature extraction.
  train_then_zero,
  // Biases are the constant zero throughout.
  always_zero,
};

inline const char* to_string(BiasMode mode) {
  return mode == BiasMode::train_then_zero ? "train-then-zero" : "always-zero";
}

inline BiasMode parse_bias_mode(const std::string& text) {
  if (text == "train-then-zero") return BiasMode::train_then_zero;
  if (text == "always-zero") return BiasMode::always_zero;
  throw ConfigError("unknown bias mode '" + text + "' (expected train-then-zero or always-zero)");
}

/**
 * Convolutional auto-encoder with tied weights.
 *
 * Only the encoder bank is stored. The decoder bank is recomputed from the
 * current encoder bank by tied_decoder_weights on every decode, so the two
 * can never drift apart.
 */
struct CaeModel {
  Tensor encoder_weights;  // K×C×kh×kw
  Tensor encoder_bias;     // K
  Tensor decoder_bias;     // C
  ConvSpec spec;
  bool decoder_relu = true;
  BiasMode bias_mode = BiasMode::train_then_zero;

  std::size_t filters() const { return encoder_weights.extent(0); }
  std::size_t channels() const { return encoder_weights.extent(1); }
  std::size_t kernel() const { return encoder_weights.extent(2); }

  void validate() const {
    detail::require_rank(encoder_weights, 4, "encoder weights");
    if (encoder_weights.extent(2) != encoder_weights.extent(3)) {
      throw ShapeError("encoder kernels must be square, got " +
                       Tensor::shape_string(encoder_weights.shape()));
    }
    if (encoder_bias.shape() != Tensor::Shape{filters()}) {
      throw ShapeError("encoder bias must have length " + std::to_string(filters()));
    }
    if (decoder_bias.shape() != Tensor::Shape{channels()}) {
      throw ShapeError("decoder bias must have length " + std::to_string(channels()));
    }
    for (const Tensor* t : {&encoder_weights, &encoder_bias, &decoder_bias}) {
      for (double v : t->data()) {
        if (!std::isfinite(v)) throw NumericalError("model contains a non-finite parameter");
      }
    }
  }
};

struct CaeGradients {
  Tensor encoder_weights;
  Tensor encoder_bias;
  Tensor decoder_bias;
};

/// Weight gradient split by the path through which the shared bank acts.
struct SplitGradients {
  CaeGradients total;
  Tensor encoder_path;  // K×C×kh×kw, from the encoding convolution
  Tensor decoder_path;  // K×C×kh×kw, from the tied decoding convolution
  double loss = 0.0;    // batch loss at the evaluated point
};

struct CaeTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 512;
  double learning_rate = 1e-5;
  double anneal_factor = 0.1;
  std::size_t plateau_patience = 5;
  double plateau_rel_tol = 1e-3;
  std::size_t max_anneals = 3;
  BiasMode bias_mode = BiasMode::train_then_zero;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be positive");
    }
    if (!(anneal_factor > 0.0 && anneal_factor < 1.0)) throw ConfigError("anneal_factor must lie in (0, 1)");
    if (plateau_patience == 0) throw ConfigError("plateau_patience must be positive");
    if (!(plateau_rel_tol > 0.0)) throw ConfigError("plateau_rel_tol must be positive");
  }
};

struct AnnealEvent {
  std::size_t epoch;  // zero-based epoch after which the rate was reduced
  double from;
  double to;
};

struct LossHistory {
  // Mean per-sample loss of the untrained model over the dataset.
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> learning_rate;
  std::vector<AnnealEvent> anneals;
};

struct TrainResult {
  CaeModel model;
  LossHistory history;
};

/// Geometry under which encode∘decode maps C×H×W back onto C×H×W.
inline ConvSpec same_spec(std::size_t kernel) { return ConvSpec{1, (kernel - 1) / 2}; }

inline CaeModel init_model(std::size_t filters, std::size_t channels, std::size_t kernel, std::uint64_t seed) {
  if (filters == 0 || channels == 0 || kernel == 0) {
    throw ConfigError("init_model: filters, channels and kernel must be positive");
  }
  CaeModel model;
  model.encoder_weights = Tensor({filters, channels, kernel, kernel});
  model.encoder_bias = Tensor({filters});
  model.decoder_bias = Tensor({channels});
  model.spec = same_spec(kernel);

  const double fan_in = static_cast<double>(channels * kernel * kernel);
  const double fan_out = static_cast<double>(filters * kernel * kernel);
  const double scale = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  for (double& w : model.encoder_weights.data()) w = rng.uniform(-scale, scale);
  return model;
}

namespace detail {

inline std::span<const double> maybe_bias(const Tensor& bias, bool zero_bias, std::vector<double>& zeros) {
  if (!zero_bias) return bias.data();
  zeros.assign(bias.size(), 0.0);
  return zeros;
}

inline void require_channels(const Tensor& t, std::size_t expected, const char* what) {
  zbcae::detail::require_rank(t, 3, what);
  if (t.extent(0) != expected) {
    throw ShapeError(std::string(what) + " has " + std::to_string(t.extent(0)) +
                     " channels (dimension 0), model expects " + std::to_string(expected));
  }
}

}  // namespace detail

/// z = relu(conv(x, W_e) + b), with b = b_e or 0 when zero_bias is set.
inline Tensor encode(const CaeModel& model, const Tensor& x, bool zero_bias) {
  detail::require_channels(x, model.channels(), "encode input");
  std::vector<double> zeros;
  return relu(conv2d(x, model.encoder_weights, detail::maybe_bias(model.encoder_bias, zero_bias, zeros), model.spec));
}

/// y = act(conv(z, tied(W_e)) + b), with b = b_d or 0 when zero_bias is set.
inline Tensor decode(const CaeModel& model, const Tensor& z, bool zero_bias) {
  detail::require_channels(z, model.filters(), "decode input");
  std::vector<double> zeros;
  Tensor y = conv2d(z, tied_decoder_weights(model.encoder_weights),
                    detail::maybe_bias(model.decoder_bias, zero_bias, zeros), model.spec);
  return model.decoder_relu ? relu(y) : y;
}

inline Tensor reconstruct(const CaeModel& model, const Tensor& x, bool zero_bias) {
  return decode(model, encode(model, x, zero_bias), zero_bias);
}

namespace detail {

inline void require_batch(const CaeModel& model, std::span<const Tensor> batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  for (const Tensor& x : batch) {
    if (x.shape() != batch.front().shape()) {
      throw ShapeError("batch tensors have non-uniform shapes: " + Tensor::shape_string(batch.front().shape()) +
                       " vs " + Tensor::shape_string(x.shape()));
    }
  }
  require_channels(batch.front(), model.channels(), "batch sample");
}

inline double half_squared_error(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw ShapeError("reconstruction shape " + Tensor::shape_string(y.shape()) + " differs from input shape " +
                     Tensor::shape_string(x.shape()) + "; the model geometry must preserve spatial extents");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

inline void add_into(Tensor& acc, const Tensor& term) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
}

struct SampleGradients {
  double loss = 0.0;
  Tensor encoder_path;
  Tensor decoder_path;
  Tensor encoder_bias;
  Tensor decoder_bias;
};

inline SampleGradients sample_gradients(const CaeModel& model, const Tensor& decoder_weights, const Tensor& x,
                                        bool zero_bias) {
  std::vector<double> zeros_e, zeros_d;
  const Tensor pre_z = conv2d(x, model.encoder_weights, maybe_bias(model.encoder_bias, zero_bias, zeros_e), model.spec);
  const Tensor z = relu(pre_z);
  const Tensor pre_y = conv2d(z, decoder_weights, maybe_bias(model.decoder_bias, zero_bias, zeros_d), model.spec);
  const Tensor y = model.decoder_relu ? relu(pre_y) : pre_y;
  if (y.shape() != x.shape()) {
    throw ShapeError("reconstruction shape " + Tensor::shape_string(y.shape()) + " differs from input shape " +
                     Tensor::shape_string(x.shape()));
  }

  Tensor grad_y = y;
  for (std::size_t i = 0; i < grad_y.size(); ++i) grad_y[i] -= x[i];
  const Tensor grad_pre_y = model.decoder_relu ? relu_backward(grad_y, pre_y) : grad_y;

  const std::size_t kernel = model.kernel();
  const Tensor grad_dec_weights = conv2d_backward_weights(z, grad_pre_y, model.spec, kernel, kernel);
  const Tensor grad_z = conv2d_backward_input(grad_pre_y, decoder_weights, model.spec, z.extent(1), z.extent(2));
  const Tensor grad_pre_z = relu_backward(grad_z, pre_z);

  SampleGradients g;
  g.loss = half_squared_error(x, y);
  // tied_decoder_weights maps a C×K bank back onto K×C with the same flip.
  g.decoder_path = tied_decoder_weights(grad_dec_weights);
  g.encoder_path = conv2d_backward_weights(x, grad_pre_z, model.spec, kernel, kernel);
  g.encoder_bias = channel_sums(grad_pre_z);
  g.decoder_bias = channel_sums(grad_pre_y);
  return g;
}

}  // namespace detail

/// E = 1/2 sum_i ||x_i - decode(encode(x_i))||^2 over the batch.
inline double reconstruction_loss(const CaeModel& model, std::span<const Tensor> batch, bool zero_bias) {
  detail::require_batch(model, batch);
  std::vector<double> per_sample(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    per_sample[i] = detail::half_squared_error(batch[i], reconstruct(model, batch[i], zero_bias));
  });
  double total = 0.0;
  for (double v : per_sample) total += v;
  return total;
}

/**
 * Analytic gradient of the batch reconstruction loss, reported both in total
 * and split into the encoder-path and decoder-path contributions to the
 * shared weight bank. Under BiasMode::always_zero the forward pass treats
 * both biases as zero and the bias gradients are zero.
 */
inline SplitGradients loss_gradients_split(const CaeModel& model, std::span<const Tensor> batch, BiasMode mode) {
  detail::require_batch(model, batch);
  const bool zero_bias = mode == BiasMode::always_zero;
  const Tensor decoder_weights = tied_decoder_weights(model.encoder_weights);

  std::vector<detail::SampleGradients> per_sample(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    per_sample[i] = detail::sample_gradients(model, decoder_weights, batch[i], zero_bias);
  });

  SplitGradients out;
  out.encoder_path = Tensor(model.encoder_weights.shape());
  out.decoder_path = Tensor(model.encoder_weights.shape());
  out.total.encoder_bias = Tensor(model.encoder_bias.shape());
  out.total.decoder_bias = Tensor(model.decoder_bias.shape());
  // Reduced in sample order so the result is independent of thread count.
  for (const auto& g : per_sample) {
    out.loss += g.loss;
    detail::add_into(out.encoder_path, g.encoder_path);
    detail::add_into(out.decoder_path, g.decoder_path);
    if (!zero_bias) {
      detail::add_into(out.total.encoder_bias, g.encoder_bias);
      detail::add_into(out.total.decoder_bias, g.decoder_bias);
    }
  }
  out.total.encoder_weights = out.encoder_path;
  detail::add_into(out.total.encoder_weights, out.decoder_path);
  return out;
}

inline CaeGradients loss_gradients(const CaeModel& model, std::span<const Tensor> batch, BiasMode mode) {
  return loss_gradients_split(model, batch, mode).total;
}

/// Plain SGD: theta -= lr * grad. Biases move only in train-then-zero mode.
inline void sgd_step(CaeModel& model, const CaeGradients& grads, double lr) {
  if (grads.encoder_weights.shape() != model.encoder_weights.shape() ||
      grads.encoder_bias.shape() != model.encoder_bias.shape() ||
      grads.decoder_bias.shape() != model.decoder_bias.shape()) {
    throw ShapeError("sgd_step: gradient shapes do not match the model");
  }
  auto update = [lr](Tensor& param, const Tensor& grad) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
  };
  update(model.encoder_weights, grads.encoder_weights);
  if (model.bias_mode == BiasMode::train_then_zero) {
    update(model.encoder_bias, grads.encoder_bias);
    update(model.decoder_bias, grads.decoder_bias);
  }
}

struct EpochProgress {
  std::size_t epoch;
  double mean_loss;
  double learning_rate;
};

/**
 * Mini-batch SGD over the dataset with plateau annealing.
 *
 * Each epoch reshuffles the sample order with the seeded generator and
 * applies one sgd_step per batch (the last batch may be short). The epoch
 * metric is the per-sample mean of the batch losses. An epoch whose relative
 * improvement over the previous epoch is below plateau_rel_tol counts as
 * stalled; plateau_patience consecutive stalls multiply the rate by
 * anneal_factor, at most max_anneals times.
 *
 * The dataset carries no labels.
 */
inline TrainResult train(CaeModel model, std::span<const Tensor> dataset, const CaeTrainConfig& config,
                         const std::function<void(const EpochProgress&)>& on_epoch = {}) {
  if (dataset.empty()) throw ShapeError("train: empty dataset");
  config.validate();
  model.validate();
  model.bias_mode = config.bias_mode;
  detail::require_batch(model, dataset);
  const bool zero_bias = config.bias_mode == BiasMode::always_zero;
  const double n = static_cast<double>(dataset.size());

  TrainResult result;
  result.history.initial_loss = reconstruction_loss(model, dataset, zero_bias) / n;

  Rng rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double lr = config.learning_rate;
  double previous = std::numeric_limits<double>::quiet_NaN();
  std::size_t stalled = 0;
  std::vector<Tensor> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);

      SplitGradients grads = loss_gradients_split(model, batch, config.bias_mode);
      const double batch_loss = grads.loss;
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch_index + 1));
      }
      epoch_total += batch_loss;
      sgd_step(model, grads.total, lr);
    }

    const double mean = epoch_total / n;
    result.history.epoch_loss.push_back(mean);
    result.history.learning_rate.push_back(lr);
    if (on_epoch) on_epoch({epoch + 1, mean, lr});

    if (std::isfinite(previous)) {
      const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
      const double improvement = (previous - mean) / scale;
      stalled = improvement < config.plateau_rel_tol ? stalled + 1 : 0;
      if (stalled >= config.plateau_patience && result.history.anneals.size() < config.max_anneals) {
        const double next = lr * config.anneal_factor;
        result.history.anneals.push_back({epoch, lr, next});
        lr = next;
        stalled = 0;
      }
    }
    previous = mean;
  }

  result.model = std::move(model);
  return result;
}

/// flatten(maxpool2(encode(x, zero_bias = true)))
inline Tensor extract_features(const CaeModel& model, const Tensor& x) {
  return flatten(maxpool2(encode(model, x, /*zero_bias=*/true)).output);
}

}  // namespace zbcae::cae
