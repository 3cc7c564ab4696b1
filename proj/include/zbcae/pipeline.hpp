#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "zbcae/cae.hpp"
#include "zbcae/checkpoint.hpp"
#include "zbcae/config.hpp"
#include "zbcae/dataset.hpp"
#include "zbcae/errors.hpp"
#include "zbcae/parallel.hpp"
#include "zbcae/random.hpp"
#include "zbcae/svm.hpp"
#include "zbcae/tensor.hpp"

namespace zbcae {

struct CaeSummary {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  double final_learning_rate = 0.0;
  std::vector<cae::AnnealEvent> anneals;
  std::vector<double> epoch_loss;
};

inline CaeSummary summarize(const cae::LossHistory& history, double configured_lr) {
  CaeSummary s;
  s.initial_loss = history.initial_loss;
  s.epochs = history.epoch_loss.size();
  s.final_loss = history.epoch_loss.empty() ? history.initial_loss : history.epoch_loss.back();
  s.final_learning_rate = history.anneals.empty() ? configured_lr : history.anneals.back().to;
  s.anneals = history.anneals;
  s.epoch_loss = history.epoch_loss;
  return s;
}

struct EvalReport {
  double top1 = 0.0;
  std::size_t test_count = 0;
  std::size_t feature_dim = 0;
  std::vector<std::string> classes;
  // Empty when a class has no test samples.
  std::vector<std::optional<double>> per_class_accuracy;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::size_t> predictions;
  std::optional<CaeSummary> cae;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json out;
  out["top1"] = r.top1;
  out["test_count"] = r.test_count;
  out["feature_dim"] = r.feature_dim;
  out["classes"] = r.classes;
  auto per_class = nlohmann::ordered_json::array();
  for (const auto& a : r.per_class_accuracy) per_class.push_back(a ? nlohmann::ordered_json(*a) : nullptr);
  out["per_class_accuracy"] = per_class;
  out["confusion"] = r.confusion;
  out["predictions"] = r.predictions;
  if (r.cae) {
    nlohmann::ordered_json c;
    c["initial_loss"] = r.cae->initial_loss;
    c["final_loss"] = r.cae->final_loss;
    c["epochs"] = r.cae->epochs;
    c["final_learning_rate"] = r.cae->final_learning_rate;
    auto anneals = nlohmann::ordered_json::array();
    for (const auto& a : r.cae->anneals) anneals.push_back({{"epoch", a.epoch + 1}, {"from", a.from}, {"to", a.to}});
    c["anneals"] = anneals;
    c["epoch_loss"] = r.cae->epoch_loss;
    out["cae"] = c;
  }
  out["config"] = r.config;
  return out;
}

inline void l2_normalize_rows(Tensor& features) {
  const std::size_t n = features.extent(0), dim = features.extent(1);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t d = 0; d < dim; ++d) norm += features[i * dim + d] * features[i * dim + d];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t d = 0; d < dim; ++d) features[i * dim + d] /= norm;
    }
  }
}

/// Stacks extract_features over the inputs into an n×D matrix (input order).
inline Tensor extract_feature_matrix(const cae::CaeModel& model, std::span<const Tensor> inputs, bool l2_normalize) {
  if (inputs.empty()) throw ShapeError("no inputs to encode");
  std::vector<Tensor> rows(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { rows[i] = cae::extract_features(model, inputs[i]); });
  const std::size_t dim = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * dim);
  for (const Tensor& r : rows) flat.insert(flat.end(), r.data().begin(), r.data().end());
  Tensor features({rows.size(), dim}, std::move(flat));
  if (l2_normalize) l2_normalize_rows(features);
  return features;
}

/// Scores a trained classifier on a labelled feature matrix.
inline EvalReport evaluate(const svm::SvmModel& model, const Tensor& features, std::span<const std::size_t> labels) {
  EvalReport report;
  report.predictions = svm::predict_all(model, features);
  report.top1 = svm::top1_accuracy(report.predictions, labels);
  report.test_count = labels.size();
  report.feature_dim = features.extent(1);
  report.classes = model.class_names;
  const std::size_t classes = model.classes();
  report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ShapeError("label " + std::to_string(labels[i]) + " outside the class table");
    ++report.confusion[labels[i]][report.predictions[i]];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t total = 0;
    for (std::size_t v : report.confusion[c]) total += v;
    report.per_class_accuracy.push_back(total == 0 ? std::nullopt
                                                   : std::optional<double>(static_cast<double>(report.confusion[c][c]) /
                                                                           static_cast<double>(total)));
  }
  return report;
}

/// Trains a fresh CAE on unlabelled inputs.
inline cae::TrainResult train_cae(std::span<const Tensor> inputs, const PipelineConfig& cfg,
                                  const std::function<void(const cae::EpochProgress&)>& on_epoch = {}) {
  if (inputs.empty()) throw ShapeError("train: empty dataset");
  cae::CaeModel model = cae::init_model(cfg.filters, inputs.front().extent(0), cfg.kernel, cfg.seed);
  model.spec = cfg.spec;
  model.decoder_relu = cfg.decoder_relu;
  return cae::train(std::move(model), inputs, cfg.cae, on_epoch);
}

inline svm::SvmModel train_classifier(const Tensor& features, std::span<const std::size_t> labels,
                                      const std::vector<std::string>& classes, const PipelineConfig& cfg) {
  return svm::train_svm(features, labels, classes.size(), cfg.svm, classes);
}

/**
 * Unsupervised CAE training on the train tensors, zero-bias feature
 * extraction for both splits, SVM training on the train features, and
 * evaluation on the test features.
 */
inline EvalReport run_pipeline(const LabeledTensors& train, const LabeledTensors& test, const PipelineConfig& cfg,
                               const std::function<void(const cae::EpochProgress&)>& on_epoch = {}) {
  if (train.tensors.empty() || test.tensors.empty()) throw ShapeError("train and test splits must be non-empty");
  if (train.tensors.front().shape() != test.tensors.front().shape()) {
    throw ShapeError("train tensors are " + Tensor::shape_string(train.tensors.front().shape()) +
                     " but test tensors are " + Tensor::shape_string(test.tensors.front().shape()));
  }
  if (train.classes != test.classes) throw ShapeError("train and test manifests have different class tables");

  const cae::TrainResult fit = train_cae(train.tensors, cfg, on_epoch);
  const Tensor train_features = extract_feature_matrix(fit.model, train.tensors, cfg.l2_normalize);
  const Tensor test_features = extract_feature_matrix(fit.model, test.tensors, cfg.l2_normalize);
  const svm::SvmModel classifier = train_classifier(train_features, train.labels, train.classes, cfg);

  EvalReport report = evaluate(classifier, test_features, test.labels);
  report.cae = summarize(fit.history, cfg.cae.learning_rate);
  report.config = cfg.echo;
  return report;
}

struct SweepRow {
  std::size_t filters;
  double top1;
  std::size_t feature_dim;
};

/// One run_pipeline per filter count with otherwise identical settings.
inline std::vector<SweepRow> filter_size_sweep(const LabeledTensors& train, const LabeledTensors& test,
                                               const PipelineConfig& base, std::span<const std::size_t> filter_counts) {
  if (filter_counts.empty()) throw ConfigError("sweep needs at least one filter count");
  std::vector<SweepRow> rows;
  for (std::size_t k : filter_counts) {
    PipelineConfig cfg = base;
    cfg.filters = k;
    cfg.echo["filters"] = k;
    const EvalReport r = run_pipeline(train, test, cfg);
    rows.push_back({k, r.top1, r.feature_dim});
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows, const nlohmann::ordered_json& config) {
  nlohmann::ordered_json out;
  auto table = nlohmann::ordered_json::array();
  for (const auto& r : rows) table.push_back({{"filters", r.filters}, {"top1", r.top1}, {"feature_dim", r.feature_dim}});
  out["sweep"] = table;
  out["config"] = config;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks.

inline constexpr double kGradcheckEpsilon = 1e-6;

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace detail {

// Max relative error between analytic and central-difference gradients of
// f over every coordinate of param.
template <typename Loss>
double max_fd_error(Tensor& param, const Tensor& analytic, Loss&& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + kGradcheckEpsilon;
    const double up = loss();
    param[i] = saved - kGradcheckEpsilon;
    const double down = loss();
    param[i] = saved;
    const double numeric = (up - down) / (2.0 * kGradcheckEpsilon);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

}  // namespace detail

struct CaeGradcheck {
  double weights = 0.0;
  double encoder_bias = 0.0;
  double decoder_bias = 0.0;
};

inline CaeGradcheck gradcheck_cae(cae::CaeModel model, std::span<const Tensor> batch, cae::BiasMode mode) {
  model.bias_mode = mode;
  const bool zero_bias = mode == cae::BiasMode::always_zero;
  const cae::CaeGradients g = cae::loss_gradients(model, batch, mode);
  auto loss = [&] { return cae::reconstruction_loss(model, batch, zero_bias); };
  CaeGradcheck out;
  out.weights = detail::max_fd_error(model.encoder_weights, g.encoder_weights, loss);
  out.encoder_bias = detail::max_fd_error(model.encoder_bias, g.encoder_bias, loss);
  out.decoder_bias = detail::max_fd_error(model.decoder_bias, g.decoder_bias, loss);
  return out;
}

struct SvmGradcheck {
  double weights = 0.0;
  double biases = 0.0;
};

inline SvmGradcheck gradcheck_svm(Tensor weights, Tensor biases, const Tensor& features,
                                  std::span<const std::size_t> labels, double lambda) {
  const svm::ObjectiveValue g = svm::squared_hinge_objective(weights, biases, features, labels, lambda);
  auto loss = [&] { return svm::squared_hinge_objective(weights, biases, features, labels, lambda).value; };
  SvmGradcheck out;
  out.weights = detail::max_fd_error(weights, g.grad_weights, loss);
  out.biases = detail::max_fd_error(biases, g.grad_biases, loss);
  return out;
}

struct GradcheckDims {
  std::size_t channels = 2;
  std::size_t filters = 3;
  std::size_t height = 5;
  std::size_t width = 5;
  std::size_t batch = 2;
  std::size_t svm_samples = 12;
  std::size_t svm_dim = 5;
  std::size_t svm_classes = 3;
};

struct GradcheckReport {
  CaeGradcheck cae;
  SvmGradcheck svm;
};

/// Seeded random CAE (train-then-zero, random biases) and SVM instances,
/// each checked against central differences with epsilon 1e-6.
inline GradcheckReport gradcheck_report(std::uint64_t seed, const GradcheckDims& dims = {}) {
  Rng rng(seed);
  cae::CaeModel model = cae::init_model(dims.filters, dims.channels, 3, seed);
  for (double& b : model.encoder_bias.data()) b = rng.uniform(-0.2, 0.2);
  for (double& b : model.decoder_bias.data()) b = rng.uniform(-0.2, 0.2);
  std::vector<Tensor> batch;
  for (std::size_t i = 0; i < dims.batch; ++i) {
    Tensor x({dims.channels, dims.height, dims.width});
    for (double& v : x.data()) v = rng.uniform(0.0, 1.0);
    batch.push_back(std::move(x));
  }

  Tensor features({dims.svm_samples, dims.svm_dim});
  for (double& v : features.data()) v = rng.uniform(-1.0, 1.0);
  std::vector<std::size_t> labels(dims.svm_samples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % dims.svm_classes;
  Tensor weights({dims.svm_classes, dims.svm_dim});
  for (double& v : weights.data()) v = rng.uniform(-0.5, 0.5);
  Tensor biases({dims.svm_classes});
  for (double& v : biases.data()) v = rng.uniform(-0.5, 0.5);

  GradcheckReport report;
  report.cae = gradcheck_cae(std::move(model), batch, cae::BiasMode::train_then_zero);
  report.svm = gradcheck_svm(std::move(weights), std::move(biases), features, labels, 1.0);
  return report;
}

inline nlohmann::ordered_json to_json(const GradcheckReport& r) {
  nlohmann::ordered_json out;
  out["cae_weights"] = r.cae.weights;
  out["cae_biases"] = std::max(r.cae.encoder_bias, r.cae.decoder_bias);
  out["svm_weights"] = r.svm.weights;
  out["svm_biases"] = r.svm.biases;
  out["cae_encoder_bias"] = r.cae.encoder_bias;
  out["cae_decoder_bias"] = r.cae.decoder_bias;
  return out;
}

}  // namespace zbcae
