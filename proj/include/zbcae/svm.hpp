#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "zbcae/errors.hpp"
#include "zbcae/lbfgs.hpp"
#include "zbcae/tensor.hpp"

namespace zbcae::svm {

/// One-vs-rest linear classifier: score_c(x) = w_c . x + b_c.
struct SvmModel {
  Tensor weights;  // n_classes×D
  Tensor biases;   // n_classes
  std::vector<std::string> class_names;
  double lambda = 1.0;

  std::size_t classes() const { return weights.extent(0); }
  std::size_t dim() const { return weights.extent(1); }
};

struct SvmTrainConfig {
  double lambda = 1.0;
  LbfgsConfig lbfgs;
  std::uint64_t seed = 1;
};

struct ObjectiveValue {
  double value = 0.0;
  Tensor grad_weights;
  Tensor grad_biases;
};

namespace detail {

inline void check_problem(std::size_t classes, std::size_t dim, const Tensor& features,
                          std::span<const std::size_t> labels) {
  zbcae::detail::require_rank(features, 2, "feature matrix");
  if (features.extent(1) != dim) {
    throw ShapeError("feature dimension " + std::to_string(features.extent(1)) + " does not match model dimension " +
                     std::to_string(dim));
  }
  if (labels.size() != features.extent(0)) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match sample count " +
                     std::to_string(features.extent(0)));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw ShapeError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " is out of range for " + std::to_string(classes) + " classes");
    }
  }
}

// Objective over raw parameter spans: weights row-major classes×dim, then biases.
inline double objective_raw(std::span<const double> w, std::span<const double> b, const Tensor& features,
                            std::span<const std::size_t> labels, double lambda, std::span<double> grad_w,
                            std::span<double> grad_b) {
  const std::size_t classes = b.size();
  const std::size_t dim = features.extent(1);
  const std::size_t n = features.extent(0);
  double value = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double* wc = w.data() + c * dim;
    double* gwc = grad_w.data() + c * dim;
    double reg = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      reg += wc[d] * wc[d];
      gwc[d] = 2.0 * lambda * wc[d];
    }
    value += lambda * reg;
    grad_b[c] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = features.data().data() + i * dim;
      double score = b[c];
      for (std::size_t d = 0; d < dim; ++d) score += wc[d] * xi[d];
      const double target = labels[i] == c ? 1.0 : -1.0;
      const double slack = 1.0 - target * score;
      if (slack > 0.0) {
        value += slack * slack;
        const double coeff = -2.0 * target * slack;
        for (std::size_t d = 0; d < dim; ++d) gwc[d] += coeff * xi[d];
        grad_b[c] += coeff;
      }
    }
  }
  return value;
}

}  // namespace detail

/**
 * Squared-hinge one-vs-rest objective
 *
 *   sum_c [ lambda ||w_c||^2 + sum_i max(0, 1 - t_ic (w_c . x_i + b_c))^2 ]
 *
 * with t_ic = +1 when y_i = c and -1 otherwise. Biases are not regularized.
 */
inline ObjectiveValue squared_hinge_objective(const Tensor& weights, const Tensor& biases, const Tensor& features,
                                              std::span<const std::size_t> labels, double lambda) {
  zbcae::detail::require_rank(weights, 2, "svm weights");
  zbcae::detail::require_rank(biases, 1, "svm biases");
  if (biases.extent(0) != weights.extent(0)) throw ShapeError("svm bias count does not match class count");
  detail::check_problem(weights.extent(0), weights.extent(1), features, labels);
  ObjectiveValue out{0.0, Tensor(weights.shape()), Tensor(biases.shape())};
  out.value = detail::objective_raw(weights.data(), biases.data(), features, labels, lambda, out.grad_weights.data(),
                                    out.grad_biases.data());
  return out;
}

/// Minimizes the squared-hinge objective from zero with L-BFGS.
inline SvmModel train_svm(const Tensor& features, std::span<const std::size_t> labels, std::size_t classes,
                          const SvmTrainConfig& config, std::vector<std::string> class_names = {}) {
  if (classes < 2) throw ConfigError("train_svm: at least two classes are required");
  if (!(config.lambda >= 0.0)) throw ConfigError("train_svm: lambda must be non-negative");
  zbcae::detail::require_rank(features, 2, "feature matrix");
  const std::size_t dim = features.extent(1);
  detail::check_problem(classes, dim, features, labels);
  if (features.extent(0) < classes) {
    throw ShapeError("train_svm: " + std::to_string(features.extent(0)) + " samples for " + std::to_string(classes) +
                     " classes");
  }
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t y : labels) ++counts[y];
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) std::clog << "warning: class " << c << " has no training samples\n";
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < classes; ++c) class_names.push_back("class_" + std::to_string(c));
  }
  if (class_names.size() != classes) throw ShapeError("train_svm: class name table has the wrong length");

  const std::size_t weight_count = classes * dim;
  auto objective = [&](std::span<const double> theta, std::span<double> grad) {
    return detail::objective_raw(theta.first(weight_count), theta.subspan(weight_count), features, labels,
                                 config.lambda, grad.first(weight_count), grad.subspan(weight_count));
  };
  LbfgsResult fit = lbfgs_minimize(objective, std::vector<double>(weight_count + classes, 0.0), config.lbfgs);

  SvmModel model;
  model.weights = Tensor({classes, dim}, std::vector<double>(fit.x.begin(), fit.x.begin() + weight_count));
  model.biases = Tensor({classes}, std::vector<double>(fit.x.begin() + weight_count, fit.x.end()));
  model.class_names = std::move(class_names);
  model.lambda = config.lambda;
  return model;
}

/// Argmax of the class scores; ties go to the lowest class index.
inline std::size_t predict(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw ShapeError("predict: input dimension " + std::to_string(x.size()) + " does not match model dimension " +
                     std::to_string(model.dim()));
  }
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t c = 0; c < model.classes(); ++c) {
    double score = model.biases[c];
    for (std::size_t d = 0; d < x.size(); ++d) score += model.weights[c * x.size() + d] * x[d];
    if (c == 0 || score > best_score) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

inline std::vector<std::size_t> predict_all(const SvmModel& model, const Tensor& features) {
  zbcae::detail::require_rank(features, 2, "feature matrix");
  std::vector<std::size_t> out(features.extent(0));
  const std::size_t dim = features.extent(1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict(model, features.data().subspan(i * dim, dim));
  return out;
}

inline double top1_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("top1_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ShapeError("top1_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace zbcae::svm
