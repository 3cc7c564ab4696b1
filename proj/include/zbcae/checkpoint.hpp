#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "zbcae/cae.hpp"
#include "zbcae/errors.hpp"
#include "zbcae/svm.hpp"
#include "zbcae/tensor_file.hpp"

// Record layouts stored in the tensor container.
//
// CAE model:    W_e (K×C×k×k), b_e (K), b_d (C), spec [stride, pad],
//               bias_mode [0 = train-then-zero, 1 = always-zero],
//               decoder_relu [1 | 0]
// SVM model:    weights (classes×D), biases (classes), lambda [λ],
//               class/<name> [index] per class
// Feature set:  features (n×D), labels (n), class/<name> [index] per class

namespace zbcae {

namespace detail {

inline double scalar_record(const NamedTensors& records, const std::string& name) {
  const Tensor& t = require_record(records, name);
  if (t.size() != 1) throw FormatError("record '" + name + "' must hold a single value");
  return t[0];
}

inline std::size_t index_value(double v, const std::string& what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) {
    throw FormatError(what + " must be a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

inline void append_class_table(NamedTensors& records, const std::vector<std::string>& names) {
  for (std::size_t c = 0; c < names.size(); ++c) {
    records.emplace_back("class/" + names[c], Tensor::vector({static_cast<double>(c)}));
  }
}

inline std::vector<std::string> read_class_table(const NamedTensors& records) {
  std::vector<std::pair<std::size_t, std::string>> entries;
  for (const auto& [name, t] : records) {
    if (name.rfind("class/", 0) != 0) continue;
    if (t.size() != 1) throw FormatError("class record '" + name + "' must hold a single index");
    entries.emplace_back(index_value(t[0], "class index of '" + name + "'"), name.substr(6));
  }
  std::vector<std::string> names(entries.size());
  std::vector<bool> filled(entries.size(), false);
  for (auto& [index, name] : entries) {
    if (index >= names.size() || filled[index]) throw FormatError("class table indices are not 0..n-1");
    names[index] = std::move(name);
    filled[index] = true;
  }
  return names;
}

}  // namespace detail

inline NamedTensors cae_model_records(const cae::CaeModel& model) {
  return {
      {"W_e", model.encoder_weights},
      {"b_e", model.encoder_bias},
      {"b_d", model.decoder_bias},
      {"spec", Tensor::vector({static_cast<double>(model.spec.stride), static_cast<double>(model.spec.pad)})},
      {"bias_mode", Tensor::vector({model.bias_mode == cae::BiasMode::always_zero ? 1.0 : 0.0})},
      {"decoder_relu", Tensor::vector({model.decoder_relu ? 1.0 : 0.0})},
  };
}

inline cae::CaeModel cae_model_from_records(const NamedTensors& records) {
  cae::CaeModel model;
  model.encoder_weights = require_record(records, "W_e");
  model.encoder_bias = require_record(records, "b_e");
  model.decoder_bias = require_record(records, "b_d");
  const Tensor& spec = require_record(records, "spec");
  if (spec.size() != 2) throw FormatError("record 'spec' must hold [stride, pad]");
  model.spec.stride = detail::index_value(spec[0], "stride");
  model.spec.pad = detail::index_value(spec[1], "pad");
  if (model.spec.stride == 0) throw FormatError("stride must be positive");
  const double mode = detail::scalar_record(records, "bias_mode");
  if (mode != 0.0 && mode != 1.0) throw FormatError("record 'bias_mode' must be 0 or 1");
  model.bias_mode = mode == 1.0 ? cae::BiasMode::always_zero : cae::BiasMode::train_then_zero;
  const double relu_flag = detail::scalar_record(records, "decoder_relu");
  if (relu_flag != 0.0 && relu_flag != 1.0) throw FormatError("record 'decoder_relu' must be 0 or 1");
  model.decoder_relu = relu_flag == 1.0;
  try {
    model.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent CAE checkpoint: ") + e.what());
  }
  return model;
}

inline void save_cae_model(const std::filesystem::path& path, const cae::CaeModel& model) {
  save_tensors(path, cae_model_records(model));
}

inline cae::CaeModel load_cae_model(const std::filesystem::path& path) {
  try {
    return cae_model_from_records(load_tensors(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline NamedTensors svm_model_records(const svm::SvmModel& model) {
  NamedTensors records{
      {"weights", model.weights},
      {"biases", model.biases},
      {"lambda", Tensor::vector({model.lambda})},
  };
  detail::append_class_table(records, model.class_names);
  return records;
}

inline svm::SvmModel svm_model_from_records(const NamedTensors& records) {
  svm::SvmModel model;
  model.weights = require_record(records, "weights");
  model.biases = require_record(records, "biases");
  model.lambda = detail::scalar_record(records, "lambda");
  model.class_names = detail::read_class_table(records);
  if (model.weights.rank() != 2 || model.biases.rank() != 1 || model.biases.extent(0) != model.weights.extent(0) ||
      model.class_names.size() != model.weights.extent(0)) {
    throw FormatError("inconsistent SVM checkpoint shapes");
  }
  return model;
}

inline void save_svm_model(const std::filesystem::path& path, const svm::SvmModel& model) {
  save_tensors(path, svm_model_records(model));
}

inline svm::SvmModel load_svm_model(const std::filesystem::path& path) {
  try {
    return svm_model_from_records(load_tensors(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Extracted features with their labels, as written by `encode`.
struct FeatureSet {
  Tensor features;  // n×D
  std::vector<std::size_t> labels;
  std::vector<std::string> classes;
};

inline void save_feature_set(const std::filesystem::path& path, const FeatureSet& set) {
  std::vector<double> labels(set.labels.begin(), set.labels.end());
  NamedTensors records{{"features", set.features}, {"labels", Tensor::vector(std::move(labels))}};
  detail::append_class_table(records, set.classes);
  save_tensors(path, records);
}

inline FeatureSet load_feature_set(const std::filesystem::path& path) {
  try {
    const NamedTensors records = load_tensors(path);
    FeatureSet set;
    set.features = require_record(records, "features");
    const Tensor& labels = require_record(records, "labels");
    set.classes = detail::read_class_table(records);
    if (set.features.rank() != 2 || labels.rank() != 1 || labels.extent(0) != set.features.extent(0)) {
      throw FormatError("features must be n×D with n labels");
    }
    for (double v : labels.data()) {
      const std::size_t label = detail::index_value(v, "label");
      if (label >= set.classes.size()) throw FormatError("label " + std::to_string(label) + " outside class table");
      set.labels.push_back(label);
    }
    return set;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace zbcae
