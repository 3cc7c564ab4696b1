#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "zbcae/errors.hpp"
#include "zbcae/random.hpp"
#include "zbcae/tensor.hpp"
#include "zbcae/tensor_file.hpp"

namespace zbcae {

struct ManifestItem {
  std::string path;    // relative to the manifest's directory
  std::string record;  // record name inside the tensor file
  std::size_t label = 0;
};

/// JSON: {"classes": [...], "items": [{"path", "record", "label"}, ...]}
struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<ManifestItem> items;
};

/// Tensors in manifest order with their labels.
struct LabeledTensors {
  std::vector<Tensor> tensors;
  std::vector<std::size_t> labels;
  std::vector<std::string> classes;
};

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["classes"] = manifest.classes;
  doc["items"] = nlohmann::ordered_json::array();
  for (const auto& item : manifest.items) {
    doc["items"].push_back({{"path", item.path}, {"record", item.record}, {"label", item.label}});
  }
  return doc;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  DatasetManifest manifest;
  try {
    manifest.classes = doc.at("classes").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("items")) {
      ManifestItem item;
      item.path = entry.at("path").get<std::string>();
      item.record = entry.at("record").get<std::string>();
      const auto label = entry.at("label").get<long long>();
      if (label < 0 || static_cast<std::size_t>(label) >= manifest.classes.size()) {
        throw FormatError("label " + std::to_string(label) + " is outside [0, " +
                          std::to_string(manifest.classes.size()) + ")");
      }
      item.label = static_cast<std::size_t>(label);
      manifest.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return manifest;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_file_bytes(path, manifest_to_json(manifest).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: '" + path.string() + "'");
  try {
    return manifest_from_json(nlohmann::json::parse(read_file_bytes(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed JSON: " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Loads every item of a manifest, resolving paths against its directory.
/// All tensors must be C×H×W with identical shapes.
inline LabeledTensors load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::map<std::string, NamedTensors> cache;
  LabeledTensors out;
  out.classes = manifest.classes;
  for (const auto& item : manifest.items) {
    auto it = cache.find(item.path);
    if (it == cache.end()) {
      const auto file = base / item.path;
      if (!std::filesystem::exists(file)) throw IoError("tensor file not found: '" + file.string() + "'");
      it = cache.emplace(item.path, load_tensors(file)).first;
    }
    const Tensor* t = find_record(it->second, item.record);
    if (t == nullptr) throw FormatError(item.path + ": missing record '" + item.record + "'");
    if (t->rank() != 3) {
      throw FormatError(item.path + ": record '" + item.record + "' must be C×H×W, got " +
                        Tensor::shape_string(t->shape()));
    }
    if (!out.tensors.empty() && t->shape() != out.tensors.front().shape()) {
      throw FormatError(manifest_path.string() + ": item '" + item.record + "' has shape " +
                        Tensor::shape_string(t->shape()) + ", expected " +
                        Tensor::shape_string(out.tensors.front().shape()));
    }
    out.tensors.push_back(*t);
    out.labels.push_back(item.label);
  }
  return out;
}

struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t samples_per_class = 40;
  std::size_t channels = 12;
  std::size_t height = 6;
  std::size_t width = 6;
  double mu = 2.0;
  double sigma = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_classes == 0 || samples_per_class == 0 || channels == 0 || height == 0 || width == 0) {
      throw ConfigError("synthetic spec extents and counts must be positive");
    }
    if (n_classes > channels) {
      throw ConfigError("synthetic spec: " + std::to_string(n_classes) + " classes need at least as many channels, got " +
                        std::to_string(channels));
    }
    if (!(mu >= 0.0) || !(sigma > 0.0)) throw ConfigError("synthetic spec: need mu >= 0 and sigma > 0");
  }
};

struct SyntheticData {
  LabeledTensors train;
  LabeledTensors test;
};

/**
 * Class-conditional non-negative feature maps.
 *
 * A sample of class c is relu(noise + mu * mask_c), noise ~ N(0, sigma^2)
 * elementwise, where mask_c covers channels [c*B, (c+1)*B) with
 * B = floor(C / n_classes). Samples are drawn class-interleaved; within each
 * class every fifth sample goes to the test split.
 */
inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData data;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    data.train.classes.push_back("class_" + std::to_string(c));
  }
  data.test.classes = data.train.classes;

  const std::size_t block = spec.channels / spec.n_classes;
  const std::size_t plane = spec.height * spec.width;
  Rng rng(spec.seed);
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      Tensor x({spec.channels, spec.height, spec.width});
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const double shift = (ch >= c * block && ch < (c + 1) * block) ? spec.mu : 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = spec.sigma * rng.normal() + shift;
          x[ch * plane + p] = v > 0.0 ? v : 0.0;
        }
      }
      LabeledTensors& split = (s % 5 == 4) ? data.test : data.train;
      split.tensors.push_back(std::move(x));
      split.labels.push_back(c);
    }
  }
  return data;
}

/// Writes one tensor file and one manifest per split:
/// <dir>/{train,test}.zten and <dir>/{train,test}.json.
inline void write_split(const std::filesystem::path& dir, const std::string& name, const LabeledTensors& split) {
  NamedTensors records;
  DatasetManifest manifest;
  manifest.classes = split.classes;
  for (std::size_t i = 0; i < split.tensors.size(); ++i) {
    char record[32];
    std::snprintf(record, sizeof(record), "sample_%05zu", i);
    records.emplace_back(record, split.tensors[i]);
    manifest.items.push_back({name + ".zten", record, split.labels[i]});
  }
  save_tensors(dir / (name + ".zten"), records);
  write_manifest(dir / (name + ".json"), manifest);
}

inline void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  write_split(dir, "train", data.train);
  write_split(dir, "test", data.test);
}

}  // namespace zbcae
