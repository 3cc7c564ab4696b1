#pragma once

#include <algorithm>
#include <cerrno>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "zbcae/cae.hpp"
#include "zbcae/dataset.hpp"
#include "zbcae/errors.hpp"
#include "zbcae/svm.hpp"
#include "zbcae/tensor_file.hpp"

namespace zbcae {

enum class SettingType { integer, real, boolean, text };

struct SettingSpec {
  std::string_view key;
  SettingType type;
  std::string_view fallback;
};

// Every recognised key with its built-in default. CAE and SVM defaults
// target 256x6x6 CNN feature maps.
inline const std::vector<SettingSpec>& setting_specs() {
  static const std::vector<SettingSpec> specs{
      {"filters", SettingType::integer, "4096"},
      {"kernel", SettingType::integer, "3"},
      {"stride", SettingType::integer, "1"},
      {"pad", SettingType::integer, "1"},
      {"pool", SettingType::integer, "2"},
      {"epochs", SettingType::integer, "100"},
      {"batch_size", SettingType::integer, "512"},
      {"learning_rate", SettingType::real, "1e-5"},
      {"anneal_factor", SettingType::real, "0.1"},
      {"plateau_patience", SettingType::integer, "5"},
      {"plateau_rel_tol", SettingType::real, "1e-3"},
      {"max_anneals", SettingType::integer, "3"},
      {"bias_mode", SettingType::text, "train-then-zero"},
      {"decoder_activation", SettingType::text, "relu"},
      {"seed", SettingType::integer, "1"},
      {"lambda", SettingType::real, "1"},
      {"lbfgs_memory", SettingType::integer, "10"},
      {"lbfgs_initial_step", SettingType::real, "0.1"},
      {"lbfgs_armijo_c1", SettingType::real, "1e-4"},
      {"lbfgs_backtrack_factor", SettingType::real, "0.5"},
      {"lbfgs_max_iters", SettingType::integer, "500"},
      {"lbfgs_grad_tol", SettingType::real, "1e-6"},
      {"lbfgs_rel_loss_tol", SettingType::real, "1e-9"},
      {"l2_normalize", SettingType::boolean, "false"},
      {"n_classes", SettingType::integer, "3"},
      {"samples_per_class", SettingType::integer, "40"},
      {"channels", SettingType::integer, "12"},
      {"height", SettingType::integer, "6"},
      {"width", SettingType::integer, "6"},
      {"mu", SettingType::real, "2"},
      {"sigma", SettingType::real, "1"},
      {"synthetic_seed", SettingType::integer, "7"},
  };
  return specs;
}

inline const SettingSpec* find_setting(std::string_view key) {
  for (const auto& s : setting_specs()) {
    if (s.key == key) return &s;
  }
  return nullptr;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ConfigError("setting '" + key + "' is out of range: '" + text + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ConfigError("setting '" + key + "' expects a finite real number, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("setting '" + key + "' expects a boolean, got '" + text + "'");
}

}  // namespace detail

/// Parses flat `key = value` text. `#` starts a comment; blank lines are ignored.
inline std::map<std::string, std::string> parse_config_text(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> values;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = detail::trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(content).substr(0, eq));
    const std::string value = detail::trim(std::string_view(content).substr(eq + 1));
    if (find_setting(key) == nullptr) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": unknown setting '" + key + "'");
    }
    if (values.count(key)) throw FormatError(origin + ":" + std::to_string(line_no) + ": duplicate setting '" + key + "'");
    values[key] = value;
  }
  return values;
}

inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: '" + path.string() + "'");
  return parse_config_text(read_file_bytes(path), path.string());
}

/**
 * Fully resolved settings. Precedence: explicit flag, then config file, then
 * the built-in default.
 */
class Settings {
 public:
  Settings() : Settings({}, {}) {}

  Settings(const std::map<std::string, std::string>& file, const std::map<std::string, std::string>& flags) {
    for (const auto& spec : setting_specs()) {
      const std::string key(spec.key);
      if (auto it = flags.find(key); it != flags.end()) {
        values_[key] = it->second;
      } else if (auto jt = file.find(key); jt != file.end()) {
        values_[key] = jt->second;
      } else {
        values_[key] = std::string(spec.fallback);
      }
    }
    for (const auto& [key, _] : flags) {
      if (find_setting(key) == nullptr) throw ConfigError("unknown setting '" + key + "'");
    }
    // Type-check every value up front.
    (void)to_json();
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown setting '" + key + "'");
    return it->second;
  }

  std::uint64_t get_u64(const std::string& key) const { return detail::parse_unsigned(key, raw(key)); }
  std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }
  double get_real(const std::string& key) const { return detail::parse_real(key, raw(key)); }
  bool get_bool(const std::string& key) const { return detail::parse_bool(key, raw(key)); }
  const std::string& get_text(const std::string& key) const { return raw(key); }

  /// Typed echo of every setting in declaration order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& spec : setting_specs()) {
      const std::string key(spec.key);
      switch (spec.type) {
        case SettingType::integer: out[key] = get_u64(key); break;
        case SettingType::real: out[key] = get_real(key); break;
        case SettingType::boolean: out[key] = get_bool(key); break;
        case SettingType::text: out[key] = get_text(key); break;
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Everything run_pipeline needs, derived from Settings.
struct PipelineConfig {
  std::size_t filters = 4096;
  std::size_t kernel = 3;
  ConvSpec spec{1, 1};
  bool decoder_relu = true;
  bool l2_normalize = false;
  std::uint64_t seed = 1;
  cae::CaeTrainConfig cae;
  svm::SvmTrainConfig svm;
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
};

inline PipelineConfig pipeline_config(const Settings& s) {
  PipelineConfig cfg;
  cfg.filters = s.get_size("filters");
  cfg.kernel = s.get_size("kernel");
  cfg.spec = ConvSpec{s.get_size("stride"), s.get_size("pad")};
  if (cfg.filters == 0) throw ConfigError("filters must be positive");
  if (cfg.kernel == 0 || cfg.kernel % 2 == 0) throw ConfigError("kernel must be a positive odd integer");
  if (!(cfg.spec == cae::same_spec(cfg.kernel))) {
    throw ConfigError("the auto-encoder needs extent-preserving geometry: stride 1 and pad (kernel-1)/2 = " +
                      std::to_string((cfg.kernel - 1) / 2));
  }
  if (s.get_size("pool") != 2) throw ConfigError("only pool = 2 is supported");
  const std::string& activation = s.get_text("decoder_activation");
  if (activation != "relu" && activation != "identity") {
    throw ConfigError("decoder_activation must be relu or identity, got '" + activation + "'");
  }
  cfg.decoder_relu = activation == "relu";
  cfg.l2_normalize = s.get_bool("l2_normalize");
  cfg.seed = s.get_u64("seed");

  cfg.cae.epochs = s.get_size("epochs");
  cfg.cae.batch_size = s.get_size("batch_size");
  cfg.cae.learning_rate = s.get_real("learning_rate");
  cfg.cae.anneal_factor = s.get_real("anneal_factor");
  cfg.cae.plateau_patience = s.get_size("plateau_patience");
  cfg.cae.plateau_rel_tol = s.get_real("plateau_rel_tol");
  cfg.cae.max_anneals = s.get_size("max_anneals");
  cfg.cae.bias_mode = cae::parse_bias_mode(s.get_text("bias_mode"));
  cfg.cae.seed = cfg.seed;
  cfg.cae.validate();

  cfg.svm.lambda = s.get_real("lambda");
  if (cfg.svm.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  cfg.svm.seed = cfg.seed;
  cfg.svm.lbfgs.memory = s.get_size("lbfgs_memory");
  cfg.svm.lbfgs.initial_step = s.get_real("lbfgs_initial_step");
  cfg.svm.lbfgs.armijo_c1 = s.get_real("lbfgs_armijo_c1");
  cfg.svm.lbfgs.backtrack_factor = s.get_real("lbfgs_backtrack_factor");
  cfg.svm.lbfgs.max_iters = s.get_size("lbfgs_max_iters");
  cfg.svm.lbfgs.grad_tol = s.get_real("lbfgs_grad_tol");
  cfg.svm.lbfgs.rel_loss_tol = s.get_real("lbfgs_rel_loss_tol");
  cfg.svm.lbfgs.validate();

  cfg.echo = s.to_json();
  return cfg;
}

inline SyntheticSpec synthetic_spec(const Settings& s) {
  SyntheticSpec spec;
  spec.n_classes = s.get_size("n_classes");
  spec.samples_per_class = s.get_size("samples_per_class");
  spec.channels = s.get_size("channels");
  spec.height = s.get_size("height");
  spec.width = s.get_size("width");
  spec.mu = s.get_real("mu");
  spec.sigma = s.get_real("sigma");
  spec.seed = s.get_u64("synthetic_seed");
  spec.validate();
  return spec;
}

}  // namespace zbcae
