// Command-line driver: synthetic data generation, CAE training, feature
// encoding, SVM training/evaluation, end-to-end runs, filter sweeps and
// gradient checks.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data/format/IO
// error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "zbcae/zbcae.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

// Config-file path, repeated --set overrides and named flag overrides for
// one subcommand.
struct SettingSources {
  std::string config_path;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flags;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value settings file");
    cmd->add_option("--set", assignments, "override a setting (key=value), repeatable");
  }

  zbcae::Settings resolve() const {
    std::map<std::string, std::string> file;
    if (!config_path.empty()) file = zbcae::read_config_file(config_path);
    std::map<std::string, std::string> merged;
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw zbcae::ConfigError("--set expects key=value, got '" + a + "'");
      merged[zbcae::detail::trim(a.substr(0, eq))] = zbcae::detail::trim(a.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) merged[k] = v;
    return zbcae::Settings(file, merged);
  }
};

// Binds a string flag whose value, when given, overrides `key`.
void flag_override(CLI::App* cmd, SettingSources& sources, const std::string& flag, const std::string& key,
                   const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&sources, key](const std::string& v) { sources.flags[key] = v; }, help);
}

void print_json(const json& doc) { std::cout << doc.dump(2) << "\n"; }

void emit_report(const json& report, const std::string& path) {
  if (path == "-") {
    print_json(report);
    return;
  }
  zbcae::write_file_bytes(path, report.dump(2) + "\n");
  json summary;
  summary["report"] = path;
  if (report.contains("top1")) summary["top1"] = report["top1"];
  print_json(summary);
}

void progress_line(const zbcae::cae::EpochProgress& p) {
  json line{{"epoch", p.epoch}, {"mean_loss", p.mean_loss}, {"lr", p.learning_rate}};
  std::cerr << line.dump() << "\n";
}

json history_json(const zbcae::cae::LossHistory& h, double lr) {
  const zbcae::CaeSummary s = zbcae::summarize(h, lr);
  json out;
  out["initial_loss"] = s.initial_loss;
  out["final_loss"] = s.final_loss;
  out["epochs"] = s.epochs;
  out["final_learning_rate"] = s.final_learning_rate;
  out["anneals"] = s.anneals.size();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-bias convolutional auto-encoder features with a squared-hinge linear SVM"};
  app.require_subcommand(1);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic train/test feature-map dataset");
  SettingSources gen_src;
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "synthetic spec (key = value)")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--set", gen_src.assignments, "override a spec setting (key=value)");

  // train-cae
  auto* tcae = app.add_subcommand("train-cae", "train the auto-encoder on a manifest (labels unused)");
  SettingSources tcae_src;
  std::string tcae_train, tcae_out;
  tcae->add_option("--train", tcae_train, "training manifest")->required();
  tcae->add_option("--out", tcae_out, "model checkpoint path")->required();
  tcae_src.add_to(tcae);
  flag_override(tcae, tcae_src, "--filters", "filters", "filter count K");
  flag_override(tcae, tcae_src, "--epochs", "epochs", "epochs");
  flag_override(tcae, tcae_src, "--batch", "batch_size", "batch size");
  flag_override(tcae, tcae_src, "--lr", "learning_rate", "initial learning rate");
  flag_override(tcae, tcae_src, "--bias-mode", "bias_mode", "train-then-zero | always-zero");
  flag_override(tcae, tcae_src, "--seed", "seed", "seed");

  // encode
  auto* enc = app.add_subcommand("encode", "extract zero-bias pooled features for a manifest");
  std::string enc_model, enc_manifest, enc_out;
  bool enc_l2 = false;
  enc->add_option("--model", enc_model, "CAE checkpoint")->required();
  enc->add_option("--manifest", enc_manifest, "dataset manifest")->required();
  enc->add_option("--out", enc_out, "feature file")->required();
  enc->add_flag("--l2-normalize", enc_l2, "l2-normalize each feature vector");

  // train-svm
  auto* tsvm = app.add_subcommand("train-svm", "train the squared-hinge linear SVM on a feature file");
  SettingSources tsvm_src;
  std::string tsvm_features, tsvm_out;
  tsvm->add_option("--features", tsvm_features, "feature file")->required();
  tsvm->add_option("--out", tsvm_out, "SVM checkpoint path")->required();
  tsvm_src.add_to(tsvm);
  flag_override(tsvm, tsvm_src, "--lambda", "lambda", "regularization weight");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score an SVM on a feature file");
  SettingSources eval_src;
  std::string eval_svm, eval_features, eval_report;
  eval->add_option("--svm", eval_svm, "SVM checkpoint")->required();
  eval->add_option("--features", eval_features, "feature file")->required();
  eval->add_option("--report", eval_report, "report path ('-' for stdout)")->required();
  eval_src.add_to(eval);

  // run-all
  auto* run = app.add_subcommand("run-all", "train CAE, extract, train SVM and evaluate");
  SettingSources run_src;
  std::string run_train, run_test, run_report = "-";
  run->add_option("--train", run_train, "training manifest")->required();
  run->add_option("--test", run_test, "test manifest")->required();
  run->add_option("--report", run_report, "report path ('-' for stdout)");
  run_src.add_to(run);
  flag_override(run, run_src, "--filters", "filters", "filter count K");
  flag_override(run, run_src, "--epochs", "epochs", "epochs");
  flag_override(run, run_src, "--seed", "seed", "seed");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run-all for several filter counts");
  SettingSources sweep_src;
  std::string sweep_train, sweep_test, sweep_report = "-";
  std::vector<std::size_t> sweep_filters;
  sweep->add_option("--filters", sweep_filters, "comma-separated filter counts")->required()->delimiter(',');
  sweep->add_option("--train", sweep_train, "training manifest")->required();
  sweep->add_option("--test", sweep_test, "test manifest")->required();
  sweep->add_option("--report", sweep_report, "report path ('-' for stdout)");
  sweep_src.add_to(sweep);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the CAE and SVM gradients");
  std::uint64_t grad_seed = 1;
  grad->add_option("--seed", grad_seed, "instance seed");

  // config
  auto* conf = app.add_subcommand("config", "print the resolved settings");
  SettingSources conf_src;
  conf_src.add_to(conf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) {
      auto file = zbcae::read_config_file(gen_spec);
      std::map<std::string, std::string> overrides;
      for (const auto& a : gen_src.assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw zbcae::ConfigError("--set expects key=value, got '" + a + "'");
        overrides[a.substr(0, eq)] = a.substr(eq + 1);
      }
      const auto spec = zbcae::synthetic_spec(zbcae::Settings(file, overrides));
      const auto data = zbcae::gen_synthetic(spec);
      zbcae::write_synthetic(gen_out, data);
      print_json({{"train_manifest", (fs::path(gen_out) / "train.json").string()},
                  {"test_manifest", (fs::path(gen_out) / "test.json").string()},
                  {"train_count", data.train.tensors.size()},
                  {"test_count", data.test.tensors.size()}});
    } else if (*tcae) {
      const auto cfg = zbcae::pipeline_config(tcae_src.resolve());
      const auto train = zbcae::load_dataset(tcae_train);
      const auto fit = zbcae::train_cae(train.tensors, cfg, progress_line);
      zbcae::save_cae_model(tcae_out, fit.model);
      print_json({{"model", tcae_out}, {"cae", history_json(fit.history, cfg.cae.learning_rate)}, {"config", cfg.echo}});
    } else if (*enc) {
      const auto model = zbcae::load_cae_model(enc_model);
      const auto data = zbcae::load_dataset(enc_manifest);
      zbcae::FeatureSet set;
      set.features = zbcae::extract_feature_matrix(model, data.tensors, enc_l2);
      set.labels = data.labels;
      set.classes = data.classes;
      zbcae::save_feature_set(enc_out, set);
      print_json({{"features", enc_out}, {"samples", set.labels.size()}, {"feature_dim", set.features.extent(1)}});
    } else if (*tsvm) {
      const auto cfg = zbcae::pipeline_config(tsvm_src.resolve());
      if (!fs::exists(tsvm_features)) throw zbcae::IoError("feature file not found: '" + tsvm_features + "'");
      const auto set = zbcae::load_feature_set(tsvm_features);
      const auto model = zbcae::train_classifier(set.features, set.labels, set.classes, cfg);
      zbcae::save_svm_model(tsvm_out, model);
      print_json({{"model", tsvm_out}, {"classes", model.classes()}, {"feature_dim", model.dim()},
                  {"lambda", model.lambda}});
    } else if (*eval) {
      const auto settings = eval_src.resolve();
      for (const auto& p : {eval_svm, eval_features}) {
        if (!fs::exists(p)) throw zbcae::IoError("file not found: '" + p + "'");
      }
      const auto model = zbcae::load_svm_model(eval_svm);
      const auto set = zbcae::load_feature_set(eval_features);
      auto report = zbcae::evaluate(model, set.features, set.labels);
      report.config = settings.to_json();
      emit_report(zbcae::to_json(report), eval_report);
    } else if (*run) {
      const auto cfg = zbcae::pipeline_config(run_src.resolve());
      const auto train = zbcae::load_dataset(run_train);
      const auto test = zbcae::load_dataset(run_test);
      const auto report = zbcae::run_pipeline(train, test, cfg, progress_line);
      emit_report(zbcae::to_json(report), run_report);
    } else if (*sweep) {
      const auto cfg = zbcae::pipeline_config(sweep_src.resolve());
      const auto train = zbcae::load_dataset(sweep_train);
      const auto test = zbcae::load_dataset(sweep_test);
      const auto rows = zbcae::filter_size_sweep(train, test, cfg, sweep_filters);
      emit_report(zbcae::to_json(rows, cfg.echo), sweep_report);
    } else if (*grad) {
      print_json(zbcae::to_json(zbcae::gradcheck_report(grad_seed)));
    } else if (*conf) {
      print_json(zbcae::pipeline_config(conf_src.resolve()).echo);
    }
  } catch (const zbcae::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const zbcae::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const zbcae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
