#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltmlc/datapipe.hpp"
#include "ltmlc/inference.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/synthgen.hpp"
#include "ltmlc/training.hpp"

namespace ltmlc::cli {

enum class EnsembleMode { model_wise, class_wise };

struct EnsembleSpec {
  EnsembleMode mode = EnsembleMode::class_wise;
  /// Unset: 3 for class-wise, every model for model-wise.
  std::optional<int> k;
};

struct Paths {
  std::string data_dir = "data";
  /// Extra label CSVs (same vocabulary) merged into the training split.
  std::vector<std::string> extra_train;
  std::string checkpoint = "model.ckpt";
  std::string history = "history.csv";
  std::string predictions = "predictions.csv";
  std::string report = "report.csv";
};

struct AblationConfig {
  std::vector<std::string> toggles{"separate_classifier", "reweighting", "mixup", "tta"};
  std::string output = "ablation.csv";
};

struct RunConfig {
  std::uint64_t seed = 0;
  synthgen::SynthConfig synth;
  model::ModelConfig model;
  std::string embeddings_csv;
  training::TrainConfig train;
  std::string class_weights_csv;
  /// Evaluation report whose worst upweight_k classes get upweight_factor.
  std::string upweight_report;
  int upweight_k = 9;
  double upweight_factor = 2.0;
  datapipe::AugmentationConfig augment;
  bool tta_enabled = false;
  inference::TransformBank tta = inference::TransformBank::default_bank();
  EnsembleSpec ensemble;
  Paths paths;
  AblationConfig ablate;

  /// Strict: unknown keys and wrong types raise ConfigError with a JSON pointer.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// "a.b.c=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& document, const std::string& assignment);

/// Reads `path` (empty means defaults), applies overrides, then parses.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// model.embeddings_csv when set, hashed synthetic embeddings otherwise.
Matrix load_embeddings(const RunConfig& config, const ClassVocabulary& vocab);

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
  std::vector<std::string> commands;
};

const std::vector<KeyDoc>& config_keys();
/// Config keys consumed by `command`, one per line.
std::string config_help(const std::string& command);

struct AblationCell {
  bool separate_classifier = true;
  bool reweighting = false;
  bool mixup = false;
  bool tta = false;
  double dev_map = 0.0;
  /// NaN when no tail class has a development positive.
  double tail_map = 0.0;
  std::vector<std::size_t> upweighted;
  PredictionMatrix dev_predictions;
};

struct AblationResult {
  std::vector<std::string> toggles;
  std::vector<std::size_t> tail_classes;
  std::vector<AblationCell> cells;
  int trainings = 0;
};

/// Every on/off combination of the configured toggles (2^n cells); settings not
/// toggled keep their configured value. Cells differing only in TTA share one
/// trained model. A reweighting cell upweights the worst upweight_k dev classes
/// of its unweighted counterpart.
AblationResult run_ablation(const RunConfig& config, const LabeledDataset& train_set, const LabeledDataset& dev_set,
                            const std::function<void(const std::string&)>& log = {});

/// Columns separate_classifier,reweighting,mixup,tta,dev_mAP,tail_mAP.
void write_ablation_csv(const AblationResult& result, const std::string& path);

/// Exit status: 0 success, 1 runtime failure, 2 invalid configuration or usage.
/// Errors go to `err` as one JSON line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ltmlc::cli
