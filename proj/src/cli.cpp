#include "ltmlc/cli.hpp"

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ltmlc/checkpoint.hpp"
#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"
#include "ltmlc/parallel.hpp"

namespace ltmlc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "JSON run configuration");
  cmd->add_option("--set", common.sets, "override one config key, e.g. --set train.epochs=3");
  cmd->footer(config_help(cmd->get_name()));
}

std::string pick(const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; }

std::string image_dir_of(const std::string& csv_path) {
  const auto parent = fs::path(csv_path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

LabeledDataset load_split(const std::string& csv_path, const ClassVocabulary& vocab, const model::ModelConfig& mc) {
  return datapipe::load_dataset(csv_path, image_dir_of(csv_path), vocab, mc.image_height, mc.image_width);
}

LabeledDataset load_training_set(const RunConfig& cfg, const std::string& data_dir, const ClassVocabulary& vocab) {
  LabeledDataset base = load_split((fs::path(data_dir) / "train.csv").string(), vocab, cfg.model);
  if (cfg.paths.extra_train.empty()) return base;
  std::vector<LabeledDataset> extra;
  for (const auto& p : cfg.paths.extra_train) extra.push_back(load_split(p, vocab, cfg.model));
  std::vector<const LabeledDataset*> all{&base};
  for (const auto& e : extra) all.push_back(&e);
  return datapipe::merge(all);
}

ClassVocabulary prediction_vocabulary(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front().size() < 2 || rows.front()[0] != "image_id") {
    throw ValidationError("'" + path + "' is not a prediction CSV");
  }
  return ClassVocabulary(std::vector<std::string>(rows.front().begin() + 1, rows.front().end()));
}

void warn(std::ostream& err, const std::string& message) { err << json{{"warning", message}}.dump() << '\n'; }

int cmd_generate(const RunConfig& cfg, const std::string& out_flag, std::ostream& out) {
  const std::string dir = pick(out_flag, cfg.paths.data_dir);
  const auto splits = synthgen::generate_dataset(cfg.synth);
  datapipe::write_dataset(splits.train, dir, "train");
  datapipe::write_dataset(splits.dev, dir, "dev");
  datapipe::write_dataset(splits.test, dir, "test");
  write_vocabulary(splits.train.vocabulary(), (fs::path(dir) / "vocab.txt").string());
  out << json{{"data_dir", dir}, {"train", splits.train.size()}, {"dev", splits.dev.size()}, {"test", splits.test.size()}}
             .dump()
      << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_flag, const std::string& out_flag,
              const std::string& history_flag, std::ostream& out) {
  const std::string dir = pick(data_flag, cfg.paths.data_dir);
  const ClassVocabulary vocab = datapipe::read_csv_vocabulary((fs::path(dir) / "train.csv").string());
  const LabeledDataset train_set = load_training_set(cfg, dir, vocab);
  const LabeledDataset dev_set = load_split((fs::path(dir) / "dev.csv").string(), vocab, cfg.model);

  training::TrainConfig tc = cfg.train;
  if (!cfg.class_weights_csv.empty()) {
    const auto w = training::read_class_weights(cfg.class_weights_csv, vocab);
    tc.class_weights.assign(w.values().begin(), w.values().end());
  } else if (!cfg.upweight_report.empty()) {
    const auto report = evaluation::read_report(cfg.upweight_report, vocab);
    const auto worst = training::select_upweight_classes(evaluation::ap_values(report), cfg.upweight_k);
    const auto w = training::ClassWeights::upweighted(vocab.size(), worst, cfg.upweight_factor);
    tc.class_weights.assign(w.values().begin(), w.values().end());
  }

  model::QueryModel initial(cfg.model, vocab, load_embeddings(cfg, vocab), cfg.seed);
  training::TrainOptions options;
  options.augmentation = &cfg.augment;
  options.run_config = cfg.to_json();
  const auto result = training::train(std::move(initial), train_set, dev_set, tc, options);

  const std::string checkpoint = pick(out_flag, cfg.paths.checkpoint);
  const std::string history = pick(history_flag, cfg.paths.history);
  write_checkpoint(result.checkpoint, checkpoint);
  training::write_history(result.history, history);
  json summary{{"checkpoint", checkpoint}, {"history", history}, {"best_epoch", result.best_epoch}};
  if (result.best_epoch >= 0) summary["dev_mAP"] = result.history[static_cast<std::size_t>(result.best_epoch)].dev_map;
  out << summary.dump() << '\n';
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint_flag, const std::string& input_flag,
                const std::string& out_flag, const std::string& tta_flag, std::ostream& out) {
  const auto model = model::QueryModel::from_checkpoint(read_checkpoint(pick(checkpoint_flag, cfg.paths.checkpoint)));
  const std::string input = pick(input_flag, (fs::path(cfg.paths.data_dir) / "test.csv").string());
  const LabeledDataset data = load_split(input, model.vocabulary(), model.config());
  std::optional<inference::TransformBank> bank;
  if (!tta_flag.empty()) {
    bank = inference::read_transform_bank(tta_flag);
  } else if (cfg.tta_enabled) {
    bank = cfg.tta;
  }
  const PredictionMatrix predictions = bank ? inference::tta_predict(model, data, *bank) : model::predict(model, data);
  const std::string path = pick(out_flag, cfg.paths.predictions);
  write_predictions(predictions, path);
  out << json{{"predictions", path}, {"rows", predictions.rows()}, {"tta", bank.has_value()}}.dump() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& predictions_flag, const std::string& labels_flag,
                 const std::string& out_flag, std::ostream& out, std::ostream& err) {
  const std::string labels_path = pick(labels_flag, (fs::path(cfg.paths.data_dir) / "test.csv").string());
  const ClassVocabulary vocab = datapipe::read_csv_vocabulary(labels_path);
  const auto table = datapipe::read_label_table(labels_path, vocab);
  const auto predictions = read_predictions(pick(predictions_flag, cfg.paths.predictions), vocab);
  const auto report = evaluation::mean_average_precision(predictions, table.image_ids, table.labels);
  for (std::size_t c : report.excluded) warn(err, "class '" + vocab.name(c) + "' has no positives; excluded from mAP");
  const std::string path = pick(out_flag, cfg.paths.report);
  evaluation::write_report(report, vocab, path);
  out << json{{"report", path}, {"mAP", report.map}, {"excluded", report.excluded.size()}}.dump() << '\n';
  return 0;
}

struct EnsembleFlags {
  std::string mode;
  int k = 0;
  std::vector<std::string> dev_preds;
  std::vector<std::string> test_preds;
  std::string dev_labels;
  std::string out;
};

int cmd_ensemble(const RunConfig& cfg, const EnsembleFlags& flags, std::ostream& out, std::ostream& err) {
  EnsembleMode mode = cfg.ensemble.mode;
  if (flags.mode == "class-wise") mode = EnsembleMode::class_wise;
  if (flags.mode == "model-wise") mode = EnsembleMode::model_wise;
  std::optional<int> k = cfg.ensemble.k;
  if (flags.k > 0) k = flags.k;
  if (flags.test_preds.empty()) throw ValidationError("ensemble needs at least one --test-preds file");

  const std::size_t models = flags.test_preds.size();
  if (k && static_cast<std::size_t>(*k) > models) {
    throw ValidationError("k=" + std::to_string(*k) + " exceeds the " + std::to_string(models) + " models given");
  }
  const bool needs_dev = mode == EnsembleMode::class_wise || (k && static_cast<std::size_t>(*k) < models);
  const std::string labels_path = pick(flags.dev_labels, (fs::path(cfg.paths.data_dir) / "dev.csv").string());
  const ClassVocabulary vocab = needs_dev ? datapipe::read_csv_vocabulary(labels_path)
                                          : prediction_vocabulary(flags.test_preds.front());
  std::vector<PredictionMatrix> test;
  for (const auto& p : flags.test_preds) test.push_back(read_predictions(p, vocab));

  std::optional<PredictionMatrix> result;
  json summary{{"models", models}};
  if (!needs_dev) {
    result = inference::model_wise_ensemble(test);
    summary["mode"] = "model-wise";
  } else {
    if (flags.dev_preds.size() != models) {
      throw ValidationError("need one --dev-preds file per --test-preds file");
    }
    const LabeledDataset dev_labels = [&] {
      const auto table = datapipe::read_label_table(labels_path, vocab);
      LabeledDataset d(vocab);
      for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
        const auto row = table.labels.row(i);
        d.add(Example{table.image_ids[i], ImageTensor(), std::vector<double>(row.begin(), row.end())});
      }
      return d;
    }();
    std::vector<PredictionMatrix> dev;
    for (const auto& p : flags.dev_preds) dev.push_back(read_predictions(p, vocab));
    if (mode == EnsembleMode::class_wise) {
      const std::size_t kk = static_cast<std::size_t>(k.value_or(3));
      auto cw = inference::class_wise_ensemble(dev, dev_labels, test, std::min(kk, models));
      if (kk > models) warn(err, "default k=3 exceeds the model count; using all " + std::to_string(models));
      for (const auto& w : cw.warnings) warn(err, w);
      result = std::move(cw.predictions);
      summary["mode"] = "class-wise";
      summary["k"] = std::min(kk, models);
    } else {
      const auto chosen = inference::top_models_by_map(dev, dev_labels, static_cast<std::size_t>(*k));
      std::vector<PredictionMatrix> kept;
      for (std::size_t m : chosen) kept.push_back(test[m]);
      result = inference::model_wise_ensemble(kept);
      summary["mode"] = "model-wise";
      summary["selected"] = chosen;
    }
  }
  const std::string path = pick(flags.out, cfg.paths.predictions);
  write_predictions(*result, path);
  summary["predictions"] = path;
  out << summary.dump() << '\n';
  return 0;
}

struct HarmonizeFlags {
  std::string external;
  std::string mapping;
  std::string target_vocab;
  std::string out;
  std::string split = "external";
};

int cmd_harmonize(const HarmonizeFlags& flags, std::ostream& out) {
  const ClassVocabulary source_vocab = datapipe::read_csv_vocabulary(flags.external);
  const LabeledDataset external = datapipe::load_dataset(flags.external, image_dir_of(flags.external), source_vocab, 0, 0);
  const auto mapping = datapipe::read_label_mapping(flags.mapping);
  const ClassVocabulary target = read_vocabulary(flags.target_vocab);
  const LabeledDataset harmonized = datapipe::harmonize(external, mapping, target);
  datapipe::write_dataset(harmonized, flags.out, flags.split);
  const Matrix labels = harmonized.label_matrix();
  std::size_t zero_columns = 0;
  for (std::size_t c = 0; c < labels.cols(); ++c) {
    const auto col = labels.column(c);
    zero_columns += std::all_of(col.begin(), col.end(), [](double v) { return v == 0.0; }) ? 1 : 0;
  }
  out << json{{"labels", (fs::path(flags.out) / (flags.split + ".csv")).string()},
              {"examples", harmonized.size()},
              {"zero_columns", zero_columns}}
             .dump()
      << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& data_flag, const std::string& out_flag, std::ostream& out,
               std::ostream& err) {
  const std::string dir = pick(data_flag, cfg.paths.data_dir);
  const ClassVocabulary vocab = datapipe::read_csv_vocabulary((fs::path(dir) / "train.csv").string());
  const LabeledDataset train_set = load_training_set(cfg, dir, vocab);
  const LabeledDataset dev_set = load_split((fs::path(dir) / "dev.csv").string(), vocab, cfg.model);
  const auto result = run_ablation(cfg, train_set, dev_set, [&](const std::string& m) { err << m << '\n'; });
  const std::string path = pick(out_flag, cfg.ablate.output);
  write_ablation_csv(result, path);
  out << json{{"ablation", path}, {"cells", result.cells.size()}, {"trainings", result.trainings}}.dump() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tailed multi-label classification lab"};
  app.name("ltmlc");
  app.require_subcommand(1);

  Common common;
  std::string out_flag, data_flag, history_flag, checkpoint_flag, input_flag, tta_flag, predictions_flag, labels_flag;
  EnsembleFlags ens;
  HarmonizeFlags harm;

  auto* generate = app.add_subcommand("generate-data", "Write a synthetic long-tailed dataset");
  add_common(generate, common);
  generate->add_option("--out", out_flag, "output directory (paths.data_dir)");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint and history");
  add_common(train, common);
  train->add_option("--data", data_flag, "dataset directory (paths.data_dir)");
  train->add_option("--out", out_flag, "checkpoint path (paths.checkpoint)");
  train->add_option("--history", history_flag, "history CSV path (paths.history)");

  auto* predict = app.add_subcommand("predict", "Score a labeled CSV with a checkpoint");
  add_common(predict, common);
  predict->add_option("--checkpoint", checkpoint_flag, "checkpoint (paths.checkpoint)");
  predict->add_option("--input", input_flag, "label CSV to score (default <data_dir>/test.csv)");
  predict->add_option("--out", out_flag, "prediction CSV (paths.predictions)");
  predict->add_option("--tta", tta_flag, "transform bank JSON; enables test-time augmentation");

  auto* evaluate = app.add_subcommand("evaluate", "Per-class AP and mAP of a prediction CSV");
  add_common(evaluate, common);
  evaluate->add_option("--predictions", predictions_flag, "prediction CSV (paths.predictions)");
  evaluate->add_option("--labels", labels_flag, "label CSV (default <data_dir>/test.csv)");
  evaluate->add_option("--out", out_flag, "report CSV (paths.report)");

  auto* ensemble = app.add_subcommand("ensemble", "Combine prediction CSVs of several models");
  add_common(ensemble, common);
  ensemble->add_option("--mode", ens.mode, "class-wise or model-wise (ensemble.mode)")
      ->check(CLI::IsMember({"class-wise", "model-wise"}));
  ensemble->add_option("--k", ens.k, "models per class or overall (ensemble.k)")->check(CLI::PositiveNumber);
  ensemble->add_option("--dev-preds", ens.dev_preds, "development prediction CSVs, one per model")->delimiter(',');
  ensemble->add_option("--test-preds", ens.test_preds, "prediction CSVs to combine, one per model")->delimiter(',');
  ensemble->add_option("--dev-labels", ens.dev_labels, "development label CSV (default <data_dir>/dev.csv)");
  ensemble->add_option("--out", ens.out, "output prediction CSV (paths.predictions)");

  auto* harmonize = app.add_subcommand("harmonize", "Map an external label CSV into a target vocabulary");
  add_common(harmonize, common);
  harmonize->add_option("--external", harm.external, "external label CSV")->required();
  harmonize->add_option("--mapping", harm.mapping, "mapping CSV with header source,target")->required();
  harmonize->add_option("--target-vocab", harm.target_vocab, "target vocabulary, one class per line")->required();
  harmonize->add_option("--out", harm.out, "output dataset directory")->required();
  harmonize->add_option("--split", harm.split, "name of the written label CSV (default external)");

  auto* ablate = app.add_subcommand("ablate", "Train and score every on/off combination of the tricks");
  add_common(ablate, common);
  ablate->add_option("--data", data_flag, "dataset directory (paths.data_dir)");
  ablate->add_option("--out", out_flag, "grid CSV (ablate.output)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    const RunConfig cfg = load_run_config(common.config, common.sets);
    if (generate->parsed()) return cmd_generate(cfg, out_flag, out);
    if (train->parsed()) return cmd_train(cfg, data_flag, out_flag, history_flag, out);
    if (predict->parsed()) return cmd_predict(cfg, checkpoint_flag, input_flag, out_flag, tta_flag, out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, predictions_flag, labels_flag, out_flag, out, err);
    if (ensemble->parsed()) return cmd_ensemble(cfg, ens, out, err);
    if (harmonize->parsed()) return cmd_harmonize(harm, out);
    if (ablate->parsed()) return cmd_ablate(cfg, data_flag, out_flag, out, err);
  } catch (const ConfigError& e) {
    err << json{{"error", "config"}, {"pointer", e.pointer()}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  parallel::configure_from_env();
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ltmlc::cli
