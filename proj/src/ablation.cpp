#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "ltmlc/cli.hpp"
#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"

namespace ltmlc::cli {
namespace {

struct Trained {
  model::QueryModel model;
  PredictionMatrix plain_dev;
  evaluation::EvalReport plain_report;
  std::vector<std::size_t> upweighted;
};

std::vector<std::size_t> fewest_positives(const LabeledDataset& train_set, std::size_t k) {
  const auto counts = train_set.positive_counts();
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::string on_off(bool b) { return b ? "1" : "0"; }

}  // namespace

Matrix load_embeddings(const RunConfig& config, const ClassVocabulary& vocab) {
  if (config.embeddings_csv.empty()) return model::synthetic_embedding_table(vocab, config.model.d);
  return model::read_embedding_csv(config.embeddings_csv, vocab, config.model.d);
}

AblationResult run_ablation(const RunConfig& config, const LabeledDataset& train_set, const LabeledDataset& dev_set,
                            const std::function<void(const std::string&)>& log) {
  const auto& vocab = train_set.vocabulary();
  const Matrix embeddings = load_embeddings(config, vocab);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config.upweight_k), vocab.size());
  const double alpha_on = config.train.mixup_alpha > 0.0 ? config.train.mixup_alpha : training::TrainConfig{}.mixup_alpha;

  AblationResult result;
  result.toggles = config.ablate.toggles;
  result.tail_classes = fewest_positives(train_set, k);

  std::map<std::tuple<bool, bool, bool>, Trained> cache;
  std::function<const Trained&(bool, bool, bool)> trained = [&](bool separate, bool reweight,
                                                                bool mixup) -> const Trained& {
    const auto key = std::make_tuple(separate, reweight, mixup);
    if (auto it = cache.find(key); it != cache.end()) return it->second;

    training::TrainConfig tc = config.train;
    tc.mixup_alpha = mixup ? alpha_on : 0.0;
    tc.class_weights.clear();
    std::vector<std::size_t> upweighted;
    if (reweight) {
      const Trained& base = trained(separate, false, mixup);
      upweighted = training::select_upweight_classes(evaluation::ap_values(base.plain_report), static_cast<int>(k));
      const auto weights = training::ClassWeights::upweighted(vocab.size(), upweighted, config.upweight_factor);
      tc.class_weights.assign(weights.values().begin(), weights.values().end());
    }
    model::ModelConfig mc = config.model;
    mc.head_mode = separate ? model::HeadMode::separate : model::HeadMode::shared;
    if (log) {
      log("training separate_classifier=" + on_off(separate) + " reweighting=" + on_off(reweight) +
          " mixup=" + on_off(mixup));
    }
    model::QueryModel initial(mc, vocab, embeddings, config.seed);
    training::TrainOptions options;
    options.augmentation = &config.augment;
    options.run_config = config.to_json();
    auto run = training::train(std::move(initial), train_set, dev_set, tc, options);
    ++result.trainings;
    auto plain = model::predict(run.model, dev_set);
    auto report = evaluation::mean_average_precision(plain, dev_set);
    return cache.emplace(key, Trained{std::move(run.model), std::move(plain), std::move(report), std::move(upweighted)})
        .first->second;
  };

  const std::size_t n = result.toggles.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    bool separate = config.model.head_mode == model::HeadMode::separate;
    bool reweight = false;
    bool mixup = config.train.mixup_alpha > 0.0;
    bool tta = config.tta_enabled;
    for (std::size_t i = 0; i < n; ++i) {
      const bool on = ((mask >> (n - 1 - i)) & 1U) != 0;
      const auto& t = result.toggles[i];
      if (t == "separate_classifier") separate = on;
      if (t == "reweighting") reweight = on;
      if (t == "mixup") mixup = on;
      if (t == "tta") tta = on;
    }
    const Trained& t = trained(separate, reweight, mixup);
    PredictionMatrix dev = tta ? inference::tta_predict(t.model, dev_set, config.tta) : t.plain_dev;
    const auto report = evaluation::mean_average_precision(dev, dev_set);
    double tail_sum = 0.0;
    std::size_t tail_defined = 0;
    for (std::size_t c : result.tail_classes) {
      if (report.per_class_ap[c]) {
        tail_sum += *report.per_class_ap[c];
        ++tail_defined;
      }
    }
    const double tail = tail_defined ? tail_sum / static_cast<double>(tail_defined)
                                     : std::numeric_limits<double>::quiet_NaN();
    result.cells.push_back(AblationCell{separate, reweight, mixup, tta, report.map, tail, t.upweighted, std::move(dev)});
  }
  return result;
}

void write_ablation_csv(const AblationResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "separate_classifier,reweighting,mixup,tta,dev_mAP,tail_mAP\n";
  for (const auto& c : result.cells) {
    out << on_off(c.separate_classifier) << ',' << on_off(c.reweighting) << ',' << on_off(c.mixup) << ','
        << on_off(c.tta) << ',' << csv::format_real(c.dev_map) << ','
        << (std::isnan(c.tail_map) ? std::string() : csv::format_real(c.tail_map)) << '\n';
  }
}

}  // namespace ltmlc::cli
