#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ltmlc/cli.hpp"
#include "ltmlc/error.hpp"

namespace ltmlc::cli {
namespace {

using nlohmann::json;

/// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) throw ConfigError(pointer_.empty() ? "" : pointer_, "expected an object");
  }

  std::string at(const std::string& key) const { return pointer_ + "/" + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array of strings");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a string");
        out.push_back((*v)[i].get<std::string>());
      }
    }
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected an integer");
        out.push_back((*v)[i].get<int>());
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(at(key), "unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string pointer_;
  std::set<std::string> used_;
};

template <class Fn>
void validated(const std::string& pointer, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(pointer, e.what());
  }
}

void parse_synth(Section& s, synthgen::SynthConfig& c) {
  s.get("num_classes", c.num_classes);
  s.get("p_head", c.p_head);
  s.get("imbalance_ratio", c.imbalance_ratio);
  s.get("image_size", c.image_size);
  s.get("noise_std", c.noise_std);
  s.get("n_train", c.n_train);
  s.get("n_dev", c.n_dev);
  s.get("n_test", c.n_test);
  c.cooc_pairs = synthgen::SynthConfig::default_cooc_pairs(c.num_classes);
  if (const json* v = s.find("cooc_pairs")) {
    if (!v->is_array()) throw ConfigError(s.at("cooc_pairs"), "expected an array of [parent, child, prob]");
    c.cooc_pairs.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& t = (*v)[i];
      if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer() ||
          !t[2].is_number()) {
        throw ConfigError(s.at("cooc_pairs") + "/" + std::to_string(i), "expected [parent, child, prob]");
      }
      c.cooc_pairs.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<double>()});
    }
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);

  if (const json* v = root.find("synth")) {
    Section s(*v, "/synth");
    parse_synth(s, c.synth);
    s.finish();
  }
  if (const json* v = root.find("model")) {
    Section s(*v, "/model");
    s.get("d", c.model.d);
    s.get("num_layers", c.model.num_layers);
    s.get("num_heads", c.model.num_heads);
    std::string head = model::to_string(c.model.head_mode);
    s.get("head_mode", head);
    validated(s.at("head_mode"), [&] { c.model.head_mode = model::parse_head_mode(head); });
    s.get("encoder_channels", c.model.encoder_channels);
    s.get("image_height", c.model.image_height);
    s.get("image_width", c.model.image_width);
    s.get("embeddings_csv", c.embeddings_csv);
    s.finish();
  }
  if (const json* v = root.find("train")) {
    Section s(*v, "/train");
    s.get("epochs", c.train.epochs);
    s.get("warmup_epochs", c.train.warmup_epochs);
    s.get("base_lr", c.train.base_lr);
    s.get("warmup_lr", c.train.warmup_lr);
    s.get("batch_size", c.train.batch_size);
    s.get("mixup_alpha", c.train.mixup_alpha);
    s.get("weight_decay", c.train.weight_decay);
    s.get("class_weights_csv", c.class_weights_csv);
    s.get("upweight_report", c.upweight_report);
    s.get("upweight_k", c.upweight_k);
    s.get("upweight_factor", c.upweight_factor);
    s.finish();
  }
  if (const json* v = root.find("augment")) {
    Section s(*v, "/augment");
    s.get("resize_crop", c.augment.resize_crop);
    s.get("scale_min", c.augment.scale_min);
    s.get("scale_max", c.augment.scale_max);
    s.get("horizontal_flip", c.augment.horizontal_flip);
    s.get("flip_prob", c.augment.flip_prob);
    s.get("rotation", c.augment.rotation);
    s.get("max_degrees", c.augment.max_degrees);
    s.finish();
  }
  if (const json* v = root.find("tta")) {
    Section s(*v, "/tta");
    s.get("enabled", c.tta_enabled);
    json bank = c.tta.to_json();
    if (const json* t = s.find("transforms")) bank["transforms"] = *t;
    if (const json* m = s.find("merge")) bank["merge"] = *m;
    s.finish();
    try {
      c.tta = inference::TransformBank::from_json(bank);
    } catch (const ConfigError& e) {
      throw ConfigError("/tta" + e.pointer(), e.what());
    }
  }
  if (const json* v = root.find("ensemble")) {
    Section s(*v, "/ensemble");
    std::string mode = c.ensemble.mode == EnsembleMode::class_wise ? "class-wise" : "model-wise";
    s.get("mode", mode);
    if (mode == "class-wise") {
      c.ensemble.mode = EnsembleMode::class_wise;
    } else if (mode == "model-wise") {
      c.ensemble.mode = EnsembleMode::model_wise;
    } else {
      throw ConfigError(s.at("mode"), "expected \"class-wise\" or \"model-wise\"");
    }
    if (const json* k = s.find("k")) {
      if (!k->is_number_integer() || k->get<int>() < 1) throw ConfigError(s.at("k"), "expected an integer >= 1");
      c.ensemble.k = k->get<int>();
    }
    s.finish();
  }
  if (const json* v = root.find("paths")) {
    Section s(*v, "/paths");
    s.get("data_dir", c.paths.data_dir);
    s.get("extra_train", c.paths.extra_train);
    s.get("checkpoint", c.paths.checkpoint);
    s.get("history", c.paths.history);
    s.get("predictions", c.paths.predictions);
    s.get("report", c.paths.report);
    s.finish();
  }
  if (const json* v = root.find("ablate")) {
    Section s(*v, "/ablate");
    s.get("toggles", c.ablate.toggles);
    s.get("output", c.ablate.output);
    s.finish();
  }
  root.finish();

  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.augment.seed = c.seed;
  validated("/synth", [&] { c.synth.validate(); });
  validated("/model", [&] { c.model.validate(); });
  validated("/train", [&] { c.train.validate(); });
  if (c.upweight_k < 0) throw ConfigError("/train/upweight_k", "must be >= 0");
  if (!(c.upweight_factor > 0.0)) throw ConfigError("/train/upweight_factor", "must be > 0");
  validated("/augment", [&] { c.augment.validate(); });
  const std::set<std::string> known{"separate_classifier", "reweighting", "mixup", "tta"};
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.ablate.toggles.size(); ++i) {
    const auto& t = c.ablate.toggles[i];
    const std::string pointer = "/ablate/toggles/" + std::to_string(i);
    if (!known.count(t)) throw ConfigError(pointer, "unknown toggle '" + t + "'");
    if (!seen.insert(t).second) throw ConfigError(pointer, "toggle '" + t + "' listed twice");
  }
  return c;
}

json RunConfig::to_json() const {
  json pairs = json::array();
  for (const auto& p : synth.cooc_pairs) pairs.push_back(json::array({p.parent, p.child, p.prob}));
  json model_json = model.to_json();
  model_json["embeddings_csv"] = embeddings_csv;
  json bank = tta.to_json();
  json ens{{"mode", ensemble.mode == EnsembleMode::class_wise ? "class-wise" : "model-wise"}};
  if (ensemble.k) ens["k"] = *ensemble.k;
  return {{"seed", seed},
          {"synth",
           {{"num_classes", synth.num_classes},
            {"p_head", synth.p_head},
            {"imbalance_ratio", synth.imbalance_ratio},
            {"cooc_pairs", pairs},
            {"image_size", synth.image_size},
            {"noise_std", synth.noise_std},
            {"n_train", synth.n_train},
            {"n_dev", synth.n_dev},
            {"n_test", synth.n_test}}},
          {"model", model_json},
          {"train",
           {{"epochs", train.epochs},
            {"warmup_epochs", train.warmup_epochs},
            {"base_lr", train.base_lr},
            {"warmup_lr", train.warmup_lr},
            {"batch_size", train.batch_size},
            {"mixup_alpha", train.mixup_alpha},
            {"weight_decay", train.weight_decay},
            {"class_weights_csv", class_weights_csv},
            {"upweight_report", upweight_report},
            {"upweight_k", upweight_k},
            {"upweight_factor", upweight_factor}}},
          {"augment",
           {{"resize_crop", augment.resize_crop},
            {"scale_min", augment.scale_min},
            {"scale_max", augment.scale_max},
            {"horizontal_flip", augment.horizontal_flip},
            {"flip_prob", augment.flip_prob},
            {"rotation", augment.rotation},
            {"max_degrees", augment.max_degrees}}},
          {"tta", {{"enabled", tta_enabled}, {"transforms", bank["transforms"]}, {"merge", bank["merge"]}}},
          {"ensemble", ens},
          {"paths",
           {{"data_dir", paths.data_dir},
            {"extra_train", paths.extra_train},
            {"checkpoint", paths.checkpoint},
            {"history", paths.history},
            {"predictions", paths.predictions},
            {"report", paths.report}}},
          {"ablate", {{"toggles", ablate.toggles}, {"output", ablate.output}}}};
}

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("", "override '" + assignment + "' must look like key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &document;
  std::string pointer;
  std::stringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) keys.push_back(part);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].empty()) throw ConfigError(pointer, "empty key in override '" + assignment + "'");
    if (!node->is_object()) throw ConfigError(pointer, "cannot descend into a non-object");
    pointer += "/" + keys[i];
    if (i + 1 == keys.size()) {
      (*node)[keys[i]] = value;
    } else {
      if (!node->contains(keys[i])) (*node)[keys[i]] = json::object();
      node = &(*node)[keys[i]];
    }
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  json document = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config '" + path + "'");
    try {
      in >> document;
    } catch (const json::exception& e) {
      throw ConfigError("", "config '" + path + "' is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(document, o);
  return RunConfig::from_json(document);
}

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> keys = {
      {"seed", "0", "master seed for data, initialization, shuffling, MixUp and augmentation",
       {"generate-data", "train", "ablate"}},
      {"synth.num_classes", "26", "number of synthetic classes (at most 30)", {"generate-data"}},
      {"synth.p_head", "0.5", "prevalence of class 0", {"generate-data"}},
      {"synth.imbalance_ratio", "100", "head/tail prevalence ratio", {"generate-data"}},
      {"synth.cooc_pairs", "[[i, C-5+i, 0.5] for i < 5]", "co-occurrence triples [parent, child, prob]",
       {"generate-data"}},
      {"synth.image_size", "64", "square image side in pixels", {"generate-data"}},
      {"synth.noise_std", "0.05", "background noise standard deviation", {"generate-data"}},
      {"synth.n_train", "2000", "training split size", {"generate-data"}},
      {"synth.n_dev", "500", "development split size", {"generate-data"}},
      {"synth.n_test", "500", "test split size", {"generate-data"}},
      {"model.d", "64", "embedding width", {"train", "ablate"}},
      {"model.num_layers", "4", "decoder layers", {"train", "ablate"}},
      {"model.num_heads", "4", "attention heads", {"train", "ablate"}},
      {"model.head_mode", "separate", "separate (one head per class) or shared", {"train", "ablate"}},
      {"model.encoder_channels", "[16, 32, 64]", "widths of the three stride-2 convolutions", {"train", "ablate"}},
      {"model.image_height", "64", "input height; images are resized to it", {"train", "ablate"}},
      {"model.image_width", "64", "input width; images are resized to it", {"train", "ablate"}},
      {"model.embeddings_csv", "\"\"", "class embedding CSV; empty uses hashed synthetic embeddings",
       {"train", "ablate"}},
      {"train.epochs", "50", "training epochs", {"train", "ablate"}},
      {"train.warmup_epochs", "20", "linear warmup epochs", {"train", "ablate"}},
      {"train.base_lr", "5e-05", "peak learning rate", {"train", "ablate"}},
      {"train.warmup_lr", "1e-06", "learning rate at epoch 0", {"train", "ablate"}},
      {"train.batch_size", "32", "mini-batch size", {"train", "ablate"}},
      {"train.mixup_alpha", "4", "MixUp Beta parameter; 0 disables MixUp", {"train", "ablate"}},
      {"train.weight_decay", "0.01", "AdamW decoupled weight decay", {"train", "ablate"}},
      {"train.class_weights_csv", "\"\"", "per-class loss weights, CSV class,weight", {"train"}},
      {"train.upweight_report", "\"\"", "evaluation report whose worst classes are upweighted", {"train"}},
      {"train.upweight_k", "9", "number of worst development classes to upweight; also the tail size",
       {"train", "ablate"}},
      {"train.upweight_factor", "2", "loss weight of upweighted classes", {"train", "ablate"}},
      {"augment.resize_crop", "false", "random resized crop", {"train", "ablate"}},
      {"augment.scale_min", "0.8", "smallest crop area fraction", {"train", "ablate"}},
      {"augment.scale_max", "1", "largest crop area fraction", {"train", "ablate"}},
      {"augment.horizontal_flip", "false", "random horizontal flip", {"train", "ablate"}},
      {"augment.flip_prob", "0.5", "flip probability", {"train", "ablate"}},
      {"augment.rotation", "false", "random rotation", {"train", "ablate"}},
      {"augment.max_degrees", "10", "largest rotation angle", {"train", "ablate"}},
      {"tta.enabled", "false", "use the transform bank at prediction time", {"predict", "ablate"}},
      {"tta.transforms", "identity, hflip, center_crop 0.9, center_crop 0.9 + flip", "transform bank",
       {"predict", "ablate"}},
      {"tta.merge", "geometric", "geometric or arithmetic mean across transforms", {"predict", "ablate"}},
      {"ensemble.mode", "class-wise", "class-wise or model-wise", {"ensemble"}},
      {"ensemble.k", "3 (class-wise), all (model-wise)", "models kept per class or overall", {"ensemble"}},
      {"paths.data_dir", "data", "dataset directory holding train.csv, dev.csv, test.csv",
       {"generate-data", "train", "predict", "evaluate", "ensemble", "ablate"}},
      {"paths.extra_train", "[]", "extra label CSVs merged into the training split", {"train", "ablate"}},
      {"paths.checkpoint", "model.ckpt", "checkpoint file", {"train", "predict"}},
      {"paths.history", "history.csv", "per-epoch history CSV", {"train"}},
      {"paths.predictions", "predictions.csv", "prediction CSV", {"predict", "evaluate", "ensemble"}},
      {"paths.report", "report.csv", "evaluation report CSV", {"evaluate"}},
      {"ablate.toggles", "[separate_classifier, reweighting, mixup, tta]", "tricks switched on and off",
       {"ablate"}},
      {"ablate.output", "ablation.csv", "grid CSV", {"ablate"}},
  };
  return keys;
}

std::string config_help(const std::string& command) {
  std::ostringstream out;
  out << "Config keys (--config file.json, --set key=value):\n";
  bool any = false;
  for (const auto& k : config_keys()) {
    if (std::find(k.commands.begin(), k.commands.end(), command) == k.commands.end()) continue;
    out << "  " << k.key << " (default " << k.default_value << "): " << k.description << '\n';
    any = true;
  }
  if (!any) out << "  none\n";
  return out.str();
}

}  // namespace ltmlc::cli
