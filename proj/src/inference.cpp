#include "ltmlc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ltmlc/datapipe.hpp"
#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"
#include "ltmlc/rng.hpp"

namespace ltmlc::inference {
namespace {

constexpr double kProbabilityFloor = 1e-12;

void check_aligned(const std::vector<PredictionMatrix>& predictions, const std::string& what) {
  if (predictions.empty()) throw ValidationError(what + ": no prediction matrices");
  const auto& first = predictions.front();
  for (std::size_t m = 1; m < predictions.size(); ++m) {
    if (!(predictions[m].vocabulary() == first.vocabulary())) {
      throw ValidationError(what + ": model " + std::to_string(m) + " has a different vocabulary");
    }
    if (predictions[m].image_ids() != first.image_ids()) {
      throw ValidationError(what + ": model " + std::to_string(m) + " has different image ids");
    }
  }
}

std::vector<std::size_t> rank_descending(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

Transform::Kind parse_kind(const std::string& text) {
  if (text == "identity") return Transform::Kind::identity;
  if (text == "hflip") return Transform::Kind::horizontal_flip;
  if (text == "center_crop") return Transform::Kind::center_crop;
  if (text == "random_crop") return Transform::Kind::random_crop;
  throw ConfigError("/type", "unknown transform '" + text + "'");
}

std::string kind_name(Transform::Kind kind) {
  switch (kind) {
    case Transform::Kind::identity: return "identity";
    case Transform::Kind::horizontal_flip: return "hflip";
    case Transform::Kind::center_crop: return "center_crop";
    case Transform::Kind::random_crop: return "random_crop";
  }
  return "identity";
}

}  // namespace

std::string Transform::describe() const {
  std::string s = kind_name(kind);
  if (kind == Kind::center_crop || kind == Kind::random_crop) {
    s += "(" + std::to_string(fraction) + (flip ? ",flip" : "") + ")";
  }
  return s;
}

ImageTensor apply_transform(const Transform& transform, const ImageTensor& image, int height, int width,
                            std::uint64_t image_index) {
  switch (transform.kind) {
    case Transform::Kind::identity:
      return image;
    case Transform::Kind::horizontal_flip:
      return datapipe::horizontal_flip(image);
    case Transform::Kind::center_crop:
    case Transform::Kind::random_crop: {
      const int h = std::clamp(static_cast<int>(std::lround(transform.fraction * image.height())), 1, image.height());
      const int w = std::clamp(static_cast<int>(std::lround(transform.fraction * image.width())), 1, image.width());
      int top = (image.height() - h) / 2;
      int left = (image.width() - w) / 2;
      if (transform.kind == Transform::Kind::random_crop) {
        Rng rng = Rng::stream(transform.seed, image_index);
        top = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.height() - h + 1)));
        left = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.width() - w + 1)));
      }
      ImageTensor out = datapipe::resize_bilinear(datapipe::crop(image, top, left, h, w), height, width);
      return transform.flip ? datapipe::horizontal_flip(out) : out;
    }
  }
  return image;
}

MergeMode parse_merge_mode(std::string_view text) {
  if (text == "geometric") return MergeMode::geometric;
  if (text == "arithmetic") return MergeMode::arithmetic;
  throw ValidationError("unknown merge mode '" + std::string(text) + "'");
}

std::string to_string(MergeMode mode) { return mode == MergeMode::geometric ? "geometric" : "arithmetic"; }

TransformBank TransformBank::default_bank() {
  TransformBank bank;
  bank.transforms = {{Transform::Kind::identity, 1.0, false, 0},
                     {Transform::Kind::horizontal_flip, 1.0, false, 0},
                     {Transform::Kind::center_crop, 0.9, false, 0},
                     {Transform::Kind::center_crop, 0.9, true, 0}};
  return bank;
}

TransformBank TransformBank::identity_bank() {
  TransformBank bank;
  bank.transforms = {Transform{}};
  return bank;
}

TransformBank TransformBank::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "transform bank must be an object");
  TransformBank bank;
  for (const auto& [key, value] : j.items()) {
    if (key == "merge") {
      if (!value.is_string()) throw ConfigError("/merge", "expected a string");
      try {
        bank.merge = parse_merge_mode(value.get<std::string>());
      } catch (const ValidationError& e) {
        throw ConfigError("/merge", e.what());
      }
    } else if (key != "transforms") {
      throw ConfigError("/" + key, "unknown key");
    }
  }
  if (!j.contains("transforms") || !j["transforms"].is_array()) {
    throw ConfigError("/transforms", "expected an array of transforms");
  }
  const auto& list = j["transforms"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string base = "/transforms/" + std::to_string(i);
    const auto& item = list[i];
    if (!item.is_object()) throw ConfigError(base, "expected an object");
    Transform t;
    for (const auto& [key, value] : item.items()) {
      const std::string pointer = base + "/" + key;
      if (key == "type") {
        if (!value.is_string()) throw ConfigError(pointer, "expected a string");
        try {
          t.kind = parse_kind(value.get<std::string>());
        } catch (const ConfigError& e) {
          throw ConfigError(pointer, e.what());
        }
      } else if (key == "fraction") {
        if (!value.is_number()) throw ConfigError(pointer, "expected a number");
        t.fraction = value.get<double>();
      } else if (key == "flip") {
        if (!value.is_boolean()) throw ConfigError(pointer, "expected a boolean");
        t.flip = value.get<bool>();
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) throw ConfigError(pointer, "expected a non-negative integer");
        t.seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError(pointer, "unknown key");
      }
    }
    if (!item.contains("type")) throw ConfigError(base + "/type", "missing transform type");
    if (!(t.fraction > 0.0 && t.fraction <= 1.0)) throw ConfigError(base + "/fraction", "must be in (0,1]");
    bank.transforms.push_back(t);
  }
  if (bank.transforms.empty()) throw ConfigError("/transforms", "transform bank is empty");
  return bank;
}

nlohmann::json TransformBank::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : transforms) {
    nlohmann::json item{{"type", kind_name(t.kind)}};
    if (t.kind == Transform::Kind::center_crop || t.kind == Transform::Kind::random_crop) {
      item["fraction"] = t.fraction;
      item["flip"] = t.flip;
    }
    if (t.kind == Transform::Kind::random_crop) item["seed"] = t.seed;
    list.push_back(item);
  }
  return {{"transforms", list}, {"merge", to_string(merge)}};
}

void TransformBank::validate() const {
  if (transforms.empty()) throw ValidationError("transform bank is empty");
  for (const auto& t : transforms) {
    if (!(t.fraction > 0.0 && t.fraction <= 1.0)) throw ValidationError("crop fraction must be in (0,1]");
  }
}

TransformBank read_transform_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transform bank '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("transform bank '" + path + "': " + e.what());
  }
  return TransformBank::from_json(j);
}

double merge_scores(const std::vector<double>& values, MergeMode mode) {
  if (values.empty()) throw ValidationError("nothing to merge");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return *lo;
  double merged = 0.0;
  if (mode == MergeMode::arithmetic) {
    for (double v : values) merged += v;
    merged /= static_cast<double>(values.size());
  } else {
    for (double v : values) merged += std::log(std::max(v, kProbabilityFloor));
    merged = std::exp(merged / static_cast<double>(values.size()));
  }
  return std::clamp(merged, *lo, *hi);
}

PredictionMatrix tta_predict(const model::QueryModel& model, const std::vector<std::string>& image_ids,
                             const std::vector<ImageTensor>& images, const TransformBank& bank) {
  bank.validate();
  if (image_ids.size() != images.size()) throw ValidationError("image id and image counts differ");
  const int h = model.config().image_height, w = model.config().image_width;
  std::vector<Matrix> per_transform;
  for (const auto& t : bank.transforms) {
    std::vector<ImageTensor> transformed;
    transformed.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      transformed.push_back(apply_transform(t, images[i], h, w, i));
      if (transformed.back().height() != h || transformed.back().width() != w) {
        throw ValidationError("transform " + t.describe() + " produced a " + std::to_string(transformed.back().height()) +
                              "x" + std::to_string(transformed.back().width()) + " image, model expects " +
                              std::to_string(h) + "x" + std::to_string(w));
      }
    }
    per_transform.push_back(model::predict(model, image_ids, transformed).scores());
  }
  Matrix merged(images.size(), model.num_classes());
  std::vector<double> values(per_transform.size());
  for (std::size_t i = 0; i < merged.rows(); ++i) {
    for (std::size_t c = 0; c < merged.cols(); ++c) {
      for (std::size_t t = 0; t < per_transform.size(); ++t) values[t] = per_transform[t](i, c);
      merged(i, c) = std::clamp(merge_scores(values, bank.merge), 0.0, 1.0);
    }
  }
  return PredictionMatrix(model.vocabulary(), image_ids, std::move(merged));
}

PredictionMatrix tta_predict(const model::QueryModel& model, const LabeledDataset& dataset, const TransformBank& bank) {
  if (!(dataset.vocabulary() == model.vocabulary())) throw ValidationError("model and dataset vocabularies differ");
  std::vector<ImageTensor> images;
  images.reserve(dataset.size());
  for (const auto& e : dataset.examples()) images.push_back(e.image);
  return tta_predict(model, dataset.image_ids(), images, bank);
}

PredictionMatrix model_wise_ensemble(const std::vector<PredictionMatrix>& predictions) {
  check_aligned(predictions, "model-wise ensemble");
  const auto& first = predictions.front();
  Matrix sum(first.rows(), first.cols());
  for (const auto& p : predictions) {
    const auto src = p.scores().data();
    auto dst = sum.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double n = static_cast<double>(predictions.size());
  for (double& v : sum.data()) v = std::clamp(v / n, 0.0, 1.0);
  return PredictionMatrix(first.vocabulary(), first.image_ids(), std::move(sum));
}

std::vector<std::size_t> top_models_by_map(const std::vector<PredictionMatrix>& dev_predictions,
                                           const LabeledDataset& dev_labels, std::size_t k) {
  check_aligned(dev_predictions, "model ranking");
  if (k < 1 || k > dev_predictions.size()) throw ValidationError("k must be between 1 and the number of models");
  std::vector<double> maps;
  for (const auto& p : dev_predictions) maps.push_back(evaluation::mean_average_precision(p, dev_labels).map);
  auto order = rank_descending(maps);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

ClassWiseResult class_wise_ensemble(const std::vector<PredictionMatrix>& dev_predictions,
                                    const LabeledDataset& dev_labels,
                                    const std::vector<PredictionMatrix>& test_predictions, std::size_t k) {
  check_aligned(dev_predictions, "class-wise ensemble (dev)");
  check_aligned(test_predictions, "class-wise ensemble (test)");
  const std::size_t models = dev_predictions.size();
  if (test_predictions.size() != models) throw ValidationError("dev and test prediction counts differ");
  if (k < 1 || k > models) throw ValidationError("k must be between 1 and the number of models");
  if (!(dev_predictions.front().vocabulary() == test_predictions.front().vocabulary())) {
    throw ValidationError("dev and test vocabularies differ");
  }

  std::vector<evaluation::EvalReport> reports;
  for (const auto& p : dev_predictions) reports.push_back(evaluation::mean_average_precision(p, dev_labels));
  std::vector<double> global(models);
  for (std::size_t m = 0; m < models; ++m) global[m] = reports[m].map;
  const auto global_order = rank_descending(global);

  const auto& vocab = test_predictions.front().vocabulary();
  const std::size_t classes = vocab.size();
  const std::size_t rows = test_predictions.front().rows();
  Matrix out(rows, classes);
  ClassWiseResult result{PredictionMatrix(vocab, test_predictions.front().image_ids(), Matrix(rows, classes)), {}, {}};
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> order;
    if (reports.front().per_class_ap[c]) {
      std::vector<double> ap(models);
      for (std::size_t m = 0; m < models; ++m) ap[m] = *reports[m].per_class_ap[c];
      order = rank_descending(ap);
    } else {
      order = global_order;
      result.warnings.push_back("class '" + vocab.name(c) +
                                "' has no development positives; ranked models by development mAP");
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < rows; ++i) {
      double sum = 0.0;
      for (std::size_t m : order) sum += test_predictions[m].scores()(i, c);
      out(i, c) = std::clamp(sum / static_cast<double>(k), 0.0, 1.0);
    }
    result.selected.push_back(std::move(order));
  }
  result.predictions = PredictionMatrix(vocab, test_predictions.front().image_ids(), std::move(out));
  return result;
}

}  // namespace ltmlc::inference
