#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltmlc/dataset.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/predictions.hpp"

namespace ltmlc::inference {

struct Transform {
  enum class Kind { identity, horizontal_flip, center_crop, random_crop };
  Kind kind = Kind::identity;
  /// Side fraction kept by the crops, in (0,1].
  double fraction = 1.0;
  /// Crops only: mirror after cropping.
  bool flip = false;
  /// random_crop only: offsets come from Rng::stream(seed, image index).
  std::uint64_t seed = 0;

  std::string describe() const;
};

/// Crops are resized back to (height, width); identity and flip keep the input size.
ImageTensor apply_transform(const Transform& transform, const ImageTensor& image, int height, int width,
                            std::uint64_t image_index);

enum class MergeMode { geometric, arithmetic };
MergeMode parse_merge_mode(std::string_view text);
std::string to_string(MergeMode mode);

struct TransformBank {
  std::vector<Transform> transforms;
  MergeMode merge = MergeMode::geometric;

  /// identity, flip, center crop 0.9, center crop 0.9 + flip.
  static TransformBank default_bank();
  static TransformBank identity_bank();

  /// {"transforms":[{"type":"identity"|"hflip"|"center_crop"|"random_crop",
  ///   "fraction":f, "flip":b, "seed":s}, ...], "merge":"geometric"|"arithmetic"}
  static TransformBank from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

TransformBank read_transform_bank(const std::string& path);

/// Merges one entry across transforms. Geometric: exp(mean log max(p, 1e-12)),
/// clamped to the entry's [min, max]; equal inputs are returned unchanged.
double merge_scores(const std::vector<double>& values, MergeMode mode);

PredictionMatrix tta_predict(const model::QueryModel& model, const std::vector<std::string>& image_ids,
                             const std::vector<ImageTensor>& images, const TransformBank& bank);
PredictionMatrix tta_predict(const model::QueryModel& model, const LabeledDataset& dataset, const TransformBank& bank);

/// Entrywise arithmetic mean, models summed in list order.
PredictionMatrix model_wise_ensemble(const std::vector<PredictionMatrix>& predictions);

/// Indices of the k models with the highest dev mAP, ties to the lower index, returned ascending.
std::vector<std::size_t> top_models_by_map(const std::vector<PredictionMatrix>& dev_predictions,
                                           const LabeledDataset& dev_labels, std::size_t k);

struct ClassWiseResult {
  PredictionMatrix predictions;
  /// Per class, the chosen model indices in ascending order.
  std::vector<std::vector<std::size_t>> selected;
  std::vector<std::string> warnings;
};

/// Per class, averages the test columns of the k models with the best dev AP
/// for that class (ties to the lower index). A class without dev positives
/// falls back to the global dev mAP ranking and adds a warning.
ClassWiseResult class_wise_ensemble(const std::vector<PredictionMatrix>& dev_predictions,
                                    const LabeledDataset& dev_labels,
                                    const std::vector<PredictionMatrix>& test_predictions, std::size_t k);

}  // namespace ltmlc::inference
