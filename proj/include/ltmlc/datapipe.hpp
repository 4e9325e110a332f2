#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ltmlc/dataset.hpp"
#include "ltmlc/rng.hpp"
#include "ltmlc/tensor.hpp"
#include "ltmlc/vocabulary.hpp"

namespace ltmlc::datapipe {

// Raster IO. Binary PGM (P5) and PPM (P6), 8-bit.

/// Values are divided by maxval; grayscale is replicated to three channels.
ImageTensor read_pnm(const std::string& path);
/// P5 when all three channels agree everywhere, P6 otherwise. Values are rounded to 8 bits.
void write_pnm(const ImageTensor& image, const std::string& path);

// Geometric image operations. Bilinear sampling uses pixel centers.

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);
ImageTensor crop(const ImageTensor& image, int top, int left, int height, int width);
ImageTensor horizontal_flip(const ImageTensor& image);
/// Counter-clockwise rotation about the image center, bilinear, edge-clamped.
ImageTensor rotate(const ImageTensor& image, double degrees);

struct AugmentationConfig {
  bool resize_crop = false;
  /// Crop area fraction drawn uniformly from [scale_min, scale_max], then resized back.
  double scale_min = 0.8;
  double scale_max = 1.0;
  bool horizontal_flip = false;
  double flip_prob = 0.5;
  bool rotation = false;
  double max_degrees = 10.0;
  std::uint64_t seed = 0;

  bool any() const noexcept { return resize_crop || horizontal_flip || rotation; }
  void validate() const;
};

/// resize-crop, then flip, then rotate; each only when enabled. Same H x W as the input.
ImageTensor augment(const ImageTensor& image, const AugmentationConfig& config, Rng& rng);

/// Per-example stream used by training so augmentation is independent of visit order.
Rng augmentation_stream(const AugmentationConfig& config, std::uint64_t epoch, std::uint64_t example_index);

// On-disk format: CSV "image_id,path,<classes...>" with paths relative to the
// image directory and labels in {0,1}.

struct LabelTable {
  std::vector<std::string> image_ids;
  std::vector<std::string> paths;
  Matrix labels;
};

/// Class names from a label CSV header.
ClassVocabulary read_csv_vocabulary(const std::string& labels_csv);
/// Labels and paths only; no image is read.
LabelTable read_label_table(const std::string& labels_csv, const ClassVocabulary& vocab);

/// Images are resized to height x width; a non-positive size keeps each image as stored.
LabeledDataset load_dataset(const std::string& labels_csv, const std::string& image_dir, const ClassVocabulary& vocab,
                            int height, int width);
/// Writes <dir>/<split>.csv and one raster per example under <dir>/images/.
void write_dataset(const LabeledDataset& dataset, const std::string& dir, const std::string& split);

struct LabelMapping {
  std::vector<std::pair<std::string, std::string>> pairs;
};

/// CSV with header "source,target"; duplicate sources are rejected.
LabelMapping read_label_mapping(const std::string& path);

/// Copies mapped columns into `target_vocab` order, zero elsewhere, and
/// prefixes every id with "ext_". Several sources on one target combine by max.
LabeledDataset harmonize(const LabeledDataset& external, const LabelMapping& mapping,
                         const ClassVocabulary& target_vocab);

LabeledDataset merge(const std::vector<const LabeledDataset*>& datasets);

}  // namespace ltmlc::datapipe
