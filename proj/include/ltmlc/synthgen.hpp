#pragma once

#include <cstdint>
#include <vector>

#include "ltmlc/dataset.hpp"
#include "ltmlc/rng.hpp"

namespace ltmlc::synthgen {

/// Child class is switched on with probability `prob` whenever the parent is on.
struct CooccurrencePair {
  int parent;
  int child;
  double prob;
};

struct SynthConfig {
  int num_classes = 26;
  double p_head = 0.5;
  double imbalance_ratio = 100.0;
  std::vector<CooccurrencePair> cooc_pairs = default_cooc_pairs(26);
  int image_size = 64;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  int n_train = 2000;
  int n_dev = 500;
  int n_test = 500;

  /// Parents 0..4 (head) paired with children C-5..C-1 (tail), q = 0.5.
  /// Empty when C < 10.
  static std::vector<CooccurrencePair> default_cooc_pairs(int num_classes);

  /// Throws ValidationError on any violated constraint.
  void validate() const;
};

inline constexpr int kGridColumns = 5;
inline constexpr int kGridRows = 6;
inline constexpr double kBumpAmplitude = 0.8;
inline constexpr double kBumpSigma = 3.0;
inline constexpr double kBackground = 0.1;

/// p_c = p_head * ratio^(-c / (C - 1)); [p_head] when C == 1.
std::vector<double> class_prevalences(int num_classes, double p_head, double imbalance_ratio);

/// Independent Bernoulli draws, then one extra draw per pair (in list order) whose parent is on.
std::vector<double> sample_labels(const std::vector<double>& prevalences, const std::vector<CooccurrencePair>& pairs,
                                  Rng& rng);

/// Background 0.1 plus per-pixel noise, a Gaussian bump per active class at its
/// grid cell, clamped to [0,1] and replicated to three channels.
/// Pixel (x, y) is evaluated at integer coordinates. Throws ValidationError when C > 30.
ImageTensor render_image(const std::vector<double>& labels, const SynthConfig& config, Rng& rng);

/// Bump center (x, y) in pixels for class `c` on a width x height canvas.
std::pair<double, double> class_center(int c, int width, int height);

std::vector<std::string> class_names(int num_classes);

struct SyntheticSplits {
  LabeledDataset train;
  LabeledDataset dev;
  LabeledDataset test;
};

/// Each split draws from its own stream Rng::stream(seed, split index), so
/// resizing one split leaves the others unchanged.
SyntheticSplits generate_dataset(const SynthConfig& config);

/// One split of `count` examples with ids "synth_<split>_<i>".
LabeledDataset generate_split(const SynthConfig& config, const std::string& split, std::uint64_t stream_key, int count);

}  // namespace ltmlc::synthgen
