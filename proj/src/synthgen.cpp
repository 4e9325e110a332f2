#include "ltmlc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ltmlc/error.hpp"

namespace ltmlc::synthgen {

std::vector<CooccurrencePair> SynthConfig::default_cooc_pairs(int num_classes) {
  std::vector<CooccurrencePair> pairs;
  if (num_classes < 10) return pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back({i, num_classes - 5 + i, 0.5});
  return pairs;
}

void SynthConfig::validate() const {
  if (num_classes < 1) throw ValidationError("num_classes must be at least 1");
  if (num_classes > kGridColumns * kGridRows) throw ValidationError("grid exhausted: at most 30 classes");
  if (!(p_head > 0.0 && p_head <= 1.0)) throw ValidationError("p_head must lie in (0, 1]");
  if (!(imbalance_ratio >= 1.0)) throw ValidationError("imbalance_ratio must be at least 1");
  for (const auto& p : cooc_pairs) {
    if (p.parent < 0 || p.parent >= num_classes || p.child < 0 || p.child >= num_classes) {
      throw ValidationError("co-occurrence pair references a class outside the vocabulary");
    }
    if (p.parent == p.child) throw ValidationError("co-occurrence pair with parent == child");
    if (!(p.prob >= 0.0 && p.prob <= 1.0)) throw ValidationError("co-occurrence probability outside [0,1]");
  }
  if (image_size < 1) throw ValidationError("image_size must be positive");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be non-negative");
  if (n_train <= 0 || n_dev <= 0 || n_test <= 0) throw ValidationError("split sizes must be positive");
}

std::vector<double> class_prevalences(int num_classes, double p_head, double imbalance_ratio) {
  if (num_classes < 1) throw ValidationError("num_classes must be at least 1");
  if (!(p_head > 0.0 && p_head <= 1.0)) throw ValidationError("p_head must lie in (0, 1]");
  if (!(imbalance_ratio >= 1.0)) throw ValidationError("imbalance_ratio must be at least 1");
  std::vector<double> p(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double exponent = num_classes == 1 ? 0.0 : -static_cast<double>(c) / (num_classes - 1);
    p[c] = p_head * std::pow(imbalance_ratio, exponent);
  }
  return p;
}

std::vector<double> sample_labels(const std::vector<double>& prevalences, const std::vector<CooccurrencePair>& pairs,
                                  Rng& rng) {
  std::vector<double> labels(prevalences.size(), 0.0);
  for (std::size_t c = 0; c < prevalences.size(); ++c) labels[c] = rng.bernoulli(prevalences[c]) ? 1.0 : 0.0;
  for (const auto& pair : pairs) {
    if (labels[pair.parent] == 1.0 && rng.bernoulli(pair.prob)) labels[pair.child] = 1.0;
  }
  return labels;
}

std::pair<double, double> class_center(int c, int width, int height) {
  const double cx = ((c % kGridColumns) + 0.5) / kGridColumns * width;
  const double cy = ((c / kGridColumns) + 0.5) / kGridRows * height;
  return {cx, cy};
}

ImageTensor render_image(const std::vector<double>& labels, const SynthConfig& config, Rng& rng) {
  if (labels.size() > static_cast<std::size_t>(kGridColumns * kGridRows)) {
    throw ValidationError("grid exhausted: at most 30 classes can be rendered");
  }
  const int size = config.image_size;
  std::vector<double> gray(static_cast<std::size_t>(size) * size);
  for (auto& v : gray) v = std::clamp(kBackground + config.noise_std * rng.normal(), 0.0, 1.0);

  const double inv_two_sigma2 = 1.0 / (2.0 * kBumpSigma * kBumpSigma);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c] <= 0.0) continue;
    const auto [cx, cy] = class_center(static_cast<int>(c), size, size);
    for (int y = 0; y < size; ++y) {
      const double dy = y - cy;
      for (int x = 0; x < size; ++x) {
        const double dx = x - cx;
        gray[static_cast<std::size_t>(y) * size + x] += kBumpAmplitude * std::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
      }
    }
  }

  ImageTensor image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto v = static_cast<float>(std::clamp(gray[static_cast<std::size_t>(y) * size + x], 0.0, 1.0));
      for (int ch = 0; ch < ImageTensor::kChannels; ++ch) image.at(y, x, ch) = v;
    }
  }
  return image;
}

std::vector<std::string> class_names(int num_classes) {
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02d", c);
    names.emplace_back(buf);
  }
  return names;
}

LabeledDataset generate_split(const SynthConfig& config, const std::string& split, std::uint64_t stream_key, int count) {
  if (count <= 0) throw ValidationError("split '" + split + "' must have a positive size");
  const auto prevalences = class_prevalences(config.num_classes, config.p_head, config.imbalance_ratio);
  LabeledDataset dataset(ClassVocabulary(class_names(config.num_classes)));
  Rng rng = Rng::stream(config.seed, stream_key);
  for (int i = 0; i < count; ++i) {
    auto labels = sample_labels(prevalences, config.cooc_pairs, rng);
    auto image = render_image(labels, config, rng);
    dataset.add({"synth_" + split + "_" + std::to_string(i), std::move(image), std::move(labels)});
  }
  return dataset;
}

SyntheticSplits generate_dataset(const SynthConfig& config) {
  config.validate();
  return {generate_split(config, "train", 0, config.n_train), generate_split(config, "dev", 1, config.n_dev),
          generate_split(config, "test", 2, config.n_test)};
}

}  // namespace ltmlc::synthgen
