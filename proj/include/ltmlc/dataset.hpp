#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "ltmlc/tensor.hpp"
#include "ltmlc/vocabulary.hpp"

namespace ltmlc {

struct Example {
  std::string image_id;
  ImageTensor image;
  /// Multi-hot, one entry per vocabulary class. Fractional only after MixUp.
  std::vector<double> labels;
};

/// Images with multi-hot labels over a shared vocabulary.
class LabeledDataset {
 public:
  explicit LabeledDataset(ClassVocabulary vocabulary) : vocabulary_(std::move(vocabulary)) {}

  const ClassVocabulary& vocabulary() const noexcept { return vocabulary_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }

  const Example& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<Example>& examples() const noexcept { return examples_; }

  /// Throws ValidationError on a duplicate id, wrong label length or a label outside [0,1].
  void add(Example example);

  std::vector<std::string> image_ids() const;
  /// size() x |vocabulary| label matrix.
  Matrix label_matrix() const;
  std::vector<std::size_t> positive_counts() const;

 private:
  ClassVocabulary vocabulary_;
  std::vector<Example> examples_;
  std::unordered_set<std::string> ids_;
};

}  // namespace ltmlc
