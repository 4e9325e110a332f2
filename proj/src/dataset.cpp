#include "ltmlc/dataset.hpp"

#include <cmath>

#include "ltmlc/error.hpp"

namespace ltmlc {

void LabeledDataset::add(Example example) {
  if (example.labels.size() != vocabulary_.size()) {
    throw ValidationError("example '" + example.image_id + "' has " + std::to_string(example.labels.size()) +
                          " labels, vocabulary has " + std::to_string(vocabulary_.size()));
  }
  for (double v : example.labels) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("label outside [0,1] in example '" + example.image_id + "'");
  }
  if (!ids_.insert(example.image_id).second) {
    throw ValidationError("duplicate image id '" + example.image_id + "'");
  }
  examples_.push_back(std::move(example));
}

std::vector<std::string> LabeledDataset::image_ids() const {
  std::vector<std::string> ids;
  ids.reserve(examples_.size());
  for (const auto& e : examples_) ids.push_back(e.image_id);
  return ids;
}

Matrix LabeledDataset::label_matrix() const {
  Matrix m(examples_.size(), vocabulary_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    for (std::size_t c = 0; c < vocabulary_.size(); ++c) m(i, c) = examples_[i].labels[c];
  }
  return m;
}

std::vector<std::size_t> LabeledDataset::positive_counts() const {
  std::vector<std::size_t> counts(vocabulary_.size(), 0);
  for (const auto& e : examples_) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += e.labels[c] > 0.5 ? 1 : 0;
  }
  return counts;
}

}  // namespace ltmlc
