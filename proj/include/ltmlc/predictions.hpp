#pragma once

#include <string>
#include <vector>

#include "ltmlc/tensor.hpp"
#include "ltmlc/vocabulary.hpp"

namespace ltmlc {

/// Per-image, per-class scores in [0,1]. Columns follow the vocabulary order.
class PredictionMatrix {
 public:
  /// Throws ValidationError if the row count differs from the id count, the
  /// column count from the vocabulary size, or any score is outside [0,1].
  PredictionMatrix(ClassVocabulary vocabulary, std::vector<std::string> image_ids, Matrix scores);

  const ClassVocabulary& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const Matrix& scores() const noexcept { return scores_; }
  std::size_t rows() const noexcept { return scores_.rows(); }
  std::size_t cols() const noexcept { return scores_.cols(); }

 private:
  ClassVocabulary vocabulary_;
  std::vector<std::string> image_ids_;
  Matrix scores_;
};

/// CSV with header "image_id,<class names...>" and 17 significant digits per score.
void write_predictions(const PredictionMatrix& predictions, const std::string& path);
PredictionMatrix read_predictions(const std::string& path, const ClassVocabulary& vocab);

}  // namespace ltmlc
