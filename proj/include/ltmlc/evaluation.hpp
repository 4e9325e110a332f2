#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltmlc/dataset.hpp"
#include "ltmlc/predictions.hpp"
#include "ltmlc/tensor.hpp"

namespace ltmlc::evaluation {

/// Step-integrated average precision over distinct score thresholds, highest
/// first. Items with equal scores enter the ranking together:
///   AP = sum_t (R_t - R_{t-1}) * P_t
/// Labels > 0.5 count as positive. nullopt when there are no positives.
/// Throws ValidationError on empty or mismatched inputs.
std::optional<double> average_precision(std::span<const double> scores, std::span<const double> labels);

struct EvalReport {
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::size_t> positives;
  /// Classes left out of the mean because they have no positives.
  std::vector<std::size_t> excluded;
  double map = 0.0;
};

/// Unweighted mean of the defined per-class APs. Throws ValidationError when
/// no class has a positive.
EvalReport evaluate_scores(const Matrix& scores, const Matrix& labels);

/// Requires identical image ids (same order) and vocabularies.
EvalReport mean_average_precision(const PredictionMatrix& predictions, const LabeledDataset& labels);
EvalReport mean_average_precision(const PredictionMatrix& predictions, const std::vector<std::string>& image_ids,
                                  const Matrix& labels);

/// Expected AP of an uninformative ranking: the positive rate of each class.
EvalReport prevalence_baseline(const Matrix& labels);
EvalReport prevalence_baseline(const LabeledDataset& labels);

/// CSV "class,ap,positives" (ap left empty when undefined) followed by "mAP,<value>".
void write_report(const EvalReport& report, const ClassVocabulary& vocab, const std::string& path);
/// Inverse of write_report; rows must follow `vocab`.
EvalReport read_report(const std::string& path, const ClassVocabulary& vocab);
/// Per-class AP with NaN for undefined entries.
std::vector<double> ap_values(const EvalReport& report);

}  // namespace ltmlc::evaluation
