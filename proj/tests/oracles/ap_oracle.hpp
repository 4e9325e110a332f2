#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <vector>

namespace ltmlc::oracle {

/// Threshold sweep by direct counting: every distinct score is a cutoff and
/// all items at or above it are retrieved together.
inline std::optional<double> threshold_sweep_ap(const std::vector<double>& scores, const std::vector<double>& labels) {
  double total_pos = 0;
  for (double y : labels) total_pos += y > 0.5 ? 1 : 0;
  if (total_pos == 0) return std::nullopt;
  const std::set<double, std::greater<>> cutoffs(scores.begin(), scores.end());
  double ap = 0, prev_recall = 0;
  for (double t : cutoffs) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] > 0.5 ? tp : fp) += 1;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

/// Mean precision at the rank of each positive in the exact ranked list.
/// Only meaningful when scores are distinct.
inline double ranked_list_ap(const std::vector<double>& scores, const std::vector<double>& labels) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0, sum = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] > 0.5) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / hits;
}

}  // namespace ltmlc::oracle
