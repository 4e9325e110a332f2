#include "ltmlc/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"

namespace ltmlc::evaluation {

std::optional<double> average_precision(std::span<const double> scores, std::span<const double> labels) {
  if (scores.empty()) throw ValidationError("average precision needs at least one item");
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  const std::size_t total_pos =
      static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](double y) { return y > 0.5; }));
  if (total_pos == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      if (labels[order[i]] > 0.5) {
        ++tp;
      } else {
        ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

EvalReport evaluate_scores(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ValidationError("score and label matrices differ in shape");
  }
  EvalReport report;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    const auto s = scores.column(c);
    const auto y = labels.column(c);
    report.positives.push_back(
        static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0.5; })));
    auto ap = average_precision(s, y);
    if (ap) {
      sum += *ap;
      ++defined;
    } else {
      report.excluded.push_back(c);
    }
    report.per_class_ap.push_back(ap);
  }
  if (defined == 0) throw ValidationError("no class has a positive example; mAP is undefined");
  report.map = sum / static_cast<double>(defined);
  return report;
}

EvalReport mean_average_precision(const PredictionMatrix& predictions, const std::vector<std::string>& image_ids,
                                  const Matrix& labels) {
  if (predictions.image_ids() != image_ids) throw ValidationError("prediction and label image ids are not aligned");
  return evaluate_scores(predictions.scores(), labels);
}

EvalReport mean_average_precision(const PredictionMatrix& predictions, const LabeledDataset& labels) {
  if (!(predictions.vocabulary() == labels.vocabulary())) {
    throw ValidationError("prediction and label vocabularies differ");
  }
  return mean_average_precision(predictions, labels.image_ids(), labels.label_matrix());
}

EvalReport prevalence_baseline(const Matrix& labels) {
  EvalReport report;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < labels.cols(); ++c) {
    std::size_t pos = 0;
    for (std::size_t r = 0; r < labels.rows(); ++r) pos += labels(r, c) > 0.5 ? 1 : 0;
    report.positives.push_back(pos);
    if (pos == 0) {
      report.per_class_ap.push_back(std::nullopt);
      report.excluded.push_back(c);
      continue;
    }
    const double ap = static_cast<double>(pos) / static_cast<double>(labels.rows());
    report.per_class_ap.push_back(ap);
    sum += ap;
    ++defined;
  }
  if (defined == 0) throw ValidationError("no class has a positive example; mAP is undefined");
  report.map = sum / static_cast<double>(defined);
  return report;
}

EvalReport prevalence_baseline(const LabeledDataset& labels) { return prevalence_baseline(labels.label_matrix()); }

void write_report(const EvalReport& report, const ClassVocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report '" + path + "'");
  out << "class,ap,positives\n";
  for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
    out << csv::escape(vocab.name(c)) << ','
        << (report.per_class_ap[c] ? csv::format_real(*report.per_class_ap[c]) : std::string()) << ','
        << report.positives[c] << '\n';
  }
  out << "mAP," << csv::format_real(report.map) << '\n';
}

EvalReport read_report(const std::string& path, const ClassVocabulary& vocab) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != csv::Row{"class", "ap", "positives"}) {
    throw ValidationError("report '" + path + "' must have header class,ap,positives");
  }
  if (rows.size() != vocab.size() + 2) throw ValidationError("report '" + path + "' does not match the vocabulary");
  EvalReport report;
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    const auto& row = rows[c + 1];
    const std::string line = "line " + std::to_string(c + 2) + " of '" + path + "'";
    if (row.size() != 3 || row[0] != vocab.name(c)) throw ValidationError(line + " does not name class '" + vocab.name(c) + "'");
    if (row[1].empty()) {
      report.per_class_ap.push_back(std::nullopt);
      report.excluded.push_back(c);
    } else {
      report.per_class_ap.push_back(csv::parse_real(row[1], line));
    }
    report.positives.push_back(static_cast<std::size_t>(csv::parse_real(row[2], line)));
  }
  const auto& last = rows.back();
  if (last.size() != 2 || last[0] != "mAP") throw ValidationError("report '" + path + "' lacks the mAP line");
  report.map = csv::parse_real(last[1], "mAP of '" + path + "'");
  return report;
}

std::vector<double> ap_values(const EvalReport& report) {
  std::vector<double> out;
  for (const auto& ap : report.per_class_ap) out.push_back(ap ? *ap : std::numeric_limits<double>::quiet_NaN());
  return out;
}

}  // namespace ltmlc::evaluation
