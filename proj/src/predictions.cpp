#include "ltmlc/predictions.hpp"

#include <cmath>
#include <fstream>

#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"

namespace ltmlc {

PredictionMatrix::PredictionMatrix(ClassVocabulary vocabulary, std::vector<std::string> image_ids, Matrix scores)
    : vocabulary_(std::move(vocabulary)), image_ids_(std::move(image_ids)), scores_(std::move(scores)) {
  if (scores_.rows() != image_ids_.size()) {
    throw ValidationError("prediction matrix has " + std::to_string(scores_.rows()) + " rows but " +
                          std::to_string(image_ids_.size()) + " image ids");
  }
  if (scores_.cols() != vocabulary_.size()) {
    throw ValidationError("prediction matrix has " + std::to_string(scores_.cols()) + " columns but vocabulary has " +
                          std::to_string(vocabulary_.size()) + " classes");
  }
  for (std::size_t r = 0; r < scores_.rows(); ++r) {
    for (std::size_t c = 0; c < scores_.cols(); ++c) {
      const double s = scores_(r, c);
      if (!(s >= 0.0 && s <= 1.0)) {
        throw ValidationError("score out of range at row " + std::to_string(r) + ", class '" +
                              vocabulary_.name(c) + "'");
      }
    }
  }
}

void write_predictions(const PredictionMatrix& predictions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write predictions to '" + path + "'");
  csv::Row header{"image_id"};
  for (const auto& name : predictions.vocabulary().names()) header.push_back(name);
  out << csv::join(header) << '\n';
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    out << csv::escape(predictions.image_ids()[r]);
    for (double s : predictions.scores().row(r)) out << ',' << csv::format_real(s);
    out << '\n';
  }
}

PredictionMatrix read_predictions(const std::string& path, const ClassVocabulary& vocab) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "image_id") {
    throw ParseError("prediction file '" + path + "' lacks an image_id header");
  }
  require_columns({rows[0].begin() + 1, rows[0].end()}, vocab, "'" + path + "'");
  std::vector<std::string> ids;
  Matrix scores(rows.size() - 1, vocab.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != vocab.size() + 1) {
      throw ParseError("line " + std::to_string(r + 1) + " of '" + path + "' has " + std::to_string(row.size()) +
                       " fields, expected " + std::to_string(vocab.size() + 1));
    }
    ids.push_back(row[0]);
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      const double s = csv::parse_real(row[c + 1], "line " + std::to_string(r + 1));
      if (!(s >= 0.0 && s <= 1.0)) {
        throw ValidationError("score out of range on line " + std::to_string(r + 1) + " of '" + path + "'");
      }
      scores(r - 1, c) = s;
    }
  }
  return PredictionMatrix(vocab, std::move(ids), std::move(scores));
}

}  // namespace ltmlc
