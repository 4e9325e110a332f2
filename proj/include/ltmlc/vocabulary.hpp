#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ltmlc {

/// Ordered set of class names. The position of a name is the column index of
/// that class in every label, score and weight matrix.
class ClassVocabulary {
 public:
  /// Throws ValidationError on an empty list, an empty name or a duplicate.
  explicit ClassVocabulary(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t index) const { return names_.at(index); }

  bool contains(std::string_view name) const;
  /// Throws ValidationError for unknown names.
  std::size_t index(std::string_view name) const;

  friend bool operator==(const ClassVocabulary& a, const ClassVocabulary& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Throws ValidationError listing missing and extra columns (or the first
/// out-of-order one) unless `columns` equals the vocabulary exactly.
void require_columns(const std::vector<std::string>& columns, const ClassVocabulary& vocab, const std::string& source);

ClassVocabulary build_vocabulary(std::vector<std::string> names);

/// One class name per line; blank lines are ignored.
ClassVocabulary read_vocabulary(const std::string& path);
void write_vocabulary(const ClassVocabulary& vocab, const std::string& path);

}  // namespace ltmlc
