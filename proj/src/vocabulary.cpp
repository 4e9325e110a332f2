#include "ltmlc/vocabulary.hpp"

#include <algorithm>
#include <fstream>

#include "ltmlc/error.hpp"

namespace ltmlc {

ClassVocabulary::ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ValidationError("empty vocabulary");
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ValidationError("empty class name at position " + std::to_string(i));
    if (!index_.emplace(names_[i], i).second) throw ValidationError("duplicate class '" + names_[i] + "'");
  }
}

bool ClassVocabulary::contains(std::string_view name) const {
  return index_.find(std::string(name)) != index_.end();
}

std::size_t ClassVocabulary::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown class '" + std::string(name) + "'");
  return it->second;
}

void require_columns(const std::vector<std::string>& columns, const ClassVocabulary& vocab, const std::string& source) {
  if (columns == vocab.names()) return;
  std::string missing, extra;
  for (const auto& name : vocab.names()) {
    if (std::find(columns.begin(), columns.end(), name) == columns.end()) missing += (missing.empty() ? "" : ",") + name;
  }
  for (const auto& name : columns) {
    if (!vocab.contains(name)) extra += (extra.empty() ? "" : ",") + name;
  }
  std::string msg = "columns of " + source + " do not match vocabulary";
  if (!missing.empty()) msg += "; missing columns: " + missing;
  if (!extra.empty()) msg += "; extra columns: " + extra;
  if (missing.empty() && extra.empty()) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] != vocab.name(i)) {
        msg += "; first mismatch at column " + std::to_string(i) + ": '" + columns[i] + "' where '" + vocab.name(i) +
               "' was expected";
        break;
      }
    }
  }
  throw ValidationError(msg);
}

ClassVocabulary build_vocabulary(std::vector<std::string> names) { return ClassVocabulary(std::move(names)); }

ClassVocabulary read_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return ClassVocabulary(std::move(names));
}

void write_vocabulary(const ClassVocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file '" + path + "'");
  for (const auto& name : vocab.names()) out << name << '\n';
}

}  // namespace ltmlc
