#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltmlc/vocabulary.hpp"

namespace ltmlc {

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Serialized model: named float32 tensors plus the run configuration and vocabulary.
///
/// File layout:
///   7 bytes   magic "LTMLC1\n"
///   8 bytes   manifest length, little-endian uint64
///   N bytes   UTF-8 JSON manifest {"tensors": [...], "config": {...}, "vocabulary": [...]}
///   payload   little-endian IEEE-754 float32 values addressed by the manifest
struct ModelCheckpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json config;
  ClassVocabulary vocabulary;

  const NamedTensor& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& checkpoint);
/// Throws ParseError: "truncated", "bad magic", "malformed manifest", "payload overflow", ...
ModelCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path);
ModelCheckpoint read_checkpoint(const std::string& path);

}  // namespace ltmlc
