#include "ltmlc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "ltmlc/error.hpp"

namespace ltmlc {

namespace {

constexpr char kMagic[] = "LTMLC1\n";
constexpr std::size_t kMagicSize = 7;
constexpr std::size_t kHeaderSize = kMagicSize + 8;

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t element_count(const std::vector<std::int64_t>& shape) {
  std::uint64_t n = 1;
  for (auto s : shape) {
    if (s < 0) throw ParseError("negative tensor dimension");
    n *= static_cast<std::uint64_t>(s);
  }
  return n;
}

}  // namespace

const NamedTensor& ModelCheckpoint::tensor(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
  if (it == tensors.end()) throw ValidationError("checkpoint has no tensor '" + name + "'");
  return *it;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : checkpoint.tensors) {
    if (element_count(t.shape) != t.values.size()) {
      throw ValidationError("tensor '" + t.name + "' shape does not match its value count");
    }
    for (float v : t.values) {
      if (!std::isfinite(v)) throw ValidationError("tensor '" + t.name + "' has a non-finite value");
    }
    const std::uint64_t length = t.values.size() * sizeof(float);
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}, {"length", length}});
    offset += length;
  }
  manifest["config"] = checkpoint.config;
  manifest["vocabulary"] = checkpoint.vocabulary.names();
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + kMagicSize);
  put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : checkpoint.tensors) {
    for (float v : t.values) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ModelCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicSize) throw ParseError("truncated checkpoint: missing magic");
  if (std::memcmp(bytes.data(), kMagic, kMagicSize) != 0) throw ParseError("bad magic");
  if (bytes.size() < kHeaderSize) throw ParseError("truncated checkpoint: missing manifest length");
  const std::uint64_t manifest_size = get_u64_le(bytes.data() + kMagicSize);
  if (manifest_size > bytes.size() - kHeaderSize) throw ParseError("truncated checkpoint: manifest cut short");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + kHeaderSize,
                                     bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + manifest_size));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  const auto payload = bytes.subspan(kHeaderSize + manifest_size);

  struct Extent {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Extent> extents;
  std::vector<NamedTensor> tensors;
  try {
    for (const auto& entry : manifest.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      if (entry.at("dtype").get<std::string>() != "f32") throw ParseError("unsupported dtype for '" + t.name + "'");
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (offset > payload.size() || length > payload.size() - offset) {
        throw ParseError("payload overflow: tensor '" + t.name + "' ends at byte " + std::to_string(offset + length) +
                         " of a " + std::to_string(payload.size()) + "-byte payload");
      }
      if (length != element_count(t.shape) * sizeof(float)) {
        throw ParseError("tensor '" + t.name + "' length does not match its shape");
      }
      t.values.resize(length / sizeof(float));
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        t.values[i] = std::bit_cast<float>(get_u32_le(payload.data() + offset + 4 * i));
      }
      extents.push_back({offset, offset + length, t.name});
      tensors.push_back(std::move(t));
    }
    std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < extents.size(); ++i) {
      if (extents[i].begin < extents[i - 1].end) {
        throw ParseError("overlapping tensors '" + extents[i - 1].name + "' and '" + extents[i].name + "'");
      }
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      for (std::size_t j = i + 1; j < tensors.size(); ++j) {
        if (tensors[i].name == tensors[j].name) throw ParseError("tensor '" + tensors[i].name + "' named twice");
      }
    }
    auto names = manifest.at("vocabulary").get<std::vector<std::string>>();
    return ModelCheckpoint{std::move(tensors), manifest.at("config"), ClassVocabulary(std::move(names))};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
}

void write_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to checkpoint '" + path + "'");
}

ModelCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ltmlc
