#include "ltmlc/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <unordered_map>

#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"

namespace ltmlc::datapipe {
namespace {

namespace fs = std::filesystem;

int read_header_int(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw ParseError("malformed raster header in '" + path + "'");
  return value;
}

float sample_bilinear(const ImageTensor& image, double y, double x, int c) {
  const int h = image.height(), w = image.width();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = image.at(y0, x0, c) * (1.0 - fx) + image.at(y0, x1, c) * fx;
  const double bottom = image.at(y1, x0, c) * (1.0 - fx) + image.at(y1, x1, c) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

double parse_binary_label(const std::string& text, std::size_t line) {
  if (text == "0") return 0.0;
  if (text == "1") return 1.0;
  const double v = csv::parse_real(text, "label on row " + std::to_string(line));
  if (v == 0.0 || v == 1.0) return v;
  throw ValidationError("label '" + text + "' on row " + std::to_string(line) + " is not 0 or 1");
}

}  // namespace

ImageTensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P6") throw ParseError("'" + path + "' is not a binary PGM/PPM file");
  const int width = read_header_int(in, path);
  const int height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw ParseError("unsupported raster dimensions or depth in '" + path + "'");
  }
  in.get();
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError("truncated raster '" + path + "'");
  ImageTensor image(height, width);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      for (int c = 0; c < 3; ++c) {
        const unsigned char b = channels == 3 ? bytes[p * 3 + c] : bytes[p];
        image.at(y, x, c) = std::min(1.0f, b * scale);
      }
    }
  }
  return image;
}

void write_pnm(const ImageTensor& image, const std::string& path) {
  const auto data = image.data();
  bool gray = true;
  for (std::size_t p = 0; p < data.size() && gray; p += 3) gray = data[p] == data[p + 1] && data[p] == data[p + 2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image '" + path + "'");
  out << (gray ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(gray ? data.size() / 3 : data.size());
  for (std::size_t p = 0; p < data.size(); p += gray ? 3 : 1) {
    const float v = std::clamp(data[p], 0.0f, 1.0f);
    bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("resize target must be positive");
  if (height == image.height() && width == image.width()) return image;
  ImageTensor out(height, width);
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(y, x, c) = sample_bilinear(image, src_y, src_x, c);
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& image, int top, int left, int height, int width) {
  if (height <= 0 || width <= 0 || top < 0 || left < 0 || top + height > image.height() ||
      left + width > image.width()) {
    throw ValidationError("crop window outside the image");
  }
  ImageTensor out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(y, x, c) = image.at(top + y, left + x, c);
    }
  }
  return out;
}

ImageTensor horizontal_flip(const ImageTensor& image) {
  ImageTensor out(image.height(), image.width());
  const int w = image.width();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(y, x, c) = image.at(y, w - 1 - x, c);
    }
  }
  return out;
}

ImageTensor rotate(const ImageTensor& image, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (image.height() - 1) / 2.0, cx = (image.width() - 1) / 2.0;
  ImageTensor out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double dy = y - cy, dx = x - cx;
      const double src_x = cx + cs * dx - sn * dy;
      const double src_y = cy + sn * dx + cs * dy;
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(y, x, c) = sample_bilinear(image, src_y, src_x, c);
    }
  }
  return out;
}

void AugmentationConfig::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw ValidationError("augmentation scale range must satisfy 0 < scale_min <= scale_max <= 1");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ValidationError("flip_prob must be in [0,1]");
  if (!(max_degrees >= 0.0 && std::isfinite(max_degrees))) throw ValidationError("max_degrees must be >= 0");
}

ImageTensor augment(const ImageTensor& image, const AugmentationConfig& config, Rng& rng) {
  ImageTensor out = image;
  if (config.resize_crop) {
    const double scale = config.scale_min + (config.scale_max - config.scale_min) * rng.uniform();
    const double side = std::sqrt(scale);
    const int h = std::clamp(static_cast<int>(std::lround(side * image.height())), 1, image.height());
    const int w = std::clamp(static_cast<int>(std::lround(side * image.width())), 1, image.width());
    const int top = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.height() - h + 1)));
    const int left = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.width() - w + 1)));
    out = resize_bilinear(crop(out, top, left, h, w), image.height(), image.width());
  }
  if (config.horizontal_flip && rng.bernoulli(config.flip_prob)) out = horizontal_flip(out);
  if (config.rotation) {
    const double angle = config.max_degrees * (2.0 * rng.uniform() - 1.0);
    out = rotate(out, angle);
  }
  return out;
}

Rng augmentation_stream(const AugmentationConfig& config, std::uint64_t epoch, std::uint64_t example_index) {
  return Rng::stream(config.seed, (epoch << 32) ^ example_index);
}

ClassVocabulary read_csv_vocabulary(const std::string& labels_csv) {
  const auto rows = csv::read_file(labels_csv);
  if (rows.empty()) throw ParseError("'" + labels_csv + "' has no header");
  const auto& header = rows.front();
  if (header.size() < 3 || header[0] != "image_id" || header[1] != "path") {
    throw ValidationError("'" + labels_csv + "' header must be image_id,path,<classes...>");
  }
  return ClassVocabulary(std::vector<std::string>(header.begin() + 2, header.end()));
}

LabelTable read_label_table(const std::string& labels_csv, const ClassVocabulary& vocab) {
  const auto rows = csv::read_file(labels_csv);
  if (rows.empty()) throw ParseError("'" + labels_csv + "' has no header");
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "image_id" || header[1] != "path") {
    throw ValidationError("'" + labels_csv + "' header must start with image_id,path");
  }
  require_columns(std::vector<std::string>(header.begin() + 2, header.end()), vocab, labels_csv);

  LabelTable table{{}, {}, Matrix(rows.size() - 1, vocab.size())};
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;
    if (row.size() != header.size()) {
      throw ParseError("row " + std::to_string(line) + " of '" + labels_csv + "' has " + std::to_string(row.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < vocab.size(); ++c) table.labels(r - 1, c) = parse_binary_label(row[c + 2], line);
    table.image_ids.push_back(row[0]);
    table.paths.push_back(row[1]);
  }
  return table;
}

LabeledDataset load_dataset(const std::string& labels_csv, const std::string& image_dir, const ClassVocabulary& vocab,
                            int height, int width) {
  const LabelTable table = read_label_table(labels_csv, vocab);
  LabeledDataset dataset(vocab);
  for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
    const fs::path file = fs::path(image_dir) / table.paths[i];
    if (!fs::exists(file)) {
      throw Error("row " + std::to_string(i + 2) + " of '" + labels_csv + "': image '" + file.string() +
                  "' not found");
    }
    ImageTensor image = read_pnm(file.string());
    if (height > 0 && width > 0) image = resize_bilinear(image, height, width);
    const auto row = table.labels.row(i);
    dataset.add(Example{table.image_ids[i], std::move(image), std::vector<double>(row.begin(), row.end())});
  }
  return dataset;
}

void write_dataset(const LabeledDataset& dataset, const std::string& dir, const std::string& split) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  std::ofstream out(root / (split + ".csv"), std::ios::binary);
  if (!out) throw Error("cannot write '" + (root / (split + ".csv")).string() + "'");
  csv::Row header{"image_id", "path"};
  for (const auto& name : dataset.vocabulary().names()) header.push_back(name);
  out << csv::join(header) << '\n';
  for (const auto& e : dataset.examples()) {
    const std::string rel = "images/" + e.image_id + ".pgm";
    write_pnm(e.image, (root / rel).string());
    csv::Row row{e.image_id, rel};
    for (double v : e.labels) row.push_back(v > 0.5 ? "1" : "0");
    out << csv::join(row) << '\n';
  }
}

LabelMapping read_label_mapping(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != csv::Row{"source", "target"}) {
    throw ValidationError("mapping '" + path + "' must have header source,target");
  }
  LabelMapping mapping;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw ParseError("row " + std::to_string(r + 1) + " of '" + path + "' needs 2 fields");
    if (!seen.insert(rows[r][0]).second) throw ValidationError("mapping source '" + rows[r][0] + "' listed twice");
    mapping.pairs.emplace_back(rows[r][0], rows[r][1]);
  }
  return mapping;
}

LabeledDataset harmonize(const LabeledDataset& external, const LabelMapping& mapping,
                         const ClassVocabulary& target_vocab) {
  std::vector<std::pair<std::size_t, std::size_t>> columns;
  std::set<std::string> seen;
  for (const auto& [source, target] : mapping.pairs) {
    if (!seen.insert(source).second) throw ValidationError("mapping source '" + source + "' listed twice");
    if (!external.vocabulary().contains(source)) {
      throw ValidationError("mapping source '" + source + "' is not in the external vocabulary");
    }
    if (!target_vocab.contains(target)) {
      throw ValidationError("mapping target '" + target + "' is not in the target vocabulary");
    }
    columns.emplace_back(external.vocabulary().index(source), target_vocab.index(target));
  }
  LabeledDataset out(target_vocab);
  for (const auto& e : external.examples()) {
    std::vector<double> labels(target_vocab.size(), 0.0);
    for (const auto& [s, t] : columns) labels[t] = std::max(labels[t], e.labels[s]);
    out.add(Example{"ext_" + e.image_id, e.image, std::move(labels)});
  }
  return out;
}

LabeledDataset merge(const std::vector<const LabeledDataset*>& datasets) {
  if (datasets.empty()) throw ValidationError("merge needs at least one dataset");
  LabeledDataset out(datasets.front()->vocabulary());
  for (const auto* d : datasets) {
    if (!(d->vocabulary() == out.vocabulary())) throw ValidationError("cannot merge datasets with different vocabularies");
    for (const auto& e : d->examples()) out.add(e);
  }
  return out;
}

}  // namespace ltmlc::datapipe
