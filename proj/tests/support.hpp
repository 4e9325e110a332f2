#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ltmlc/dataset.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/rng.hpp"
#include "ltmlc/tensor.hpp"

namespace ltmlc::testing {

#ifndef LTMLC_TEST_DATA_DIR
#define LTMLC_TEST_DATA_DIR "tests/data"
#endif

inline std::string data_path(const std::string& name) { return std::string(LTMLC_TEST_DATA_DIR) + "/" + name; }

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string tag = info ? std::string(info->test_suite_name()) + "_" + info->name() : "ltmlc";
    for (char& ch : tag) {
      if (ch == '/') ch = '_';
    }
    path_ = std::filesystem::temp_directory_path() /
            ("ltmlc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline ClassVocabulary letters(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::string(1, static_cast<char>('a' + i)));
  return ClassVocabulary(names);
}

/// d=8, two decoder layers, two heads, widths {4,4,8}, 8x8 input.
inline model::ModelConfig tiny_config(model::HeadMode mode = model::HeadMode::separate) {
  model::ModelConfig c;
  c.d = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.head_mode = mode;
  c.encoder_channels = {4, 4, 8};
  c.image_height = 8;
  c.image_width = 8;
  return c;
}

inline model::QueryModel tiny_model(const ClassVocabulary& vocab, std::uint64_t seed = 1,
                                    model::HeadMode mode = model::HeadMode::separate) {
  const auto cfg = tiny_config(mode);
  return model::QueryModel(cfg, vocab, model::synthetic_embedding_table(vocab, cfg.d), seed);
}

inline ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor image(h, w);
  for (auto& v : image.data()) v = static_cast<float>(rng.uniform());
  return image;
}

inline LabeledDataset random_dataset(const ClassVocabulary& vocab, std::size_t n, int h, int w, std::uint64_t seed,
                                     const std::string& prefix = "img") {
  Rng rng(seed);
  LabeledDataset d(vocab);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> y(vocab.size());
    for (auto& v : y) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    y[i % vocab.size()] = 1.0;
    d.add(Example{prefix + std::to_string(i), random_image(h, w, rng), y});
  }
  return d;
}

}  // namespace ltmlc::testing
