#include <cmath>
#include <cstring>
#include <fstream>

#include "ltmlc/error.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/training.hpp"
#include "support.hpp"

namespace ltmlc::model {
namespace {

using testing::letters;
using testing::tiny_config;
using testing::tiny_model;

TEST(Embedding, MatchesIndependentReference) {
  std::ifstream in(testing::data_path("embedding_class_00_d4.txt"));
  ASSERT_TRUE(in) << "golden file missing";
  std::vector<double> expected;
  for (double v; in >> v;) expected.push_back(v);
  ASSERT_EQ(expected.size(), 4u);
  const auto v = synthetic_class_embedding("class_00", 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(v[i], expected[i], 1e-12);
}

TEST(Embedding, DeterministicUnitNorm) {
  for (const char* name : {"a", "class_07", "pneumothorax"}) {
    const auto v = synthetic_class_embedding(name, 37);
    EXPECT_EQ(v, synthetic_class_embedding(name, 37));
    double n = 0;
    for (double x : v) n += x * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
  EXPECT_NE(synthetic_class_embedding("a", 8), synthetic_class_embedding("b", 8));
}

TEST(Embedding, RejectsBadArguments) {
  EXPECT_THROW(synthetic_class_embedding("a", 0), ValidationError);
  EXPECT_THROW(synthetic_class_embedding("", 4), ValidationError);
}

TEST(Embedding, CsvIsReorderedAndUsedAsIs) {
  testing::TempDir dir;
  std::ofstream(dir.file("e.csv")) << "class,v0,v1\nb,3,4\na,0.5,0.25\nunused,1,1\n";
  const auto table = read_embedding_csv(dir.file("e.csv"), letters(2), 2);
  EXPECT_EQ(table(0, 0), 0.5);
  EXPECT_EQ(table(0, 1), 0.25);
  EXPECT_EQ(table(1, 0), 3.0);
  EXPECT_EQ(table(1, 1), 4.0);
  EXPECT_THROW(read_embedding_csv(dir.file("e.csv"), letters(3), 2), ValidationError);
  EXPECT_THROW(read_embedding_csv(dir.file("e.csv"), letters(2), 3), ValidationError);
}

TEST(Config, Validation) {
  auto c = tiny_config();
  c.image_height = 12;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.num_layers = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(ModelConfig::from_json(tiny_config().to_json()).to_json(), tiny_config().to_json());
}

TEST(Encoder, DefaultShapeIsEightByEightByD) {
  const auto vocab = letters(3);
  ModelConfig cfg;
  QueryModel m(cfg, vocab, synthetic_embedding_table(vocab, cfg.d), 1);
  auto ws = m.make_workspace();
  Rng rng(1);
  const auto fm = m.encode_image(testing::random_image(64, 64, rng), *ws);
  EXPECT_EQ(fm.height, 8);
  EXPECT_EQ(fm.width, 8);
  EXPECT_EQ(fm.dim, 64);
  EXPECT_EQ(fm.data.size(), 8u * 8 * 64);
}

TEST(Encoder, ZeroImageWithZeroBiasesGivesZeroFeatures) {
  const auto m = tiny_model(letters(4));
  auto ws = m.make_workspace();
  const auto fm = m.encode_image(ImageTensor(8, 8, 0.0f), *ws);
  for (double v : fm.data) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, RejectsWrongImageSize) {
  const auto m = tiny_model(letters(4));
  auto ws = m.make_workspace();
  EXPECT_THROW(m.encode_image(ImageTensor(16, 8), *ws), ValidationError);
}

TEST(Query, LogitCountAndDimensionCheck) {
  const auto m = tiny_model(letters(26));
  Rng rng(3);
  EXPECT_EQ(m.logits(testing::random_image(8, 8, rng)).size(), 26u);
  auto ws = m.make_workspace();
  const auto fm = m.encode_image(testing::random_image(8, 8, rng), *ws);
  EXPECT_THROW(m.query_forward(fm, Matrix(26, 4), *ws), ValidationError);
}

TEST(Query, SeparateHeadPerturbationLeavesOtherLogits) {
  auto m = tiny_model(letters(4), 7);
  Rng rng(4);
  const auto image = testing::random_image(8, 8, rng);
  const auto before = m.logits(image);
  const std::size_t d = 8, other = 2;
  auto w = m.parameter("head.weight");
  for (std::size_t j = 0; j < d; ++j) w[other * d + j] += 0.5;
  m.parameter("head.bias")[other] -= 1.0;
  const auto after = m.logits(image);
  for (std::size_t c = 0; c < 4; ++c) {
    if (c == other) {
      EXPECT_NE(after[c], before[c]);
    } else {
      EXPECT_EQ(after[c], before[c]);
    }
  }
}

TEST(Query, SeparateHeadGradientIsolationIsExact) {
  const auto m = tiny_model(letters(4), 8);
  Rng rng(5);
  const auto image = testing::random_image(8, 8, rng);
  for (std::size_t c = 0; c < 4; ++c) {
    auto ws = m.make_workspace();
    m.forward(image, *ws);
    std::vector<double> dlogits(4, 0.0), grad(m.parameters().size(), 0.0);
    dlogits[c] = 1.0;
    m.backward(dlogits, *ws, grad);
    const auto& hw = m.spec("head.weight");
    const auto& hb = m.spec("head.bias");
    for (std::size_t other = 0; other < 4; ++other) {
      if (other == c) continue;
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(grad[hw.offset + other * 8 + j], 0.0);
      EXPECT_EQ(grad[hb.offset + other], 0.0);
    }
  }
}

TEST(Query, PermutingQueriesAndHeadsPermutesLogits) {
  const std::size_t classes = 5, d = 8;
  const auto m = tiny_model(letters(classes), 9);
  Rng rng(6);
  const auto image = testing::random_image(8, 8, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};

  Matrix emb(classes, d);
  auto permuted = m;
  auto hw = permuted.parameter("head.weight");
  auto hb = permuted.parameter("head.bias");
  const auto ow = m.parameter("head.weight");
  const auto ob = m.parameter("head.bias");
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      emb(i, j) = m.embeddings()(perm[i], j);
      hw[i * d + j] = ow[perm[i] * d + j];
    }
    hb[i] = ob[perm[i]];
  }
  auto ws = m.make_workspace();
  const auto base = m.query_forward(m.encode_image(image, *ws), m.embeddings(), *ws);
  auto ws2 = permuted.make_workspace();
  const auto out = permuted.query_forward(permuted.encode_image(image, *ws2), emb, *ws2);
  for (std::size_t i = 0; i < classes; ++i) EXPECT_NEAR(out[i], base[perm[i]], 1e-9);
}

TEST(Query, SharedHeadHasOneRow) {
  const auto m = tiny_model(letters(6), 1, HeadMode::shared);
  EXPECT_EQ(m.spec("head.weight").shape, (std::vector<std::int64_t>{1, 8}));
  EXPECT_EQ(m.spec("head.bias").size, 1u);
}

double weighted_loss(const QueryModel& m, const std::vector<ImageTensor>& images,
                     const std::vector<std::vector<double>>& labels, const std::vector<double>& w) {
  double total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto z = m.logits(images[i]);
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double s = 1.0 / (1.0 + std::exp(-z[c]));
      total += w[c] * (-labels[i][c] * std::log(s) - (1 - labels[i][c]) * std::log(1 - s));
    }
  }
  return total / static_cast<double>(images.size());
}

void gradient_check(HeadMode mode) {
  auto m = tiny_model(letters(4), 11, mode);
  Rng rng(7);
  std::vector<ImageTensor> images;
  std::vector<const ImageTensor*> ptrs;
  std::vector<std::vector<double>> labels{{1, 0, 1, 0}, {0, 0.3, 1, 1}, {0, 1, 0, 0}};
  for (int i = 0; i < 3; ++i) images.push_back(testing::random_image(8, 8, rng));
  for (const auto& im : images) ptrs.push_back(&im);
  const std::vector<double> w{1.0, 2.0, 0.5, 3.0};
  std::vector<double> grad(m.parameters().size());
  training::batch_loss_and_gradient(m, ptrs, labels, training::ClassWeights(w), grad);

  auto params = m.parameters();
  double worst = 0;
  for (int t = 0; t < 80; ++t) {
    const std::size_t i = rng.uniform_index(params.size());
    const double old = params[i];
    params[i] = old + 1e-4;
    const double up = weighted_loss(m, images, labels, w);
    params[i] = old - 1e-4;
    const double down = weighted_loss(m, images, labels, w);
    params[i] = old;
    const double numeric = (up - down) / 2e-4;
    const double rel = std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Gradient, FullModelMatchesFiniteDifferencesSeparate) { gradient_check(HeadMode::separate); }
TEST(Gradient, FullModelMatchesFiniteDifferencesShared) { gradient_check(HeadMode::shared); }

TEST(Predict, ZeroLogitsGiveOneHalf) {
  const auto vocab = letters(3);
  auto m = tiny_model(vocab);
  for (auto& v : m.parameter("head.weight")) v = 0.0;
  for (auto& v : m.parameter("head.bias")) v = 0.0;
  const auto p = predict(m, testing::random_dataset(vocab, 4, 8, 8, 1));
  for (double v : p.scores().data()) EXPECT_EQ(v, 0.5);
}

TEST(Predict, BatchedEqualsPerExample) {
  const auto vocab = letters(5);
  const auto m = tiny_model(vocab, 3);
  const auto data = testing::random_dataset(vocab, 9, 8, 8, 2);
  const auto batched = predict(m, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto z = m.logits(data[i].image);
    for (std::size_t c = 0; c < 5; ++c) {
      const double s = batched.scores()(i, c);
      EXPECT_NEAR(s, sigmoid(z[c]), 1e-6);
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
  }
  EXPECT_EQ(batched.image_ids(), data.image_ids());
}

TEST(Predict, VocabularyMismatchThrows) {
  const auto m = tiny_model(letters(3));
  EXPECT_THROW(predict(m, testing::random_dataset(letters(4), 2, 8, 8, 1)), ValidationError);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-16);
}

TEST(Model, SameSeedSameParameters) {
  const auto a = tiny_model(letters(3), 4), b = tiny_model(letters(3), 4), c = tiny_model(letters(3), 5);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

}  // namespace
}  // namespace ltmlc::model
