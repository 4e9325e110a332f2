#include <cmath>
#include <fstream>

#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"
#include "ltmlc/inference.hpp"
#include "support.hpp"

namespace ltmlc::inference {
namespace {

using testing::letters;

TEST(Merge, GeometricExamples) {
  EXPECT_NEAR(merge_scores({0.4, 0.9}, MergeMode::geometric), 0.6, 1e-15);
  EXPECT_EQ(merge_scores({0.3}, MergeMode::geometric), 0.3);
  EXPECT_EQ(merge_scores({0.7, 0.7, 0.7}, MergeMode::geometric), 0.7);
  EXPECT_NEAR(merge_scores({0.0, 1.0}, MergeMode::geometric), 1e-6, 1e-18);
  EXPECT_NEAR(merge_scores({0.4, 0.9}, MergeMode::arithmetic), 0.65, 1e-15);
  EXPECT_THROW(merge_scores({}, MergeMode::geometric), ValidationError);
}

TEST(Merge, BoundsAndMeanInequality) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(1 + rng.uniform_index(6));
    for (double& x : v) x = rng.bernoulli(0.1) ? 0.0 : rng.uniform();
    const double g = merge_scores(v, MergeMode::geometric);
    const double a = merge_scores(v, MergeMode::arithmetic);
    EXPECT_GE(g, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(g, *std::max_element(v.begin(), v.end()));
    EXPECT_LE(g, a + 1e-15);
  }
}

TEST(MergeModeText, RoundTrip) {
  EXPECT_EQ(parse_merge_mode("geometric"), MergeMode::geometric);
  EXPECT_EQ(to_string(MergeMode::arithmetic), "arithmetic");
  EXPECT_THROW(parse_merge_mode("median"), Error);
}

TEST(Transforms, Geometry) {
  Rng rng(2);
  const auto image = testing::random_image(8, 8, rng);
  Transform flip{Transform::Kind::horizontal_flip};
  const auto f = apply_transform(flip, image, 8, 8, 0);
  EXPECT_EQ(f.at(3, 0, 1), image.at(3, 7, 1));
  const auto same = apply_transform(Transform{}, image, 8, 8, 0);
  EXPECT_TRUE(std::equal(same.data().begin(), same.data().end(), image.data().begin()));
  Transform crop{Transform::Kind::center_crop, 0.5};
  const auto c = apply_transform(crop, image, 8, 8, 0);
  EXPECT_EQ(c.height(), 8);
  EXPECT_EQ(c.width(), 8);
  Transform rc{Transform::Kind::random_crop, 0.75, false, 9};
  const auto r1 = apply_transform(rc, image, 8, 8, 3);
  const auto r2 = apply_transform(rc, image, 8, 8, 3);
  EXPECT_TRUE(std::equal(r1.data().begin(), r1.data().end(), r2.data().begin()));
}

TEST(Bank, IdentityBankEqualsPredictBitwise) {
  const auto vocab = letters(4);
  const auto m = testing::tiny_model(vocab, 3);
  const auto data = testing::random_dataset(vocab, 5, 8, 8, 4);
  const auto plain = model::predict(m, data);
  for (int copies : {1, 3}) {
    TransformBank bank;
    bank.transforms.assign(copies, Transform{});
    const auto tta = tta_predict(m, data, bank);
    EXPECT_TRUE(std::equal(tta.scores().data().begin(), tta.scores().data().end(), plain.scores().data().begin()));
  }
}

TEST(Bank, DefaultBankWithinPerTransformBounds) {
  const auto vocab = letters(3);
  const auto m = testing::tiny_model(vocab, 3);
  const auto data = testing::random_dataset(vocab, 4, 8, 8, 5);
  const auto bank = TransformBank::default_bank();
  ASSERT_EQ(bank.transforms.size(), 4u);
  const auto merged = tta_predict(m, data, bank);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::vector<double>> per(3);
    for (const auto& t : bank.transforms) {
      const auto z = m.logits(apply_transform(t, data[i].image, 8, 8, i));
      for (std::size_t c = 0; c < 3; ++c) per[c].push_back(model::sigmoid(z[c]));
    }
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_GE(merged.scores()(i, c), *std::min_element(per[c].begin(), per[c].end()));
      EXPECT_LE(merged.scores()(i, c), *std::max_element(per[c].begin(), per[c].end()));
    }
  }
}

TEST(Bank, WrongImageSizeThrows) {
  const auto vocab = letters(2);
  const auto m = testing::tiny_model(vocab);
  const auto data = testing::random_dataset(vocab, 2, 16, 16, 1);
  EXPECT_THROW(tta_predict(m, data, TransformBank::identity_bank()), ValidationError);
}

TEST(Bank, JsonRoundTripAndErrors) {
  const auto bank = TransformBank::default_bank();
  const auto back = TransformBank::from_json(bank.to_json());
  EXPECT_EQ(back.to_json(), bank.to_json());

  auto expect_pointer = [](const std::string& text, const std::string& pointer) {
    try {
      TransformBank::from_json(nlohmann::json::parse(text));
      ADD_FAILURE() << "accepted " << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.pointer(), pointer) << text;
    }
  };
  expect_pointer(R"({"transforms":[]})", "/transforms");
  expect_pointer(R"({"transforms":[{"type":"spin"}]})", "/transforms/0/type");
  expect_pointer(R"({"transforms":[{"type":"identity"},{"type":"center_crop","fraction":1.5}]})",
                 "/transforms/1/fraction");
  expect_pointer(R"({"transforms":[{"type":"identity","extra":1}]})", "/transforms/0/extra");
  expect_pointer(R"({"transforms":[{"type":"identity"}],"merge":"max"})", "/merge");
}

TEST(Bank, ReadFromFile) {
  testing::TempDir dir;
  std::ofstream(dir.file("b.json")) << R"({"transforms":[{"type":"hflip"},{"type":"random_crop","fraction":0.8,"seed":5}],"merge":"arithmetic"})";
  const auto bank = read_transform_bank(dir.file("b.json"));
  ASSERT_EQ(bank.transforms.size(), 2u);
  EXPECT_EQ(bank.transforms[1].kind, Transform::Kind::random_crop);
  EXPECT_EQ(bank.transforms[1].seed, 5u);
  EXPECT_EQ(bank.merge, MergeMode::arithmetic);
  EXPECT_THROW(read_transform_bank(dir.file("missing.json")), Error);
}

PredictionMatrix make(const ClassVocabulary& vocab, const std::vector<std::string>& ids, const Matrix& m) {
  return PredictionMatrix(vocab, ids, m);
}

TEST(ModelWise, MeanAndErrors) {
  const auto vocab = letters(1);
  const std::vector<std::string> ids{"x"};
  const auto a = make(vocab, ids, Matrix(1, 1, 0.2)), b = make(vocab, ids, Matrix(1, 1, 0.4));
  EXPECT_NEAR(model_wise_ensemble({a, b}).scores()(0, 0), 0.3, 1e-16);
  EXPECT_EQ(model_wise_ensemble({a}).scores()(0, 0), 0.2);
  EXPECT_THROW(model_wise_ensemble({}), ValidationError);
  EXPECT_THROW(model_wise_ensemble({a, make(vocab, {"y"}, Matrix(1, 1, 0.4))}), ValidationError);
  EXPECT_THROW(model_wise_ensemble({a, make(letters(2), ids, Matrix(1, 2, 0.4))}), ValidationError);
}

LabeledDataset two_class_dev() {
  const auto vocab = letters(2);
  LabeledDataset dev(vocab);
  const std::vector<std::vector<double>> y{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
  for (std::size_t i = 0; i < y.size(); ++i) dev.add(Example{"d" + std::to_string(i), ImageTensor(1, 1), y[i]});
  return dev;
}

TEST(ClassWise, PicksBestModelPerClass) {
  const auto dev = two_class_dev();
  const auto vocab = dev.vocabulary();
  const auto ids = dev.image_ids();
  Matrix d0(4, 2), d1(4, 2);
  // Model 0 ranks class a perfectly and class b backwards; model 1 the reverse.
  const double good_a[] = {0.9, 0.1, 0.8, 0.2}, bad_a[] = {0.1, 0.9, 0.2, 0.8};
  const double good_b[] = {0.1, 0.9, 0.8, 0.2}, bad_b[] = {0.9, 0.1, 0.2, 0.8};
  for (int i = 0; i < 4; ++i) {
    d0(i, 0) = good_a[i], d0(i, 1) = bad_b[i];
    d1(i, 0) = bad_a[i], d1(i, 1) = good_b[i];
  }
  const std::vector<std::string> test_ids{"t0", "t1"};
  Matrix t0(2, 2, 0.25), t1(2, 2, 0.75);
  const auto r = class_wise_ensemble({make(vocab, ids, d0), make(vocab, ids, d1)}, dev,
                                     {make(vocab, test_ids, t0), make(vocab, test_ids, t1)}, 1);
  EXPECT_EQ(r.selected, (std::vector<std::vector<std::size_t>>{{0}, {1}}));
  EXPECT_EQ(r.predictions.scores()(0, 0), 0.25);
  EXPECT_EQ(r.predictions.scores()(1, 1), 0.75);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.predictions.image_ids(), test_ids);
}

std::vector<PredictionMatrix> random_models(const LabeledDataset& data, std::size_t n, Rng& rng) {
  std::vector<PredictionMatrix> out;
  for (std::size_t m = 0; m < n; ++m) {
    Matrix s(data.size(), data.vocabulary().size());
    for (double& v : s.data()) v = std::round(rng.uniform() * 10) / 10;
    out.emplace_back(data.vocabulary(), data.image_ids(), s);
  }
  return out;
}

TEST(ClassWise, AllModelsEqualsModelWiseBitwise) {
  Rng rng(6);
  const auto vocab = letters(5);
  const auto dev = testing::random_dataset(vocab, 12, 1, 1, 7);
  const auto test = testing::random_dataset(vocab, 9, 1, 1, 8, "t");
  for (std::size_t n : {1u, 2u, 4u}) {
    const auto dp = random_models(dev, n, rng);
    const auto tp = random_models(test, n, rng);
    const auto cw = class_wise_ensemble(dp, dev, tp, n).predictions.scores();
    const auto mw = model_wise_ensemble(tp).scores();
    EXPECT_TRUE(std::equal(cw.data().begin(), cw.data().end(), mw.data().begin()));
  }
}

TEST(ClassWise, TopOneDominatesOnDev) {
  Rng rng(9);
  const auto vocab = letters(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto dev = testing::random_dataset(vocab, 15, 1, 1, 100 + trial);
    const auto dp = random_models(dev, 3, rng);
    const auto r = class_wise_ensemble(dp, dev, dp, 1);
    const auto ens = evaluation::mean_average_precision(r.predictions, dev);
    double best_single = 0;
    for (std::size_t m = 0; m < 3; ++m) {
      const auto single = evaluation::mean_average_precision(dp[m], dev);
      best_single = std::max(best_single, single.map);
      for (std::size_t c = 0; c < 4; ++c) EXPECT_LE(*single.per_class_ap[c], *ens.per_class_ap[c] + 1e-12);
    }
    EXPECT_GE(ens.map + 1e-12, best_single);
  }
}

TEST(ClassWise, NoDevPositivesFallsBackWithWarning) {
  const auto vocab = letters(2);
  LabeledDataset dev(vocab);
  dev.add(Example{"d0", ImageTensor(1, 1), {1, 0}});
  dev.add(Example{"d1", ImageTensor(1, 1), {0, 0}});
  Matrix worse(2, 2, 0.5), better(2, 2, 0.5);
  better(0, 0) = 0.9;
  const auto ids = dev.image_ids();
  const std::vector<PredictionMatrix> dp{make(vocab, ids, worse), make(vocab, ids, better)};
  const auto r = class_wise_ensemble(dp, dev, dp, 1);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("b"), std::string::npos);
  EXPECT_EQ(r.selected[1], (std::vector<std::size_t>{1}));
  EXPECT_EQ(top_models_by_map(dp, dev, 1), (std::vector<std::size_t>{1}));
}

TEST(ClassWise, Errors) {
  const auto dev = two_class_dev();
  Rng rng(1);
  const auto dp = random_models(dev, 2, rng);
  EXPECT_THROW(class_wise_ensemble(dp, dev, dp, 0), ValidationError);
  EXPECT_THROW(class_wise_ensemble(dp, dev, dp, 3), ValidationError);
  EXPECT_THROW(class_wise_ensemble(dp, dev, {dp[0]}, 1), ValidationError);
}

}  // namespace
}  // namespace ltmlc::inference
