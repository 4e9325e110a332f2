#include <cmath>
#include <fstream>

#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"
#include "oracles/ap_oracle.hpp"
#include "support.hpp"

namespace ltmlc::evaluation {
namespace {

using V = std::vector<double>;

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(*average_precision(V{0.9, 0.8, 0.7}, V{1, 0, 1}), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
  EXPECT_EQ(*average_precision(V{0.1, 0.7, 0.3}, V{1, 1, 1}), 1.0);
  EXPECT_EQ(*average_precision(V{0.9, 0.1}, V{0, 1}), 0.5);
}

TEST(AveragePrecision, TiesEnterTogether) {
  // One cutoff retrieves everything: precision 1/2 at recall 1.
  EXPECT_EQ(*average_precision(V{0.5, 0.5}, V{1, 0}), 0.5);
  EXPECT_EQ(*average_precision(V{0.5, 0.5}, V{0, 1}), 0.5);
}

TEST(AveragePrecision, UndefinedWithoutPositives) {
  EXPECT_FALSE(average_precision(V{0.2, 0.4}, V{0, 0}).has_value());
}

TEST(AveragePrecision, Errors) {
  EXPECT_THROW(average_precision(V{}, V{}), ValidationError);
  EXPECT_THROW(average_precision(V{0.1}, V{1, 0}), ValidationError);
}

struct Instance {
  V scores, labels;
};

Instance random_instance(Rng& rng, std::size_t n, int levels) {
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    in.scores.push_back(static_cast<double>(rng.uniform_index(levels)) / levels);
    in.labels.push_back(rng.bernoulli(0.4) ? 1.0 : 0.0);
  }
  return in;
}

TEST(AveragePrecision, MatchesThresholdSweepOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto in = random_instance(rng, 1 + rng.uniform_index(12), 1 + static_cast<int>(rng.uniform_index(6)));
    const auto got = average_precision(in.scores, in.labels);
    const auto want = oracle::threshold_sweep_ap(in.scores, in.labels);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (got) {
      EXPECT_NEAR(*got, *want, 1e-12);
    }
  }
}

TEST(AveragePrecision, DistinctScoresMatchRankedList) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Instance in;
    const std::size_t n = 2 + rng.uniform_index(11);
    for (std::size_t i = 0; i < n; ++i) {
      in.scores.push_back(rng.uniform());
      in.labels.push_back(i == 0 ? 1.0 : (rng.bernoulli(0.5) ? 1.0 : 0.0));
    }
    EXPECT_NEAR(*average_precision(in.scores, in.labels), oracle::ranked_list_ap(in.scores, in.labels), 1e-12);
  }
}

TEST(AveragePrecision, InvariantUnderMonotoneTransformAndPermutation) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng, 10, 5);
    const auto base = average_precision(in.scores, in.labels);
    if (!base) continue;
    V transformed;
    for (double s : in.scores) transformed.push_back(std::exp(3.0 * s) - 7.0);
    EXPECT_NEAR(*average_precision(transformed, in.labels), *base, 1e-12);
    const auto perm = rng.permutation(in.scores.size());
    V ps, pl;
    for (std::size_t i : perm) {
      ps.push_back(in.scores[i]);
      pl.push_back(in.labels[i]);
    }
    EXPECT_NEAR(*average_precision(ps, pl), *base, 1e-12);
  }
}

TEST(AveragePrecision, OneIffPositivesStrictlyOutrankNegatives) {
  EXPECT_EQ(*average_precision(V{0.9, 0.8, 0.3, 0.1}, V{1, 1, 0, 0}), 1.0);
  EXPECT_LT(*average_precision(V{0.9, 0.3, 0.3, 0.1}, V{1, 1, 0, 0}), 1.0);
  EXPECT_LT(*average_precision(V{0.9, 0.2, 0.3, 0.1}, V{1, 1, 0, 0}), 1.0);
}

TEST(MeanAp, ArithmeticMeanAndExclusion) {
  Matrix scores(2, 2), labels(2, 2);
  scores(0, 0) = 0.9, scores(1, 0) = 0.1;
  scores(0, 1) = 0.9, scores(1, 1) = 0.1;
  labels(0, 0) = 1, labels(1, 0) = 0;
  labels(0, 1) = 0, labels(1, 1) = 1;
  const auto r = evaluate_scores(scores, labels);
  EXPECT_EQ(r.map, 0.75);
  EXPECT_TRUE(r.excluded.empty());

  Matrix l2(2, 2);
  l2(1, 1) = 1;
  const auto r2 = evaluate_scores(scores, l2);
  EXPECT_EQ(r2.excluded, (std::vector<std::size_t>{0}));
  EXPECT_FALSE(r2.per_class_ap[0].has_value());
  EXPECT_EQ(r2.map, 0.5);
  EXPECT_EQ(r2.positives, (std::vector<std::size_t>{0, 1}));
}

TEST(MeanAp, NoPositivesAnywhereThrows) {
  EXPECT_THROW(evaluate_scores(Matrix(3, 2, 0.5), Matrix(3, 2, 0.0)), ValidationError);
}

TEST(MeanAp, ColumnwiseOracle) {
  Rng rng(14);
  const auto vocab = testing::letters(4);
  const auto data = testing::random_dataset(vocab, 20, 2, 2, 3);
  Matrix scores(20, 4);
  for (double& v : scores.data()) v = std::round(rng.uniform() * 8) / 8;
  const PredictionMatrix pm(vocab, data.image_ids(), scores);
  const auto r = mean_average_precision(pm, data);
  const auto labels = data.label_matrix();
  double sum = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const auto ap = *oracle::threshold_sweep_ap(scores.column(c), labels.column(c));
    EXPECT_NEAR(*r.per_class_ap[c], ap, 1e-12);
    sum += ap;
  }
  EXPECT_NEAR(r.map, sum / 4, 1e-12);
}

TEST(MeanAp, AlignmentErrors) {
  const auto vocab = testing::letters(2);
  const auto data = testing::random_dataset(vocab, 3, 2, 2, 3);
  auto ids = data.image_ids();
  std::swap(ids[0], ids[1]);
  EXPECT_THROW(mean_average_precision(PredictionMatrix(vocab, ids, Matrix(3, 2, 0.5)), data), ValidationError);
  EXPECT_THROW(mean_average_precision(PredictionMatrix(testing::letters(3), data.image_ids(), Matrix(3, 3, 0.5)), data),
               ValidationError);
}

TEST(Baseline, Prevalence) {
  Matrix labels(50, 2);
  for (int i = 0; i < 5; ++i) labels(i, 0) = 1;
  for (int i = 0; i < 50; ++i) labels(i, 1) = 1;
  const auto r = prevalence_baseline(labels);
  EXPECT_DOUBLE_EQ(*r.per_class_ap[0], 0.1);
  EXPECT_EQ(*r.per_class_ap[1], 1.0);
  EXPECT_DOUBLE_EQ(r.map, 0.55);

  Matrix balanced(4, 2);
  balanced(0, 0) = balanced(1, 0) = 1;
  balanced(2, 1) = 1;
  EXPECT_DOUBLE_EQ(prevalence_baseline(balanced).map, (0.5 + 0.25) / 2);
  EXPECT_THROW(prevalence_baseline(Matrix(3, 2)), ValidationError);
}

TEST(Report, RoundTrip) {
  testing::TempDir dir;
  const auto vocab = testing::letters(3);
  EvalReport r;
  r.per_class_ap = {0.125, std::nullopt, 1.0 / 3.0};
  r.positives = {4, 0, 2};
  r.excluded = {1};
  r.map = (0.125 + 1.0 / 3.0) / 2;
  write_report(r, vocab, dir.file("r.csv"));
  std::ifstream in(dir.file("r.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "class,ap,positives");
  std::getline(in, line);
  EXPECT_EQ(line, "a,0.125,4");
  std::getline(in, line);
  EXPECT_EQ(line, "b,,0");
  const auto back = read_report(dir.file("r.csv"), vocab);
  EXPECT_EQ(back.per_class_ap, r.per_class_ap);
  EXPECT_EQ(back.positives, r.positives);
  EXPECT_EQ(back.excluded, r.excluded);
  EXPECT_EQ(back.map, r.map);
  const auto values = ap_values(back);
  EXPECT_TRUE(std::isnan(values[1]));
  EXPECT_THROW(read_report(dir.file("r.csv"), testing::letters(2)), Error);
}

}  // namespace
}  // namespace ltmlc::evaluation
