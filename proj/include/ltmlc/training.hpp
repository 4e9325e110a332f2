#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltmlc/checkpoint.hpp"
#include "ltmlc/dataset.hpp"
#include "ltmlc/model.hpp"
#include "ltmlc/rng.hpp"
#include "ltmlc/tensor.hpp"

namespace ltmlc {
namespace datapipe {
struct AugmentationConfig;
}

namespace training {

/// Per-class loss multipliers; entries finite and >= 0 with at least one positive.
class ClassWeights {
 public:
  /// All ones.
  explicit ClassWeights(std::size_t num_classes);
  explicit ClassWeights(std::vector<double> weights);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t c) const { return w_[c]; }
  std::span<const double> values() const noexcept { return w_; }

  /// `factor` on each listed class, 1 elsewhere.
  static ClassWeights upweighted(std::size_t num_classes, const std::vector<std::size_t>& classes, double factor);

 private:
  std::vector<double> w_;
};

/// Per-class CSV "class,weight"; classes not listed keep weight 1.
ClassWeights read_class_weights(const std::string& path, const ClassVocabulary& vocab);

/// Binary cross-entropy of one logit, -y log s(z) - (1-y) log(1 - s(z)), in the
/// overflow-free form max(z,0) - z y + log1p(exp(-|z|)).
double bce_with_logit(double logit, double label) noexcept;

/// (1/N) sum_i sum_c w_c * bce(z_ic, y_ic). Throws ValidationError on shape
/// mismatch or a non-finite logit.
double weighted_bce_loss(const Matrix& logits, const Matrix& labels, const ClassWeights& weights);

/// d/dz of w * bce(z, y) = w * (sigmoid(z) - y).
double bce_gradient(double logit, double label, double weight) noexcept;

/// Indices of the k smallest entries, ties to the lower index. Undefined
/// entries (NaN) rank after every defined one.
std::vector<std::size_t> select_upweight_classes(std::span<const double> per_class_ap, int k);

struct MixupResult {
  std::vector<ImageTensor> images;
  std::vector<std::vector<double>> labels;
  double lambda = 1.0;
  std::vector<std::size_t> partner;
};

/// One lambda ~ Beta(alpha, alpha) per batch (alpha == 0 gives lambda = 1),
/// example i mixed with example partner[i] of a uniform random permutation.
MixupResult mixup_batch(const std::vector<ImageTensor>& images, const std::vector<std::vector<double>>& labels,
                        double alpha, Rng& rng);

struct TrainConfig {
  int epochs = 50;
  int warmup_epochs = 20;
  double base_lr = 5e-5;
  double warmup_lr = 1e-6;
  int batch_size = 32;
  double mixup_alpha = 4.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  /// Empty means all ones.
  std::vector<double> class_weights;

  void validate() const;
};

/// Linear warmup from warmup_lr to base_lr, then half-cosine decay to zero.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay over one flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t size, AdamWConfig config);

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::int64_t steps() const noexcept { return t_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_map = 0.0;
};

void write_history(const std::vector<EpochRecord>& history, const std::string& path);

struct TrainResult {
  /// Parameters of the best dev-mAP epoch (initialization when epochs == 0), rounded to float32.
  model::QueryModel model;
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
  /// -1 when no epoch ran.
  int best_epoch = -1;
};

struct TrainOptions {
  /// Per-example training-time augmentation, applied before MixUp.
  const datapipe::AugmentationConfig* augmentation = nullptr;
  /// Stored verbatim in the checkpoint.
  nlohmann::json run_config = nlohmann::json::object();
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch AdamW over every model parameter; the embedding table is never
/// touched. Throws Error naming the batch if the loss turns non-finite.
TrainResult train(model::QueryModel model, const LabeledDataset& train_set, const LabeledDataset& dev_set,
                  const TrainConfig& config, const TrainOptions& options = {});

/// Loss and gradient of one batch, accumulated with a fixed reduction order so
/// the result does not depend on the OpenMP thread count.
/// Returns (1/B) sum_i sum_c w_c bce_ic and writes its gradient into `grad`.
double batch_loss_and_gradient(const model::QueryModel& model, const std::vector<const ImageTensor*>& images,
                               const std::vector<std::vector<double>>& labels, const ClassWeights& weights,
                               std::span<double> grad);

}  // namespace training
}  // namespace ltmlc
