#include "ltmlc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "ltmlc/csv.hpp"
#include "ltmlc/datapipe.hpp"
#include "ltmlc/error.hpp"
#include "ltmlc/evaluation.hpp"

namespace ltmlc::training {
namespace {

constexpr std::size_t kGradientLanes = 8;
constexpr std::uint64_t kShuffleStream = 0x73687566666c65;
constexpr std::uint64_t kMixupStream = 0x6d69787570;

void check_weights(std::span<const double> w) {
  if (w.empty()) throw ValidationError("class weights are empty");
  bool any_positive = false;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("class weights must be finite and non-negative");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw ValidationError("at least one class weight must be positive");
}

/// Fixed-lane batch gradient: example i goes to lane i % lanes, each lane sums
/// its examples in order, lanes are added in index order.
class BatchGradient {
 public:
  explicit BatchGradient(const model::QueryModel& model) : model_(model) {}

  double run(const std::vector<const ImageTensor*>& images, const std::vector<std::vector<double>>& labels,
             const ClassWeights& weights, std::span<double> grad) {
    const std::size_t batch = images.size();
    if (batch == 0) throw ValidationError("empty batch");
    if (labels.size() != batch) throw ValidationError("image and label counts differ");
    if (weights.size() != model_.num_classes()) throw ValidationError("class weight count differs from vocabulary");
    if (grad.size() != model_.parameters().size()) throw ValidationError("gradient buffer has the wrong size");
    for (const auto& y : labels) {
      if (y.size() != model_.num_classes()) throw ValidationError("label vector length differs from vocabulary");
    }

    const std::size_t lanes = std::min(kGradientLanes, batch);
    while (lane_grads_.size() < lanes) {
      lane_grads_.emplace_back(grad.size());
      workspaces_.push_back(model_.make_workspace());
    }
    std::vector<double> lane_loss(lanes, 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 1)
    for (long lane = 0; lane < static_cast<long>(lanes); ++lane) {
      try {
        auto& g = lane_grads_[lane];
        std::fill(g.begin(), g.end(), 0.0);
        std::vector<double> dlogits(model_.num_classes());
        double loss = 0.0;
        for (std::size_t i = static_cast<std::size_t>(lane); i < batch; i += lanes) {
          const auto z = model_.forward(*images[i], *workspaces_[lane]);
          for (std::size_t c = 0; c < z.size(); ++c) {
            loss += weights[c] * bce_with_logit(z[c], labels[i][c]);
            dlogits[c] = bce_gradient(z[c], labels[i][c], weights[c]) * inv_batch;
          }
          model_.backward(dlogits, *workspaces_[lane], g);
        }
        lane_loss[lane] = loss;
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    std::copy(lane_grads_[0].begin(), lane_grads_[0].end(), grad.begin());
    for (std::size_t lane = 1; lane < lanes; ++lane) {
      const auto& g = lane_grads_[lane];
      for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g[p];
    }
    double total = 0.0;
    for (double l : lane_loss) total += l;
    return total * inv_batch;
  }

 private:
  const model::QueryModel& model_;
  std::vector<std::vector<double>> lane_grads_;
  std::vector<std::unique_ptr<model::Workspace>> workspaces_;
};

}  // namespace

ClassWeights::ClassWeights(std::size_t num_classes) : w_(num_classes, 1.0) {
  if (num_classes == 0) throw ValidationError("class weights are empty");
}

ClassWeights::ClassWeights(std::vector<double> weights) : w_(std::move(weights)) { check_weights(w_); }

ClassWeights ClassWeights::upweighted(std::size_t num_classes, const std::vector<std::size_t>& classes,
                                      double factor) {
  std::vector<double> w(num_classes, 1.0);
  for (std::size_t c : classes) {
    if (c >= num_classes) throw ValidationError("upweighted class index out of range");
    w[c] = factor;
  }
  return ClassWeights(std::move(w));
}

ClassWeights read_class_weights(const std::string& path, const ClassVocabulary& vocab) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != csv::Row{"class", "weight"}) {
    throw ValidationError("class weight file '" + path + "' must have header class,weight");
  }
  std::vector<double> w(vocab.size(), 1.0);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw ParseError("row " + std::to_string(r + 1) + " of '" + path + "' needs 2 fields");
    w[vocab.index(rows[r][0])] = csv::parse_real(rows[r][1], "weight on row " + std::to_string(r + 1));
  }
  return ClassWeights(std::move(w));
}

double bce_with_logit(double logit, double label) noexcept {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

double bce_gradient(double logit, double label, double weight) noexcept {
  return weight * (model::sigmoid(logit) - label);
}

double weighted_bce_loss(const Matrix& logits, const Matrix& labels, const ClassWeights& weights) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw ValidationError("logit and label shapes differ");
  }
  if (logits.cols() != weights.size()) throw ValidationError("class weight count differs from label columns");
  if (logits.rows() == 0) throw ValidationError("loss of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double z = logits(i, c);
      if (!std::isfinite(z)) {
        throw ValidationError("non-finite logit at row " + std::to_string(i) + ", class " + std::to_string(c));
      }
      total += weights[c] * bce_with_logit(z, labels(i, c));
    }
  }
  return total / static_cast<double>(logits.rows());
}

std::vector<std::size_t> select_upweight_classes(std::span<const double> per_class_ap, int k) {
  if (k < 0) throw ValidationError("upweight count must be non-negative");
  if (static_cast<std::size_t>(k) > per_class_ap.size()) {
    throw ValidationError("upweight count exceeds the number of classes");
  }
  std::vector<std::size_t> order(per_class_ap.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double x = per_class_ap[a], y = per_class_ap[b];
    if (std::isnan(x) || std::isnan(y)) return !std::isnan(x) && std::isnan(y);
    return x < y;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

MixupResult mixup_batch(const std::vector<ImageTensor>& images, const std::vector<std::vector<double>>& labels,
                        double alpha, Rng& rng) {
  if (images.empty()) throw ValidationError("MixUp needs a non-empty batch");
  if (images.size() != labels.size()) throw ValidationError("image and label counts differ");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("MixUp alpha must be finite and >= 0");
  MixupResult out;
  out.partner.resize(images.size());
  if (alpha == 0.0) {
    out.lambda = 1.0;
    std::iota(out.partner.begin(), out.partner.end(), std::size_t{0});
    out.images = images;
    out.labels = labels;
    return out;
  }
  out.lambda = rng.beta(alpha, alpha);
  out.partner = rng.permutation(images.size());
  const double lam = out.lambda;
  out.images.reserve(images.size());
  out.labels.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& a = images[i];
    const auto& b = images[out.partner[i]];
    if (a.height() != b.height() || a.width() != b.width()) throw ValidationError("MixUp images differ in shape");
    ImageTensor mixed(a.height(), a.width());
    auto dst = mixed.data();
    const auto xa = a.data(), xb = b.data();
    for (std::size_t p = 0; p < dst.size(); ++p) {
      dst[p] = static_cast<float>(std::clamp(lam * xa[p] + (1.0 - lam) * xb[p], 0.0, 1.0));
    }
    out.images.push_back(std::move(mixed));
    const auto& ya = labels[i];
    const auto& yb = labels[out.partner[i]];
    if (ya.size() != yb.size()) throw ValidationError("MixUp label vectors differ in length");
    std::vector<double> y(ya.size());
    for (std::size_t c = 0; c < y.size(); ++c) y[c] = std::clamp(lam * ya[c] + (1.0 - lam) * yb[c], 0.0, 1.0);
    out.labels.push_back(std::move(y));
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs > epochs) throw ValidationError("warmup_epochs must be in [0, epochs]");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ValidationError("base_lr must be > 0");
  if (!(warmup_lr > 0.0) || !std::isfinite(warmup_lr)) throw ValidationError("warmup_lr must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(mixup_alpha >= 0.0) || !std::isfinite(mixup_alpha)) throw ValidationError("mixup_alpha must be >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ValidationError("weight_decay must be >= 0");
  if (!class_weights.empty()) check_weights(class_weights);
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  }
  if (epoch < config.warmup_epochs) {
    return config.warmup_lr +
           (config.base_lr - config.warmup_lr) * static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
  }
  const double progress = static_cast<double>(epoch - config.warmup_epochs) /
                          static_cast<double>(config.epochs - config.warmup_epochs);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::size_t size, AdamWConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("AdamW size mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
    params[i] = params[i] * decay - lr * update;
  }
}

void write_history(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write history '" + path + "'");
  out << "epoch,lr,train_loss,dev_mAP\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << csv::format_real(r.lr) << ',' << csv::format_real(r.train_loss) << ','
        << csv::format_real(r.dev_map) << '\n';
  }
}

double batch_loss_and_gradient(const model::QueryModel& model, const std::vector<const ImageTensor*>& images,
                               const std::vector<std::vector<double>>& labels, const ClassWeights& weights,
                               std::span<double> grad) {
  BatchGradient engine(model);
  return engine.run(images, labels, weights, grad);
}

TrainResult train(model::QueryModel model, const LabeledDataset& train_set, const LabeledDataset& dev_set,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (!(train_set.vocabulary() == model.vocabulary()) || !(dev_set.vocabulary() == model.vocabulary())) {
    throw ValidationError("model, training and development vocabularies differ");
  }
  if (config.epochs > 0 && train_set.empty()) throw ValidationError("training set is empty");
  if (options.augmentation) options.augmentation->validate();
  const ClassWeights weights =
      config.class_weights.empty() ? ClassWeights(model.num_classes()) : ClassWeights(config.class_weights);
  if (weights.size() != model.num_classes()) throw ValidationError("class weight count differs from vocabulary");

  const std::size_t n = train_set.size();
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  AdamW optimizer(model.parameters().size(), AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay});
  Rng shuffle_rng = Rng::stream(config.seed, kShuffleStream);
  Rng mixup_rng = Rng::stream(config.seed, kMixupStream);
  BatchGradient engine(model);
  std::vector<double> grad(model.parameters().size());

  std::vector<double> best(model.parameters().begin(), model.parameters().end());
  double best_map = -std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;
  int best_epoch = -1;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    const auto order = shuffle_rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + batch_size);
      std::vector<ImageTensor> owned;
      std::vector<const ImageTensor*> images;
      std::vector<std::vector<double>> labels;
      const bool augmenting = options.augmentation && options.augmentation->any();
      const bool mixing = config.mixup_alpha > 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Example& e = train_set[order[k]];
        labels.push_back(e.labels);
        if (augmenting) {
          Rng rng = datapipe::augmentation_stream(*options.augmentation, static_cast<std::uint64_t>(epoch), order[k]);
          owned.push_back(datapipe::augment(e.image, *options.augmentation, rng));
        } else if (mixing) {
          owned.push_back(e.image);
        } else {
          images.push_back(&e.image);
        }
      }
      if (mixing) {
        auto mixed = mixup_batch(owned, labels, config.mixup_alpha, mixup_rng);
        owned = std::move(mixed.images);
        labels = std::move(mixed.labels);
      }
      if (!owned.empty()) {
        images.clear();
        for (const auto& image : owned) images.push_back(&image);
      }
      const double loss = engine.run(images, labels, weights, grad);
      if (!std::isfinite(loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_index));
      }
      loss_sum += loss * static_cast<double>(end - start);
      optimizer.step(model.parameters(), grad, lr);
    }

    const auto dev_predictions = model::predict(model, dev_set);
    const double dev_map = evaluation::mean_average_precision(dev_predictions, dev_set).map;
    EpochRecord record{epoch, lr, loss_sum / static_cast<double>(n), dev_map};
    history.push_back(record);
    if (dev_map > best_map) {
      best_map = dev_map;
      best_epoch = epoch;
      std::copy(model.parameters().begin(), model.parameters().end(), best.begin());
    }
    if (options.on_epoch) options.on_epoch(record);
  }

  std::copy(best.begin(), best.end(), model.parameters().begin());
  model.round_parameters_to_f32();
  ModelCheckpoint checkpoint = model.to_checkpoint(options.run_config);
  return TrainResult{std::move(model), std::move(checkpoint), std::move(history), best_epoch};
}

}  // namespace ltmlc::training
