#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ltmlc/checkpoint.hpp"
#include "ltmlc/dataset.hpp"
#include "ltmlc/layers.hpp"
#include "ltmlc/predictions.hpp"
#include "ltmlc/tensor.hpp"
#include "ltmlc/vocabulary.hpp"

namespace ltmlc::model {

enum class HeadMode { separate, shared };

HeadMode parse_head_mode(std::string_view text);
std::string to_string(HeadMode mode);

struct ModelConfig {
  int d = 64;
  int num_layers = 4;
  int num_heads = 4;
  HeadMode head_mode = HeadMode::separate;
  std::vector<int> encoder_channels{16, 32, 64};
  int image_height = 64;
  int image_width = 64;

  int ffn_hidden() const noexcept { return 4 * d; }
  /// Throws ValidationError.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Deterministic stand-in for a pretrained text encoder: FNV-1a of the UTF-8
/// name seeds SplitMix64, Box-Muller turns the stream into normals, and the
/// first `d` of them are L2-normalized.
std::vector<double> synthetic_class_embedding(std::string_view name, int d);
/// |vocab| x d table of synthetic_class_embedding rows.
Matrix synthetic_embedding_table(const ClassVocabulary& vocab, int d);
/// CSV "class,v0,...,v{d-1}"; rows reordered to the vocabulary, used as-is.
Matrix read_embedding_csv(const std::string& path, const ClassVocabulary& vocab, int d);

/// h x w x d visual features.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<double> data;
};

struct ParamSpec {
  std::string name;
  std::vector<std::int64_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class Workspace;

/// Label-query classifier: a convolutional image encoder, a frozen class
/// embedding table used as decoder queries, a stack of pre-norm transformer
/// decoder layers (query self-attention, cross-attention onto image tokens,
/// GELU feed-forward) and one scalar head per class (or one shared head).
///
/// All trainable parameters live in one flat vector addressed by ParamSpec,
/// so optimizers and gradient checks can work on spans.
class QueryModel {
 public:
  /// Parameters are initialized from `seed`; embeddings are rounded to float32.
  QueryModel(ModelConfig config, ClassVocabulary vocabulary, Matrix embeddings, std::uint64_t seed);

  static QueryModel from_checkpoint(const ModelCheckpoint& checkpoint);
  /// Every parameter plus the embedding table, as float32. `run_config` is stored verbatim.
  ModelCheckpoint to_checkpoint(const nlohmann::json& run_config) const;

  const ModelConfig& config() const noexcept { return config_; }
  const ClassVocabulary& vocabulary() const noexcept { return vocabulary_; }
  std::size_t num_classes() const noexcept { return vocabulary_.size(); }
  const Matrix& embeddings() const noexcept { return embeddings_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  const std::vector<ParamSpec>& parameter_specs() const noexcept { return specs_; }
  const ParamSpec& spec(std::string_view name) const;
  std::span<double> parameter(std::string_view name);
  std::span<const double> parameter(std::string_view name) const;

  /// Rounds every parameter to the nearest float32, matching what a checkpoint stores.
  void round_parameters_to_f32();

  std::unique_ptr<Workspace> make_workspace() const;

  /// Three stride-2 convolutions with ReLU, then a 1x1 projection: (H/8) x (W/8) x d.
  FeatureMap encode_image(const ImageTensor& image, Workspace& ws) const;
  /// Adds fixed 2-D sinusoidal positions to the image tokens, then runs the
  /// decoder stack and heads. `embeddings` must be |vocab| x d.
  std::vector<double> query_forward(const FeatureMap& features, const Matrix& embeddings, Workspace& ws) const;
  /// encode_image followed by query_forward with the model's own table; caches activations in `ws`.
  std::vector<double> forward(const ImageTensor& image, Workspace& ws) const;
  /// Accumulates d(sum_c dlogits[c] * logit_c)/d(parameters) into `grad`, using the
  /// activations cached by the last forward() on `ws`.
  void backward(std::span<const double> dlogits, Workspace& ws, std::span<double> grad) const;

  std::vector<double> logits(const ImageTensor& image) const;

 private:
  struct Layout;

  void build_layout();
  void initialize(std::uint64_t seed);
  void check_image(const ImageTensor& image) const;

  ModelConfig config_;
  ClassVocabulary vocabulary_;
  Matrix embeddings_;
  std::vector<ParamSpec> specs_;
  std::vector<double> params_;
  std::shared_ptr<const Layout> layout_;
  std::vector<double> positional_;  // tokens x d, fixed sinusoidal
};

/// Activation caches and gradient scratch for one example at a time.
class Workspace {
 public:
  ~Workspace();

 private:
  friend class QueryModel;
  Workspace();

  struct Encoder;
  struct Layer;
  std::unique_ptr<Encoder> encoder;
  std::vector<Layer> layers;
  std::vector<double> memory;  // image tokens seen by the last query_forward
  std::vector<double> final_in, final_out, logits;
  layers::LayerNormCache final_norm;
  // backward scratch
  std::vector<double> dq, dn, dtokens, dffn;
  layers::AttentionScratch attention_scratch;
};

/// sigmoid(logits) for every dataset example, rows in dataset order.
/// Throws ValidationError when the vocabularies differ.
PredictionMatrix predict(const QueryModel& model, const LabeledDataset& dataset);
PredictionMatrix predict(const QueryModel& model, const std::vector<std::string>& image_ids,
                         const std::vector<ImageTensor>& images);

double sigmoid(double z) noexcept;

}  // namespace ltmlc::model
