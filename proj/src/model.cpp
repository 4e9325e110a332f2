#include "ltmlc/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>

#include "ltmlc/csv.hpp"
#include "ltmlc/error.hpp"
#include "ltmlc/kernels.hpp"
#include "ltmlc/rng.hpp"

namespace ltmlc::model {

namespace {

struct LinearRef {
  std::size_t w = 0, b = 0;
  int in = 0, out = 0;
};

struct NormRef {
  std::size_t gain = 0, bias = 0;
};

struct AttentionRef {
  LinearRef q, k, v, o;
};

struct LayerRef {
  NormRef norm1;
  AttentionRef self_attn;
  NormRef norm2;
  AttentionRef cross_attn;
  NormRef norm3;
  LinearRef fc1, fc2;
};

layers::AttentionWeights<const double> attention_view(std::span<const double> p, const AttentionRef& r, int d) {
  const auto dd = static_cast<std::size_t>(d) * d;
  const auto n = static_cast<std::size_t>(d);
  return {p.subspan(r.q.w, dd), p.subspan(r.q.b, n), p.subspan(r.k.w, dd), p.subspan(r.k.b, n),
          p.subspan(r.v.w, dd), p.subspan(r.v.b, n), p.subspan(r.o.w, dd), p.subspan(r.o.b, n)};
}

layers::AttentionWeights<double> attention_view(std::span<double> p, const AttentionRef& r, int d) {
  const auto dd = static_cast<std::size_t>(d) * d;
  const auto n = static_cast<std::size_t>(d);
  return {p.subspan(r.q.w, dd), p.subspan(r.q.b, n), p.subspan(r.k.w, dd), p.subspan(r.k.b, n),
          p.subspan(r.v.w, dd), p.subspan(r.v.b, n), p.subspan(r.o.w, dd), p.subspan(r.o.b, n)};
}

}  // namespace

HeadMode parse_head_mode(std::string_view text) {
  if (text == "separate") return HeadMode::separate;
  if (text == "shared") return HeadMode::shared;
  throw ValidationError("head_mode must be 'separate' or 'shared', got '" + std::string(text) + "'");
}

std::string to_string(HeadMode mode) { return mode == HeadMode::separate ? "separate" : "shared"; }

void ModelConfig::validate() const {
  if (d < 2 || d % 2 != 0) throw ValidationError("model d must be a positive even number");
  if (num_heads < 1 || d % num_heads != 0) throw ValidationError("model d must be divisible by num_heads");
  if (num_layers < 1) throw ValidationError("model needs at least one decoder layer");
  if (encoder_channels.size() != 3) throw ValidationError("encoder_channels must list exactly three widths");
  for (int c : encoder_channels) {
    if (c < 1) throw ValidationError("encoder channel widths must be positive");
  }
  if (image_height < 8 || image_width < 8 || image_height % 8 != 0 || image_width % 8 != 0) {
    throw ValidationError("image height and width must be positive multiples of 8");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"num_layers", num_layers},
          {"num_heads", num_heads},
          {"head_mode", to_string(head_mode)},
          {"encoder_channels", encoder_channels},
          {"image_height", image_height},
          {"image_width", image_width}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.value("d", c.d);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.head_mode = parse_head_mode(j.value("head_mode", to_string(c.head_mode)));
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.image_height = j.value("image_height", c.image_height);
  c.image_width = j.value("image_width", c.image_width);
  return c;
}

std::vector<double> synthetic_class_embedding(std::string_view name, int d) {
  if (d < 1) throw ValidationError("embedding dimension must be at least 1");
  if (name.empty()) throw ValidationError("class name must be non-empty");
  Rng rng(fnv1a64(name.data(), name.size()));
  std::vector<double> v(static_cast<std::size_t>(d));
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

Matrix synthetic_embedding_table(const ClassVocabulary& vocab, int d) {
  Matrix table(vocab.size(), static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    const auto v = synthetic_class_embedding(vocab.name(c), d);
    std::copy(v.begin(), v.end(), table.row(c).begin());
  }
  return table;
}

Matrix read_embedding_csv(const std::string& path, const ClassVocabulary& vocab, int d) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "class") {
    throw ParseError("embedding file '" + path + "' lacks a 'class' header");
  }
  if (rows[0].size() != static_cast<std::size_t>(d) + 1) {
    throw ValidationError("embedding file '" + path + "' has dimension " + std::to_string(rows[0].size() - 1) +
                          ", model expects " + std::to_string(d));
  }
  Matrix table(vocab.size(), static_cast<std::size_t>(d));
  std::vector<bool> seen(vocab.size(), false);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != static_cast<std::size_t>(d) + 1) {
      throw ParseError("line " + std::to_string(r + 1) + " of '" + path + "' has the wrong number of fields");
    }
    if (!vocab.contains(row[0])) continue;
    const auto c = vocab.index(row[0]);
    if (seen[c]) throw ValidationError("class '" + row[0] + "' appears twice in '" + path + "'");
    seen[c] = true;
    for (int j = 0; j < d; ++j) table(c, j) = csv::parse_real(row[j + 1], "line " + std::to_string(r + 1));
  }
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    if (!seen[c]) throw ValidationError("embedding file '" + path + "' has no row for class '" + vocab.name(c) + "'");
  }
  return table;
}

struct QueryModel::Layout {
  std::size_t conv_w[3]{}, conv_b[3]{};
  kernels::ConvShape conv[3]{};
  LinearRef proj;
  std::vector<LayerRef> layers;
  NormRef final_norm;
  std::size_t head_w = 0, head_b = 0;
  int feat_h = 0, feat_w = 0, tokens = 0;
};

struct Workspace::Encoder {
  std::vector<double> input;
  std::vector<double> act[3];
  std::vector<double> dact[3];
  std::vector<double> tokens;
};

struct Workspace::Layer {
  std::vector<double> x0, n1, sa_out, x1, n2, ca_out, x2, n3, ffn_pre, ffn_act, ffn_out;
  layers::LayerNormCache ln1, ln2, ln3;
  layers::AttentionCache sa, ca;
};

Workspace::Workspace() : encoder(std::make_unique<Encoder>()) {}
Workspace::~Workspace() = default;

QueryModel::QueryModel(ModelConfig config, ClassVocabulary vocabulary, Matrix embeddings, std::uint64_t seed)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)), embeddings_(std::move(embeddings)) {
  config_.validate();
  if (embeddings_.rows() != vocabulary_.size() || embeddings_.cols() != static_cast<std::size_t>(config_.d)) {
    throw ValidationError("embedding table must be " + std::to_string(vocabulary_.size()) + " x " +
                          std::to_string(config_.d));
  }
  for (double& v : embeddings_.data()) v = static_cast<double>(static_cast<float>(v));
  build_layout();
  initialize(seed);
}

void QueryModel::build_layout() {
  auto layout = std::make_shared<Layout>();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::int64_t> shape) {
    std::size_t size = 1;
    for (auto s : shape) size *= static_cast<std::size_t>(s);
    specs_.push_back({std::move(name), std::move(shape), offset, size});
    offset += size;
    return specs_.back().offset;
  };
  auto linear = [&](const std::string& prefix, int in, int out) {
    LinearRef r;
    r.in = in;
    r.out = out;
    r.w = add(prefix + ".weight", {in, out});
    r.b = add(prefix + ".bias", {out});
    return r;
  };
  auto norm = [&](const std::string& prefix, int dim) {
    NormRef r;
    r.gain = add(prefix + ".gain", {dim});
    r.bias = add(prefix + ".bias", {dim});
    return r;
  };

  const int d = config_.d;
  int h = config_.image_height, w = config_.image_width, cin = ImageTensor::kChannels;
  for (int k = 0; k < 3; ++k) {
    const int cout = config_.encoder_channels[k];
    const std::string prefix = "encoder.conv" + std::to_string(k + 1);
    layout->conv[k] = {h, w, cin, cout};
    layout->conv_w[k] = add(prefix + ".weight", {3, 3, cin, cout});
    layout->conv_b[k] = add(prefix + ".bias", {cout});
    h /= 2;
    w /= 2;
    cin = cout;
  }
  layout->feat_h = h;
  layout->feat_w = w;
  layout->tokens = h * w;
  layout->proj = linear("encoder.proj", cin, d);

  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    LayerRef r;
    r.norm1 = norm(p + ".norm1", d);
    r.self_attn = {linear(p + ".self_attn.q", d, d), linear(p + ".self_attn.k", d, d),
                   linear(p + ".self_attn.v", d, d), linear(p + ".self_attn.out", d, d)};
    r.norm2 = norm(p + ".norm2", d);
    r.cross_attn = {linear(p + ".cross_attn.q", d, d), linear(p + ".cross_attn.k", d, d),
                    linear(p + ".cross_attn.v", d, d), linear(p + ".cross_attn.out", d, d)};
    r.norm3 = norm(p + ".norm3", d);
    r.fc1 = linear(p + ".ffn.fc1", d, config_.ffn_hidden());
    r.fc2 = linear(p + ".ffn.fc2", config_.ffn_hidden(), d);
    layout->layers.push_back(r);
  }
  layout->final_norm = norm("decoder.final_norm", d);
  const auto heads = static_cast<std::int64_t>(config_.head_mode == HeadMode::separate ? vocabulary_.size() : 1);
  layout->head_w = add("head.weight", {heads, d});
  layout->head_b = add("head.bias", {heads});
  params_.assign(offset, 0.0);
  layout_ = std::move(layout);

  // Fixed 2-D sinusoidal positions: first half of the channels encodes the
  // row, second half the column.
  const int half = d / 2;
  positional_.assign(static_cast<std::size_t>(layout_->tokens) * d, 0.0);
  for (int i = 0; i < layout_->feat_h; ++i) {
    for (int j = 0; j < layout_->feat_w; ++j) {
      double* row = positional_.data() + static_cast<std::size_t>(i * layout_->feat_w + j) * d;
      for (int m = 0; m < half; ++m) {
        const double freq = std::pow(10000.0, -2.0 * (m / 2) / half);
        row[m] = (m % 2 == 0) ? std::sin(i * freq) : std::cos(i * freq);
        row[half + m] = (m % 2 == 0) ? std::sin(j * freq) : std::cos(j * freq);
      }
    }
  }
}

void QueryModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& spec : specs_) {
    auto values = std::span<double>(params_).subspan(spec.offset, spec.size);
    const auto& n = spec.name;
    auto ends_with = [&](std::string_view suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    double stddev = 0.0;
    double fill = 0.0;
    if (ends_with(".gain")) {
      fill = 1.0;
    } else if (ends_with(".weight")) {
      if (n.starts_with("encoder.conv")) {
        const double fan_in = static_cast<double>(spec.shape[0] * spec.shape[1] * spec.shape[2]);
        stddev = std::sqrt(2.0 / fan_in);
      } else if (n.starts_with("head.")) {
        stddev = 1.0 / std::sqrt(static_cast<double>(config_.d));
      } else {
        stddev = std::sqrt(2.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
      }
    }
    for (auto& v : values) v = stddev > 0.0 ? stddev * rng.normal() : fill;
  }
  round_parameters_to_f32();
}

void QueryModel::round_parameters_to_f32() {
  for (double& v : params_) v = static_cast<double>(static_cast<float>(v));
}

const ParamSpec& QueryModel::spec(std::string_view name) const {
  auto it = std::find_if(specs_.begin(), specs_.end(), [&](const ParamSpec& s) { return s.name == name; });
  if (it == specs_.end()) throw ValidationError("model has no parameter '" + std::string(name) + "'");
  return *it;
}

std::span<double> QueryModel::parameter(std::string_view name) {
  const auto& s = spec(name);
  return std::span<double>(params_).subspan(s.offset, s.size);
}

std::span<const double> QueryModel::parameter(std::string_view name) const {
  const auto& s = spec(name);
  return std::span<const double>(params_).subspan(s.offset, s.size);
}

ModelCheckpoint QueryModel::to_checkpoint(const nlohmann::json& run_config) const {
  std::vector<NamedTensor> tensors;
  for (const auto& spec : specs_) {
    NamedTensor t{spec.name, spec.shape, {}};
    t.values.reserve(spec.size);
    for (std::size_t i = 0; i < spec.size; ++i) t.values.push_back(static_cast<float>(params_[spec.offset + i]));
    tensors.push_back(std::move(t));
  }
  NamedTensor table{"embedding.table",
                    {static_cast<std::int64_t>(embeddings_.rows()), static_cast<std::int64_t>(embeddings_.cols())},
                    {}};
  for (double v : embeddings_.data()) table.values.push_back(static_cast<float>(v));
  tensors.push_back(std::move(table));
  nlohmann::json config = run_config.is_object() ? run_config : nlohmann::json::object();
  config["model"] = config_.to_json();
  return ModelCheckpoint{std::move(tensors), std::move(config), vocabulary_};
}

QueryModel QueryModel::from_checkpoint(const ModelCheckpoint& checkpoint) {
  if (!checkpoint.config.contains("model")) throw ValidationError("checkpoint config lacks a 'model' section");
  const auto config = ModelConfig::from_json(checkpoint.config.at("model"));
  const auto& table = checkpoint.tensor("embedding.table");
  if (table.shape.size() != 2 || table.shape[0] != static_cast<std::int64_t>(checkpoint.vocabulary.size()) ||
      table.shape[1] != config.d) {
    throw ValidationError("checkpoint embedding table has the wrong shape");
  }
  Matrix embeddings(checkpoint.vocabulary.size(), static_cast<std::size_t>(config.d));
  std::copy(table.values.begin(), table.values.end(), embeddings.data().begin());
  QueryModel model(config, checkpoint.vocabulary, std::move(embeddings), 0);

  std::size_t matched = 0;
  for (const auto& t : checkpoint.tensors) {
    if (t.name == "embedding.table") continue;
    const auto& spec = model.spec(t.name);
    if (t.shape != spec.shape) throw ValidationError("tensor '" + t.name + "' has the wrong shape");
    std::copy(t.values.begin(), t.values.end(), model.params_.begin() + static_cast<std::ptrdiff_t>(spec.offset));
    ++matched;
  }
  if (matched != model.specs_.size()) throw ValidationError("checkpoint is missing model parameters");
  return model;
}

std::unique_ptr<Workspace> QueryModel::make_workspace() const {
  return std::unique_ptr<Workspace>(new Workspace());
}

void QueryModel::check_image(const ImageTensor& image) const {
  if (image.height() != config_.image_height || image.width() != config_.image_width) {
    throw ValidationError("image is " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          ", model expects " + std::to_string(config_.image_height) + "x" +
                          std::to_string(config_.image_width));
  }
}

FeatureMap QueryModel::encode_image(const ImageTensor& image, Workspace& ws) const {
  check_image(image);
  const auto& L = *layout_;
  const std::span<const double> p = params_;
  auto& enc = *ws.encoder;
  enc.input.assign(image.data().begin(), image.data().end());

  std::span<const double> in = enc.input;
  for (int k = 0; k < 3; ++k) {
    const auto& s = L.conv[k];
    enc.act[k].resize(static_cast<std::size_t>(s.out_height()) * s.out_width() * s.out_channels);
    kernels::conv3x3s2_forward(in, p.subspan(L.conv_w[k], 9ull * s.in_channels * s.out_channels),
                               p.subspan(L.conv_b[k], s.out_channels), enc.act[k], s);
    for (double& v : enc.act[k]) v = v > 0.0 ? v : 0.0;
    in = enc.act[k];
  }
  const int d = config_.d;
  enc.tokens.resize(static_cast<std::size_t>(L.tokens) * d);
  kernels::linear_forward(enc.act[2], p.subspan(L.proj.w, static_cast<std::size_t>(L.proj.in) * d),
                          p.subspan(L.proj.b, d), enc.tokens, {L.tokens, L.proj.in, d});
  return {L.feat_h, L.feat_w, d, enc.tokens};
}

std::vector<double> QueryModel::query_forward(const FeatureMap& features, const Matrix& embeddings,
                                              Workspace& ws) const {
  const int d = config_.d;
  const int classes = static_cast<int>(num_classes());
  if (features.dim != d || embeddings.cols() != static_cast<std::size_t>(d)) {
    throw ValidationError("feature and embedding dimensions must equal model d");
  }
  if (embeddings.rows() != num_classes()) throw ValidationError("embedding table row count differs from vocabulary");
  const auto& L = *layout_;
  const std::span<const double> p = params_;
  const int tokens = features.height * features.width;
  const int ffn = config_.ffn_hidden();
  const auto cd = static_cast<std::size_t>(classes) * d;
  if (features.height != L.feat_h || features.width != L.feat_w ||
      features.data.size() != static_cast<std::size_t>(tokens) * d) {
    throw ValidationError("feature map is not " + std::to_string(L.feat_h) + "x" + std::to_string(L.feat_w) + "x" +
                          std::to_string(d));
  }
  ws.memory = features.data;
  for (std::size_t i = 0; i < ws.memory.size(); ++i) ws.memory[i] += positional_[i];
  ws.layers.resize(L.layers.size());

  std::vector<double> x(embeddings.data().begin(), embeddings.data().end());
  for (std::size_t l = 0; l < L.layers.size(); ++l) {
    const auto& r = L.layers[l];
    auto& c = ws.layers[l];
    c.x0 = x;
    c.n1.resize(cd);
    layers::layer_norm_forward(c.x0, p.subspan(r.norm1.gain, d), p.subspan(r.norm1.bias, d), classes, d, c.ln1, c.n1);
    c.sa_out.resize(cd);
    layers::attention_forward(c.n1, c.n1, attention_view(p, r.self_attn, d), {classes, classes, d, config_.num_heads},
                              c.sa, c.sa_out);
    c.x1.resize(cd);
    for (std::size_t i = 0; i < cd; ++i) c.x1[i] = c.x0[i] + c.sa_out[i];

    c.n2.resize(cd);
    layers::layer_norm_forward(c.x1, p.subspan(r.norm2.gain, d), p.subspan(r.norm2.bias, d), classes, d, c.ln2, c.n2);
    c.ca_out.resize(cd);
    layers::attention_forward(c.n2, ws.memory, attention_view(p, r.cross_attn, d),
                              {classes, tokens, d, config_.num_heads}, c.ca, c.ca_out);
    c.x2.resize(cd);
    for (std::size_t i = 0; i < cd; ++i) c.x2[i] = c.x1[i] + c.ca_out[i];

    c.n3.resize(cd);
    layers::layer_norm_forward(c.x2, p.subspan(r.norm3.gain, d), p.subspan(r.norm3.bias, d), classes, d, c.ln3, c.n3);
    c.ffn_pre.resize(static_cast<std::size_t>(classes) * ffn);
    c.ffn_act.resize(c.ffn_pre.size());
    kernels::linear_forward(c.n3, p.subspan(r.fc1.w, static_cast<std::size_t>(d) * ffn), p.subspan(r.fc1.b, ffn),
                            c.ffn_pre, {classes, d, ffn});
    for (std::size_t i = 0; i < c.ffn_pre.size(); ++i) c.ffn_act[i] = layers::gelu(c.ffn_pre[i]);
    c.ffn_out.resize(cd);
    kernels::linear_forward(c.ffn_act, p.subspan(r.fc2.w, static_cast<std::size_t>(ffn) * d), p.subspan(r.fc2.b, d),
                            c.ffn_out, {classes, ffn, d});
    for (std::size_t i = 0; i < cd; ++i) x[i] = c.x2[i] + c.ffn_out[i];
  }

  ws.final_in = std::move(x);
  ws.final_out.resize(cd);
  layers::layer_norm_forward(ws.final_in, p.subspan(L.final_norm.gain, d), p.subspan(L.final_norm.bias, d), classes,
                             d, ws.final_norm, ws.final_out);
  const bool separate = config_.head_mode == HeadMode::separate;
  ws.logits.assign(classes, 0.0);
  for (int c = 0; c < classes; ++c) {
    const std::size_t head = separate ? static_cast<std::size_t>(c) : 0;
    const double* w = params_.data() + L.head_w + head * d;
    const double* f = ws.final_out.data() + static_cast<std::size_t>(c) * d;
    double z = params_[L.head_b + head];
    for (int j = 0; j < d; ++j) z += w[j] * f[j];
    ws.logits[c] = z;
  }
  return ws.logits;
}

std::vector<double> QueryModel::forward(const ImageTensor& image, Workspace& ws) const {
  const auto features = encode_image(image, ws);
  return query_forward(features, embeddings_, ws);
}

std::vector<double> QueryModel::logits(const ImageTensor& image) const {
  auto ws = make_workspace();
  return forward(image, *ws);
}

void QueryModel::backward(std::span<const double> dlogits, Workspace& ws, std::span<double> grad) const {
  const int d = config_.d;
  const int classes = static_cast<int>(num_classes());
  if (dlogits.size() != num_classes()) throw ValidationError("dlogits length differs from class count");
  if (grad.size() != params_.size()) throw ValidationError("gradient buffer has the wrong size");
  const auto& L = *layout_;
  const std::span<const double> p = params_;
  const int tokens = L.tokens;
  const int ffn = config_.ffn_hidden();
  const auto cd = static_cast<std::size_t>(classes) * d;

  // heads
  ws.dn.assign(cd, 0.0);
  const bool separate = config_.head_mode == HeadMode::separate;
  for (int c = 0; c < classes; ++c) {
    const std::size_t head = separate ? static_cast<std::size_t>(c) : 0;
    const double g = dlogits[c];
    const double* w = params_.data() + L.head_w + head * d;
    double* gw = grad.data() + L.head_w + head * d;
    const double* f = ws.final_out.data() + static_cast<std::size_t>(c) * d;
    double* dn = ws.dn.data() + static_cast<std::size_t>(c) * d;
    grad[L.head_b + head] += g;
    for (int j = 0; j < d; ++j) {
      gw[j] += g * f[j];
      dn[j] = g * w[j];
    }
  }
  ws.dq.assign(cd, 0.0);
  layers::layer_norm_backward(ws.dn, p.subspan(L.final_norm.gain, d), ws.final_norm, classes, d, ws.dq,
                              grad.subspan(L.final_norm.gain, d), grad.subspan(L.final_norm.bias, d));

  ws.dtokens.assign(static_cast<std::size_t>(tokens) * d, 0.0);
  for (std::size_t l = L.layers.size(); l-- > 0;) {
    const auto& r = L.layers[l];
    auto& c = ws.layers[l];

    // feed-forward block
    ws.dffn.assign(static_cast<std::size_t>(classes) * ffn, 0.0);
    kernels::linear_backward_params(c.ffn_act, ws.dq, grad.subspan(r.fc2.w, static_cast<std::size_t>(ffn) * d),
                                    grad.subspan(r.fc2.b, d), {classes, ffn, d});
    kernels::linear_backward_input(ws.dq, p.subspan(r.fc2.w, static_cast<std::size_t>(ffn) * d), ws.dffn,
                                   {classes, ffn, d});
    for (std::size_t i = 0; i < ws.dffn.size(); ++i) ws.dffn[i] *= layers::gelu_derivative(c.ffn_pre[i]);
    kernels::linear_backward_params(c.n3, ws.dffn, grad.subspan(r.fc1.w, static_cast<std::size_t>(d) * ffn),
                                    grad.subspan(r.fc1.b, ffn), {classes, d, ffn});
    ws.dn.assign(cd, 0.0);
    kernels::linear_backward_input(ws.dffn, p.subspan(r.fc1.w, static_cast<std::size_t>(d) * ffn), ws.dn,
                                   {classes, d, ffn});
    layers::layer_norm_backward(ws.dn, p.subspan(r.norm3.gain, d), c.ln3, classes, d, ws.dq,
                                grad.subspan(r.norm3.gain, d), grad.subspan(r.norm3.bias, d));

    // cross-attention block
    ws.dn.assign(cd, 0.0);
    layers::attention_backward(ws.dq, c.n2, ws.memory, attention_view(p, r.cross_attn, d),
                               attention_view(grad, r.cross_attn, d), {classes, tokens, d, config_.num_heads}, c.ca,
                               ws.attention_scratch, ws.dn, ws.dtokens);
    layers::layer_norm_backward(ws.dn, p.subspan(r.norm2.gain, d), c.ln2, classes, d, ws.dq,
                                grad.subspan(r.norm2.gain, d), grad.subspan(r.norm2.bias, d));

    // self-attention block
    ws.dn.assign(cd, 0.0);
    layers::attention_backward(ws.dq, c.n1, c.n1, attention_view(p, r.self_attn, d),
                               attention_view(grad, r.self_attn, d), {classes, classes, d, config_.num_heads}, c.sa,
                               ws.attention_scratch, ws.dn, ws.dn);
    layers::layer_norm_backward(ws.dn, p.subspan(r.norm1.gain, d), c.ln1, classes, d, ws.dq,
                                grad.subspan(r.norm1.gain, d), grad.subspan(r.norm1.bias, d));
  }
  // ws.dq now holds the gradient w.r.t. the frozen embedding table; it is dropped.

  auto& enc = *ws.encoder;
  const int c3 = L.proj.in;
  kernels::linear_backward_params(enc.act[2], ws.dtokens, grad.subspan(L.proj.w, static_cast<std::size_t>(c3) * d),
                                  grad.subspan(L.proj.b, d), {tokens, c3, d});
  enc.dact[2].assign(enc.act[2].size(), 0.0);
  kernels::linear_backward_input(ws.dtokens, p.subspan(L.proj.w, static_cast<std::size_t>(c3) * d), enc.dact[2],
                                 {tokens, c3, d});
  for (int k = 2; k >= 0; --k) {
    const auto& s = L.conv[k];
    for (std::size_t i = 0; i < enc.dact[k].size(); ++i) {
      if (enc.act[k][i] <= 0.0) enc.dact[k][i] = 0.0;
    }
    const std::span<const double> in = k == 0 ? std::span<const double>(enc.input) : std::span<const double>(enc.act[k - 1]);
    const auto wsize = 9ull * s.in_channels * s.out_channels;
    kernels::conv3x3s2_backward_params(in, enc.dact[k], grad.subspan(L.conv_w[k], wsize),
                                       grad.subspan(L.conv_b[k], s.out_channels), s);
    if (k > 0) {
      enc.dact[k - 1].assign(enc.act[k - 1].size(), 0.0);
      kernels::conv3x3s2_backward_input(enc.dact[k], p.subspan(L.conv_w[k], wsize), enc.dact[k - 1], s);
    }
  }
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

PredictionMatrix predict_rows(const QueryModel& model, std::vector<std::string> image_ids,
                              const std::vector<const ImageTensor*>& images) {
  Matrix scores(images.size(), model.num_classes());
  const auto n = static_cast<long>(images.size());
  std::exception_ptr failure;
#pragma omp parallel
  {
    auto ws = model.make_workspace();
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      try {
        const auto z = model.forward(*images[i], *ws);
        for (std::size_t c = 0; c < z.size(); ++c) scores(i, c) = sigmoid(z[c]);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return PredictionMatrix(model.vocabulary(), std::move(image_ids), std::move(scores));
}

}  // namespace

PredictionMatrix predict(const QueryModel& model, const std::vector<std::string>& image_ids,
                         const std::vector<ImageTensor>& images) {
  if (image_ids.size() != images.size()) throw ValidationError("image id and image counts differ");
  std::vector<const ImageTensor*> rows;
  for (const auto& image : images) rows.push_back(&image);
  return predict_rows(model, image_ids, rows);
}

PredictionMatrix predict(const QueryModel& model, const LabeledDataset& dataset) {
  if (!(dataset.vocabulary() == model.vocabulary())) {
    throw ValidationError("model and dataset vocabularies differ");
  }
  std::vector<const ImageTensor*> rows;
  for (const auto& e : dataset.examples()) rows.push_back(&e.image);
  return predict_rows(model, dataset.image_ids(), rows);
}

}  // namespace ltmlc::model
