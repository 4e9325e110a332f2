#pragma once

#include <span>
#include <vector>

namespace ltmlc::layers {

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization over `dim` columns with gain and bias.
struct LayerNormCache {
  std::vector<double> xhat;  // rows x dim
  std::vector<double> rstd;  // rows
};

void layer_norm_forward(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                        int rows, int dim, LayerNormCache& cache, std::span<double> y);
/// dx += ..., dgain += ..., dbias += ...
void layer_norm_backward(std::span<const double> dy, std::span<const double> gain, const LayerNormCache& cache,
                         int rows, int dim, std::span<double> dx, std::span<double> dgain, std::span<double> dbias);

/// Exact GELU, x * Phi(x).
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

template <typename T>
struct AttentionWeights {
  std::span<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

struct AttentionDims {
  int queries;
  int keys;
  int dim;
  int heads;

  int head_dim() const noexcept { return dim / heads; }
};

struct AttentionCache {
  std::vector<double> q, k, v;  // projected, queries x dim / keys x dim
  std::vector<double> kt, vt;   // per head transposed, heads x head_dim x keys
  std::vector<double> probs;    // heads x queries x keys
  std::vector<double> context;  // queries x dim, before the output projection

  void resize(const AttentionDims& dims);
};

/// Multi-head scaled dot-product attention: queries from `xq`, keys and values from `xkv`.
void attention_forward(std::span<const double> xq, std::span<const double> xkv,
                       const AttentionWeights<const double>& w, const AttentionDims& dims, AttentionCache& cache,
                       std::span<double> out);

/// Scratch for attention_backward, reused across calls.
struct AttentionScratch {
  std::vector<double> dcontext, dq, dk, dv, dkt, dvt, dprobs;

  void resize(const AttentionDims& dims);
};

/// Accumulates into dxq, dxkv (which may alias, for self-attention) and the weight gradients.
void attention_backward(std::span<const double> dout, std::span<const double> xq, std::span<const double> xkv,
                        const AttentionWeights<const double>& w, const AttentionWeights<double>& grad,
                        const AttentionDims& dims, const AttentionCache& cache, AttentionScratch& scratch,
                        std::span<double> dxq, std::span<double> dxkv);

}  // namespace ltmlc::layers
