#include "ltmlc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ltmlc/kernels.hpp"

namespace ltmlc::layers {

void layer_norm_forward(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                        int rows, int dim, LayerNormCache& cache, std::span<double> y) {
  cache.xhat.resize(static_cast<std::size_t>(rows) * dim);
  cache.rstd.resize(rows);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<std::size_t>(r) * dim;
    double mean = 0.0;
    for (int j = 0; j < dim; ++j) mean += xr[j];
    mean /= dim;
    double var = 0.0;
    for (int j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= dim;
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[r] = rstd;
    double* xh = cache.xhat.data() + static_cast<std::size_t>(r) * dim;
    double* yr = y.data() + static_cast<std::size_t>(r) * dim;
    for (int j = 0; j < dim; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      yr[j] = gain[j] * xh[j] + bias[j];
    }
  }
}

void layer_norm_backward(std::span<const double> dy, std::span<const double> gain, const LayerNormCache& cache,
                         int rows, int dim, std::span<double> dx, std::span<double> dgain, std::span<double> dbias) {
  for (int r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + static_cast<std::size_t>(r) * dim;
    const double* xh = cache.xhat.data() + static_cast<std::size_t>(r) * dim;
    double mean_g = 0.0, mean_gx = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double g = dyr[j] * gain[j];
      mean_g += g;
      mean_gx += g * xh[j];
      dgain[j] += dyr[j] * xh[j];
      dbias[j] += dyr[j];
    }
    mean_g /= dim;
    mean_gx /= dim;
    double* dxr = dx.data() + static_cast<std::size_t>(r) * dim;
    const double rstd = cache.rstd[r];
    for (int j = 0; j < dim; ++j) dxr[j] += rstd * (dyr[j] * gain[j] - mean_g - xh[j] * mean_gx);
  }
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

void AttentionCache::resize(const AttentionDims& d) {
  q.resize(static_cast<std::size_t>(d.queries) * d.dim);
  k.resize(static_cast<std::size_t>(d.keys) * d.dim);
  v.resize(static_cast<std::size_t>(d.keys) * d.dim);
  kt.resize(static_cast<std::size_t>(d.keys) * d.dim);
  vt.resize(static_cast<std::size_t>(d.keys) * d.dim);
  probs.resize(static_cast<std::size_t>(d.heads) * d.queries * d.keys);
  context.resize(static_cast<std::size_t>(d.queries) * d.dim);
}

void AttentionScratch::resize(const AttentionDims& d) {
  dcontext.assign(static_cast<std::size_t>(d.queries) * d.dim, 0.0);
  dq.assign(static_cast<std::size_t>(d.queries) * d.dim, 0.0);
  dk.resize(static_cast<std::size_t>(d.keys) * d.dim);
  dv.resize(static_cast<std::size_t>(d.keys) * d.dim);
  dkt.assign(static_cast<std::size_t>(d.keys) * d.dim, 0.0);
  dvt.assign(static_cast<std::size_t>(d.keys) * d.dim, 0.0);
  dprobs.resize(static_cast<std::size_t>(d.keys));
}

namespace {

// [keys x dim] -> [dim x keys]; column block h*dh..(h+1)*dh becomes head h's slab.
void transpose_into(std::span<const double> src, int rows, int cols, std::span<double> dst) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
  }
}

}  // namespace

void attention_forward(std::span<const double> xq, std::span<const double> xkv,
                       const AttentionWeights<const double>& w, const AttentionDims& d, AttentionCache& cache,
                       std::span<double> out) {
  cache.resize(d);
  kernels::linear_forward(xq, w.wq, w.bq, cache.q, {d.queries, d.dim, d.dim});
  kernels::linear_forward(xkv, w.wk, w.bk, cache.k, {d.keys, d.dim, d.dim});
  kernels::linear_forward(xkv, w.wv, w.bv, cache.v, {d.keys, d.dim, d.dim});
  transpose_into(cache.k, d.keys, d.dim, cache.kt);
  transpose_into(cache.v, d.keys, d.dim, cache.vt);

  const int dh = d.head_dim();
  const int nk = d.keys;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < d.heads; ++h) {
    const double* kt = cache.kt.data() + static_cast<std::size_t>(h) * dh * nk;
    const double* vt = cache.vt.data() + static_cast<std::size_t>(h) * dh * nk;
    for (int i = 0; i < d.queries; ++i) {
      double* __restrict p = cache.probs.data() + (static_cast<std::size_t>(h) * d.queries + i) * nk;
      const double* qi = cache.q.data() + static_cast<std::size_t>(i) * d.dim + h * dh;
      for (int j = 0; j < nk; ++j) p[j] = 0.0;
      for (int e = 0; e < dh; ++e) {
        const double qe = qi[e] * scale;
        const double* ke = kt + static_cast<std::size_t>(e) * nk;
#pragma omp simd
        for (int j = 0; j < nk; ++j) p[j] += qe * ke[j];
      }
      double max_score = p[0];
      for (int j = 1; j < nk; ++j) max_score = std::max(max_score, p[j]);
      double total = 0.0;
      for (int j = 0; j < nk; ++j) {
        p[j] = std::exp(p[j] - max_score);
        total += p[j];
      }
      const double inv = 1.0 / total;
#pragma omp simd
      for (int j = 0; j < nk; ++j) p[j] *= inv;
      double* ctx = cache.context.data() + static_cast<std::size_t>(i) * d.dim + h * dh;
      for (int e = 0; e < dh; ++e) {
        const double* ve = vt + static_cast<std::size_t>(e) * nk;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int j = 0; j < nk; ++j) acc += p[j] * ve[j];
        ctx[e] = acc;
      }
    }
  }
  kernels::linear_forward(cache.context, w.wo, w.bo, out, {d.queries, d.dim, d.dim});
}

void attention_backward(std::span<const double> dout, std::span<const double> xq, std::span<const double> xkv,
                        const AttentionWeights<const double>& w, const AttentionWeights<double>& grad,
                        const AttentionDims& d, const AttentionCache& cache, AttentionScratch& s,
                        std::span<double> dxq, std::span<double> dxkv) {
  s.resize(d);
  kernels::linear_backward_params(cache.context, dout, grad.wo, grad.bo, {d.queries, d.dim, d.dim});
  kernels::linear_backward_input(dout, w.wo, s.dcontext, {d.queries, d.dim, d.dim});

  const int dh = d.head_dim();
  const int nk = d.keys;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  double* __restrict dp = s.dprobs.data();
  for (int h = 0; h < d.heads; ++h) {
    const double* kt = cache.kt.data() + static_cast<std::size_t>(h) * dh * nk;
    const double* vt = cache.vt.data() + static_cast<std::size_t>(h) * dh * nk;
    double* dkt = s.dkt.data() + static_cast<std::size_t>(h) * dh * nk;
    double* dvt = s.dvt.data() + static_cast<std::size_t>(h) * dh * nk;
    for (int i = 0; i < d.queries; ++i) {
      const double* p = cache.probs.data() + (static_cast<std::size_t>(h) * d.queries + i) * nk;
      const double* dctx = s.dcontext.data() + static_cast<std::size_t>(i) * d.dim + h * dh;
      for (int j = 0; j < nk; ++j) dp[j] = 0.0;
      for (int e = 0; e < dh; ++e) {
        const double g = dctx[e];
        const double* ve = vt + static_cast<std::size_t>(e) * nk;
        double* __restrict dve = dvt + static_cast<std::size_t>(e) * nk;
#pragma omp simd
        for (int j = 0; j < nk; ++j) {
          dp[j] += g * ve[j];
          dve[j] += g * p[j];
        }
      }
      double weighted = 0.0;
#pragma omp simd reduction(+ : weighted)
      for (int j = 0; j < nk; ++j) weighted += p[j] * dp[j];
      // dp becomes d(score) including the 1/sqrt(dh) factor
#pragma omp simd
      for (int j = 0; j < nk; ++j) dp[j] = p[j] * (dp[j] - weighted) * scale;
      const double* qi = cache.q.data() + static_cast<std::size_t>(i) * d.dim + h * dh;
      double* dqi = s.dq.data() + static_cast<std::size_t>(i) * d.dim + h * dh;
      for (int e = 0; e < dh; ++e) {
        const double* ke = kt + static_cast<std::size_t>(e) * nk;
        double* __restrict dke = dkt + static_cast<std::size_t>(e) * nk;
        const double qe = qi[e];
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int j = 0; j < nk; ++j) {
          acc += dp[j] * ke[j];
          dke[j] += qe * dp[j];
        }
        dqi[e] += acc;
      }
    }
  }
  transpose_into(s.dkt, d.dim, nk, s.dk);
  transpose_into(s.dvt, d.dim, nk, s.dv);

  kernels::linear_backward_params(xq, s.dq, grad.wq, grad.bq, {d.queries, d.dim, d.dim});
  kernels::linear_backward_params(xkv, s.dk, grad.wk, grad.bk, {d.keys, d.dim, d.dim});
  kernels::linear_backward_params(xkv, s.dv, grad.wv, grad.bv, {d.keys, d.dim, d.dim});
  kernels::linear_backward_input(s.dq, w.wq, dxq, {d.queries, d.dim, d.dim});
  kernels::linear_backward_input(s.dk, w.wk, dxkv, {d.keys, d.dim, d.dim});
  kernels::linear_backward_input(s.dv, w.wv, dxkv, {d.keys, d.dim, d.dim});
}

}  // namespace ltmlc::layers
