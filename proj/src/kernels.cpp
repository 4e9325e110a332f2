#include "ltmlc/kernels.hpp"

#include <cstddef>
#include <vector>

namespace ltmlc::kernels {

namespace {

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr long kParallelWork = 1L << 16;

}  // namespace

namespace {

// y[rows x out] += x[rows x in] * w[in x out], four rows at a time so each
// weight row is loaded once per block.
void gemm_accumulate(const double* x, const double* w, double* y, int rows, int in, int out) {
  const long work = static_cast<long>(rows) * in * out;
  const int blocks = (rows + 3) / 4;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (int blk = 0; blk < blocks; ++blk) {
    const int r0 = blk * 4;
    const int nr = rows - r0 < 4 ? rows - r0 : 4;
    if (nr == 4) {
      const double* x0 = x + static_cast<std::size_t>(r0) * in;
      const double* x1 = x0 + in;
      const double* x2 = x1 + in;
      const double* x3 = x2 + in;
      double* __restrict y0 = y + static_cast<std::size_t>(r0) * out;
      double* __restrict y1 = y0 + out;
      double* __restrict y2 = y1 + out;
      double* __restrict y3 = y2 + out;
      for (int i = 0; i < in; ++i) {
        const double a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
        if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
        const double* wi = w + static_cast<std::size_t>(i) * out;
#pragma omp simd
        for (int o = 0; o < out; ++o) {
          const double wv = wi[o];
          y0[o] += a0 * wv;
          y1[o] += a1 * wv;
          y2[o] += a2 * wv;
          y3[o] += a3 * wv;
        }
      }
    } else {
      for (int k = 0; k < nr; ++k) {
        const double* xk = x + static_cast<std::size_t>(r0 + k) * in;
        double* __restrict yk = y + static_cast<std::size_t>(r0 + k) * out;
        for (int i = 0; i < in; ++i) {
          const double a = xk[i];
          if (a == 0.0) continue;
          const double* wi = w + static_cast<std::size_t>(i) * out;
#pragma omp simd
          for (int o = 0; o < out; ++o) yk[o] += a * wi[o];
        }
      }
    }
  }
}

void transpose(const double* src, int rows, int cols, std::vector<double>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
  }
}

}  // namespace

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearShape s) {
  for (int r = 0; r < s.rows; ++r) {
    double* yr = y.data() + static_cast<std::size_t>(r) * s.out;
    for (int o = 0; o < s.out; ++o) yr[o] = b[o];
  }
  gemm_accumulate(x.data(), w.data(), y.data(), s.rows, s.in, s.out);
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                           LinearShape s) {
  thread_local std::vector<double> wt;
  transpose(w.data(), s.in, s.out, wt);
  gemm_accumulate(dy.data(), wt.data(), dx.data(), s.rows, s.out, s.in);
}

void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                            std::span<double> db, LinearShape s) {
  thread_local std::vector<double> xt;
  transpose(x.data(), s.rows, s.in, xt);
  gemm_accumulate(xt.data(), dy.data(), dw.data(), s.in, s.rows, s.out);
  for (int r = 0; r < s.rows; ++r) {
    const double* dyr = dy.data() + static_cast<std::size_t>(r) * s.out;
#pragma omp simd
    for (int o = 0; o < s.out; ++o) db[o] += dyr[o];
  }
}

void conv3x3s2_forward(std::span<const double> in, std::span<const double> w, std::span<const double> b,
                       std::span<double> out, ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  const int oh = s.out_height(), ow = s.out_width();
  const long work = static_cast<long>(oh) * ow * co_n * ci_n * 9;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* __restrict acc = out.data() + (static_cast<std::size_t>(oy) * ow + ox) * co_n;
      for (int co = 0; co < co_n; ++co) acc[co] = b[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= s.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= s.width) continue;
          const double* src = in.data() + (static_cast<std::size_t>(iy) * s.width + ix) * ci_n;
          const double* wk = w.data() + static_cast<std::size_t>(ky * 3 + kx) * ci_n * co_n;
          for (int ci = 0; ci < ci_n; ++ci) {
            const double a = src[ci];
            const double* wr = wk + static_cast<std::size_t>(ci) * co_n;
#pragma omp simd
            for (int co = 0; co < co_n; ++co) acc[co] += a * wr[co];
          }
        }
      }
    }
  }
}

void conv3x3s2_backward_input(std::span<const double> dout, std::span<const double> w, std::span<double> din,
                              ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  const int oh = s.out_height(), ow = s.out_width();
  // per tap, w^T as [out_channel x in_channel]
  thread_local std::vector<double> wt;
  wt.resize(9ull * ci_n * co_n);
  for (int kk = 0; kk < 9; ++kk) {
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int co = 0; co < co_n; ++co) {
        wt[(static_cast<std::size_t>(kk) * co_n + co) * ci_n + ci] = w[(static_cast<std::size_t>(kk) * ci_n + ci) * co_n + co];
      }
    }
  }
  const double* wtp = wt.data();
  const long work = static_cast<long>(oh) * ow * co_n * ci_n * 9;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (int iy = 0; iy < s.height; ++iy) {
    for (int ix = 0; ix < s.width; ++ix) {
      double* __restrict dst = din.data() + (static_cast<std::size_t>(iy) * s.width + ix) * ci_n;
      for (int ky = 0; ky < 3; ++ky) {
        const int ty = iy + 1 - ky;
        if (ty < 0 || ty % 2 != 0 || ty / 2 >= oh) continue;
        const int oy = ty / 2;
        for (int kx = 0; kx < 3; ++kx) {
          const int tx = ix + 1 - kx;
          if (tx < 0 || tx % 2 != 0 || tx / 2 >= ow) continue;
          const int ox = tx / 2;
          const double* g = dout.data() + (static_cast<std::size_t>(oy) * ow + ox) * co_n;
          const double* wk = wtp + static_cast<std::size_t>(ky * 3 + kx) * co_n * ci_n;
          for (int co = 0; co < co_n; ++co) {
            const double gv = g[co];
            if (gv == 0.0) continue;
            const double* wr = wk + static_cast<std::size_t>(co) * ci_n;
#pragma omp simd
            for (int ci = 0; ci < ci_n; ++ci) dst[ci] += gv * wr[ci];
          }
        }
      }
    }
  }
}

void conv3x3s2_backward_params(std::span<const double> in, std::span<const double> dout, std::span<double> dw,
                               std::span<double> db, ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  const int oh = s.out_height(), ow = s.out_width();
  const long work = static_cast<long>(oh) * ow * co_n * ci_n * 9;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (int kk = 0; kk < 9; ++kk) {
    const int ky = kk / 3, kx = kk % 3;
    double* wk = dw.data() + static_cast<std::size_t>(kk) * ci_n * co_n;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = 2 * oy + ky - 1;
      if (iy < 0 || iy >= s.height) continue;
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = 2 * ox + kx - 1;
        if (ix < 0 || ix >= s.width) continue;
        const double* src = in.data() + (static_cast<std::size_t>(iy) * s.width + ix) * ci_n;
        const double* g = dout.data() + (static_cast<std::size_t>(oy) * ow + ox) * co_n;
        for (int ci = 0; ci < ci_n; ++ci) {
          const double a = src[ci];
          if (a == 0.0) continue;
          double* __restrict wr = wk + static_cast<std::size_t>(ci) * co_n;
#pragma omp simd
          for (int co = 0; co < co_n; ++co) wr[co] += a * g[co];
        }
      }
    }
  }
  for (int p = 0; p < oh * ow; ++p) {
    const double* g = dout.data() + static_cast<std::size_t>(p) * co_n;
#pragma omp simd
    for (int co = 0; co < co_n; ++co) db[co] += g[co];
  }
}

}  // namespace ltmlc::kernels
