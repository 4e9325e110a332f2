#include "ltmlc/kernels.hpp"

namespace ltmlc::kernels::reference {

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearShape s) {
  for (int r = 0; r < s.rows; ++r) {
    for (int o = 0; o < s.out; ++o) {
      double acc = b[o];
      for (int i = 0; i < s.in; ++i) acc += x[r * s.in + i] * w[i * s.out + o];
      y[r * s.out + o] = acc;
    }
  }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                           LinearShape s) {
  for (int r = 0; r < s.rows; ++r) {
    for (int i = 0; i < s.in; ++i) {
      double acc = 0.0;
      for (int o = 0; o < s.out; ++o) acc += dy[r * s.out + o] * w[i * s.out + o];
      dx[r * s.in + i] += acc;
    }
  }
}

void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                            std::span<double> db, LinearShape s) {
  for (int i = 0; i < s.in; ++i) {
    for (int o = 0; o < s.out; ++o) {
      double acc = 0.0;
      for (int r = 0; r < s.rows; ++r) acc += x[r * s.in + i] * dy[r * s.out + o];
      dw[i * s.out + o] += acc;
    }
  }
  for (int o = 0; o < s.out; ++o) {
    double acc = 0.0;
    for (int r = 0; r < s.rows; ++r) acc += dy[r * s.out + o];
    db[o] += acc;
  }
}

void conv3x3s2_forward(std::span<const double> in, std::span<const double> w, std::span<const double> b,
                       std::span<double> out, ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  for (int oy = 0; oy < s.out_height(); ++oy) {
    for (int ox = 0; ox < s.out_width(); ++ox) {
      for (int co = 0; co < co_n; ++co) {
        double acc = b[co];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
            if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
            for (int ci = 0; ci < ci_n; ++ci) {
              acc += in[(iy * s.width + ix) * ci_n + ci] * w[((ky * 3 + kx) * ci_n + ci) * co_n + co];
            }
          }
        }
        out[(oy * s.out_width() + ox) * co_n + co] = acc;
      }
    }
  }
}

void conv3x3s2_backward_input(std::span<const double> dout, std::span<const double> w, std::span<double> din,
                              ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  for (int oy = 0; oy < s.out_height(); ++oy) {
    for (int ox = 0; ox < s.out_width(); ++ox) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
          if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int co = 0; co < co_n; ++co) {
              din[(iy * s.width + ix) * ci_n + ci] +=
                  dout[(oy * s.out_width() + ox) * co_n + co] * w[((ky * 3 + kx) * ci_n + ci) * co_n + co];
            }
          }
        }
      }
    }
  }
}

void conv3x3s2_backward_params(std::span<const double> in, std::span<const double> dout, std::span<double> dw,
                               std::span<double> db, ConvShape s) {
  const int ci_n = s.in_channels, co_n = s.out_channels;
  for (int oy = 0; oy < s.out_height(); ++oy) {
    for (int ox = 0; ox < s.out_width(); ++ox) {
      for (int co = 0; co < co_n; ++co) {
        const double g = dout[(oy * s.out_width() + ox) * co_n + co];
        db[co] += g;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
            if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
            for (int ci = 0; ci < ci_n; ++ci) {
              dw[((ky * 3 + kx) * ci_n + ci) * co_n + co] += g * in[(iy * s.width + ix) * ci_n + ci];
            }
          }
        }
      }
    }
  }
}

}  // namespace ltmlc::kernels::reference
