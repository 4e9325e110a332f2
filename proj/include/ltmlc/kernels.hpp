#pragma once

#include <span>

namespace ltmlc::kernels {

/// y[rows x out] = x[rows x in] * w[in x out] + b[out]
struct LinearShape {
  int rows;
  int in;
  int out;
};

/// 3x3 convolution, stride 2, zero padding 1, on channel-interleaved maps.
/// Weights are laid out [ky][kx][in_channel][out_channel]. Height and width must be even.
struct ConvShape {
  int height;
  int width;
  int in_channels;
  int out_channels;

  int out_height() const noexcept { return height / 2; }
  int out_width() const noexcept { return width / 2; }
};

// OpenMP kernels. Work is split over independent output elements only, so
// results do not depend on the thread count. Inside an active parallel region
// they run on the calling thread.

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearShape shape);
/// dx += dy * w^T
void linear_backward_input(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                           LinearShape shape);
/// dw += x^T * dy, db += column sums of dy
void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                            std::span<double> db, LinearShape shape);

void conv3x3s2_forward(std::span<const double> in, std::span<const double> w, std::span<const double> b,
                       std::span<double> out, ConvShape shape);
/// din += transposed convolution of dout
void conv3x3s2_backward_input(std::span<const double> dout, std::span<const double> w, std::span<double> din,
                              ConvShape shape);
/// dw, db accumulate
void conv3x3s2_backward_params(std::span<const double> in, std::span<const double> dout, std::span<double> dw,
                               std::span<double> db, ConvShape shape);

/// Serial, loop-for-loop transcriptions of the definitions. Kept as the
/// reference the parallel kernels are tested and benchmarked against.
namespace reference {

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearShape shape);
void linear_backward_input(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                           LinearShape shape);
void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                            std::span<double> db, LinearShape shape);
void conv3x3s2_forward(std::span<const double> in, std::span<const double> w, std::span<const double> b,
                       std::span<double> out, ConvShape shape);
void conv3x3s2_backward_input(std::span<const double> dout, std::span<const double> w, std::span<double> din,
                              ConvShape shape);
void conv3x3s2_backward_params(std::span<const double> in, std::span<const double> dout, std::span<double> dw,
                               std::span<double> db, ConvShape shape);

}  // namespace reference

}  // namespace ltmlc::kernels
