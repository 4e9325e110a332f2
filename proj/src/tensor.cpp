#include "ltmlc/tensor.hpp"

#include <cmath>

namespace ltmlc {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

ImageTensor::ImageTensor(int height, int width, float fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * kChannels, fill) {}

bool ImageTensor::valid() const {
  if (data_.size() != static_cast<std::size_t>(height_) * width_ * kChannels) return false;
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) return false;
  }
  return true;
}

}  // namespace ltmlc
