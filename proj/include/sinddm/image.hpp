#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sinddm {

struct Dims {
  int h = 0;
  int w = 0;
  auto operator<=>(const Dims&) const = default;
};

std::string to_string(Dims d);

/// Dense H x W x C image, channel-interleaved (HWC), values nominally in [-1, 1].
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, int channels = 3, double fill = 0.0);
  ImageGrid(Dims dims, int channels = 3, double fill = 0.0)
      : ImageGrid(dims.h, dims.w, channels, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Dims dims() const { return {height_, width_}; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;
  /// Throws NumericalError naming `what` if any value is NaN or infinite.
  void require_finite(const std::string& what) const;
  void clamp(double lo = -1.0, double hi = 1.0);

  bool operator==(const ImageGrid&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Elementwise helpers; operands must have identical shapes.
ImageGrid lerp(const ImageGrid& a, const ImageGrid& b, double weight_b);
double mse(const ImageGrid& a, const ImageGrid& b);
double max_abs_diff(const ImageGrid& a, const ImageGrid& b);
void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what);

/// Copy of a rectangular region [y0, y0+dims.h) x [x0, x0+dims.w).
ImageGrid crop(const ImageGrid& img, int y0, int x0, Dims dims);

}  // namespace sinddm
