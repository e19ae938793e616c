#include "sinddm/image.hpp"

#include <algorithm>
#include <cmath>

#include "sinddm/error.hpp"

namespace sinddm {

std::string to_string(Dims d) { return std::to_string(d.h) + "x" + std::to_string(d.w); }

ImageGrid::ImageGrid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw InvalidArgument("image dims must be positive, got " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool ImageGrid::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void ImageGrid::require_finite(const std::string& what) const {
  if (!all_finite()) throw NumericalError(what + ": non-finite values");
}

void ImageGrid::clamp(double lo, double hi) {
  for (double& v : data_) v = std::clamp(v, lo, hi);
}

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (a.dims() != b.dims() || a.channels() != b.channels()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + to_string(a.dims()) + " vs " +
                          to_string(b.dims()));
  }
}

ImageGrid lerp(const ImageGrid& a, const ImageGrid& b, double weight_b) {
  require_same_shape(a, b, "lerp");
  ImageGrid out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - weight_b) * a[i] + weight_b * b[i];
  return out;
}

double mse(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double max_abs_diff(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ImageGrid crop(const ImageGrid& img, int y0, int x0, Dims dims) {
  if (y0 < 0 || x0 < 0 || y0 + dims.h > img.height() || x0 + dims.w > img.width()) {
    throw InvalidArgument("crop window outside image");
  }
  ImageGrid out(dims, img.channels());
  for (int y = 0; y < dims.h; ++y)
    for (int x = 0; x < dims.w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

}  // namespace sinddm
