#include "sinddm/resample.hpp"

#include <algorithm>
#include <cmath>

#include "sinddm/error.hpp"

namespace sinddm {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

AxisWeights AxisWeights::bicubic(int in_size, int out_size) {
  if (in_size < 1 || out_size < 1) throw InvalidArgument("resample sizes must be >= 1");
  AxisWeights aw;
  aw.in_size = in_size;
  aw.out_size = out_size;
  aw.offset.reserve(out_size + 1);
  aw.offset.push_back(0);

  const double scale = static_cast<double>(out_size) / in_size;
  const double stretch = std::min(scale, 1.0);
  const double support = 2.0 / stretch;
  std::vector<double> row(in_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    std::fill(row.begin(), row.end(), 0.0);
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double w = cubic_kernel((i - center) * stretch);
      if (w == 0.0) continue;
      row[std::clamp(i, 0, in_size - 1)] += w;
      total += w;
    }
    for (int i = 0; i < in_size; ++i) {
      if (row[i] == 0.0) continue;
      aw.index.push_back(i);
      aw.weight.push_back(row[i] / total);
    }
    aw.offset.push_back(static_cast<int>(aw.index.size()));
  }
  return aw;
}

namespace {

// Separable application: rows first (height axis), then columns.
ImageGrid apply(const ImageGrid& img, const AxisWeights& ay, const AxisWeights& ax) {
  const int channels = img.channels();
  ImageGrid tmp(ay.out_size, img.width(), channels);
  for (int o = 0; o < ay.out_size; ++o)
    for (int k = ay.offset[o]; k < ay.offset[o + 1]; ++k) {
      const int iy = ay.index[k];
      const double w = ay.weight[k];
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < channels; ++c) tmp.at(o, x, c) += w * img.at(iy, x, c);
    }
  ImageGrid out(ay.out_size, ax.out_size, channels);
  for (int y = 0; y < ay.out_size; ++y)
    for (int o = 0; o < ax.out_size; ++o)
      for (int k = ax.offset[o]; k < ax.offset[o + 1]; ++k) {
        const int ix = ax.index[k];
        const double w = ax.weight[k];
        for (int c = 0; c < channels; ++c) out.at(y, o, c) += w * tmp.at(y, ix, c);
      }
  return out;
}

ImageGrid apply_adjoint(const ImageGrid& grad, const AxisWeights& ay, const AxisWeights& ax) {
  const int channels = grad.channels();
  ImageGrid tmp(ay.out_size, ax.in_size, channels);
  for (int y = 0; y < ay.out_size; ++y)
    for (int o = 0; o < ax.out_size; ++o)
      for (int k = ax.offset[o]; k < ax.offset[o + 1]; ++k) {
        const int ix = ax.index[k];
        const double w = ax.weight[k];
        for (int c = 0; c < channels; ++c) tmp.at(y, ix, c) += w * grad.at(y, o, c);
      }
  ImageGrid out(ay.in_size, ax.in_size, channels);
  for (int o = 0; o < ay.out_size; ++o)
    for (int k = ay.offset[o]; k < ay.offset[o + 1]; ++k) {
      const int iy = ay.index[k];
      const double w = ay.weight[k];
      for (int x = 0; x < ax.in_size; ++x)
        for (int c = 0; c < channels; ++c) out.at(iy, x, c) += w * tmp.at(o, x, c);
    }
  return out;
}

}  // namespace

ImageGrid resize_linear(const ImageGrid& img, Dims target) {
  if (target.h < 1 || target.w < 1) throw InvalidArgument("resize target must be >= 1x1");
  img.require_finite("resize input");
  if (img.dims() == target) return img;
  return apply(img, AxisWeights::bicubic(img.height(), target.h),
               AxisWeights::bicubic(img.width(), target.w));
}

ImageGrid resize(const ImageGrid& img, Dims target) {
  ImageGrid out = resize_linear(img, target);
  out.clamp();
  return out;
}

ImageGrid resize_linear_adjoint(const ImageGrid& grad, Dims source) {
  if (grad.dims() == source) return grad;
  return apply_adjoint(grad, AxisWeights::bicubic(source.h, grad.height()),
                       AxisWeights::bicubic(source.w, grad.width()));
}

ImageGrid resize_nearest(const ImageGrid& img, Dims target) {
  if (target.h < 1 || target.w < 1) throw InvalidArgument("resize target must be >= 1x1");
  ImageGrid out(target, img.channels());
  for (int y = 0; y < target.h; ++y) {
    const int sy = std::min(img.height() - 1, static_cast<int>((y + 0.5) * img.height() / target.h));
    for (int x = 0; x < target.w; ++x) {
      const int sx = std::min(img.width() - 1, static_cast<int>((x + 0.5) * img.width() / target.w));
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace sinddm
