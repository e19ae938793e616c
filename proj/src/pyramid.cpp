#include "sinddm/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sinddm/error.hpp"
#include "sinddm/resample.hpp"

namespace sinddm {

int round_dim(double v) { return std::max(1, static_cast<int>(std::floor(v + 0.5))); }

std::vector<Dims> scale_dims(Dims full, double r, int num_scales) {
  std::vector<Dims> dims(num_scales);
  for (int s = 0; s < num_scales; ++s) {
    const double f = std::pow(r, s - (num_scales - 1));
    dims[s] = {round_dim(full.h * f), round_dim(full.w * f)};
  }
  dims.back() = full;
  return dims;
}

int choose_num_scales(Dims dims, int rf_side, double target_ratio, double r) {
  if (rf_side < 1) throw InvalidArgument("rf_side must be >= 1");
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw InvalidArgument("target_ratio must lie in (0, 1)");
  if (!(r > 1.0)) throw InvalidArgument("scale factor r must be > 1");
  if (std::min(dims.h, dims.w) <= rf_side) {
    throw InvalidArgument("image " + to_string(dims) + " leaves no room below full resolution for a " +
                          std::to_string(rf_side) + "px receptive field");
  }
  const double area = static_cast<double>(dims.h) * dims.w;
  const double target = static_cast<double>(rf_side) * rf_side / target_ratio;
  int best = 3;
  double best_gap = INFINITY;
  for (int n = 3; n <= 8; ++n) {
    const double gap = std::abs(area / std::pow(r, 2.0 * (n - 1)) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = n;
    }
  }
  return best;
}

Pyramid build_pyramids(const ImageGrid& img, double r, int num_scales) {
  if (num_scales < 2) throw InvalidArgument("pyramid needs at least 2 scales");
  if (!(r > 1.0)) throw InvalidArgument("scale factor r must be > 1");
  img.require_finite("training image");

  Pyramid p;
  p.r = r;
  p.dims = scale_dims(img.dims(), r, num_scales);
  const Dims coarsest = p.dims.front();
  if (coarsest.h < kMinCoarsestSide || coarsest.w < kMinCoarsestSide) {
    int suggested = num_scales - 1;
    while (suggested >= 2) {
      const Dims d = scale_dims(img.dims(), r, suggested).front();
      if (d.h >= kMinCoarsestSide && d.w >= kMinCoarsestSide) break;
      --suggested;
    }
    std::string msg = "coarsest scale " + to_string(coarsest) + " is below 8x8";
    msg += suggested >= 2 ? "; try N = " + std::to_string(suggested) : "; image too small";
    throw InvalidArgument(msg);
  }

  p.scales.reserve(num_scales);
  for (int s = 0; s < num_scales - 1; ++s) p.scales.push_back(resize(img, p.dims[s]));
  p.scales.push_back(img);

  p.blurry.reserve(num_scales);
  p.blurry.push_back(p.scales[0]);
  for (int s = 1; s < num_scales; ++s) p.blurry.push_back(resize(p.scales[s - 1], p.dims[s]));
  return p;
}

ImageGrid histogram_match(const ImageGrid& source, const ImageGrid& reference) {
  if (source.channels() != reference.channels()) throw InvalidArgument("histogram_match: channel mismatch");
  source.require_finite("histogram_match source");
  reference.require_finite("histogram_match reference");

  const std::size_t ns = source.pixels();
  const std::size_t nr = reference.pixels();
  const int channels = source.channels();
  ImageGrid out = source;
  std::vector<std::size_t> order(ns);
  std::vector<double> ref_sorted(nr);
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < nr; ++i) ref_sorted[i] = reference[i * channels + c];
    std::sort(ref_sorted.begin(), ref_sorted.end());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return source[a * channels + c] < source[b * channels + c];
    });
    for (std::size_t rank = 0; rank < ns; ++rank) {
      const auto q = static_cast<std::size_t>((rank + 0.5) * static_cast<double>(nr) / static_cast<double>(ns));
      out[order[rank] * channels + c] = ref_sorted[std::min(q, nr - 1)];
    }
  }
  return out;
}

}  // namespace sinddm
