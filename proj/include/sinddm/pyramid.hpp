#pragma once

#include <vector>

#include "sinddm/image.hpp"

namespace sinddm {

/// Clean and blurry image stacks, coarsest scale first.
///
/// scales[N-1] is the training image itself; blurry[0] == scales[0] and, for
/// s >= 1, blurry[s] is scales[s-1] upsampled to dims[s].
struct Pyramid {
  double r = 1.5;
  std::vector<Dims> dims;
  std::vector<ImageGrid> scales;
  std::vector<ImageGrid> blurry;

  int num_scales() const { return static_cast<int>(dims.size()); }
};

/// Round-half-up, minimum 1.
int round_dim(double v);

/// Per-scale dims: round(full * r^(s-(N-1))) on each axis.
std::vector<Dims> scale_dims(Dims full, double r, int num_scales);

/// Picks N in [3, 8] whose coarsest area is closest to rf_side^2 / target_ratio.
int choose_num_scales(Dims dims, int rf_side = 35, double target_ratio = 0.4, double r = 1.5);

inline constexpr int kMinCoarsestSide = 8;

Pyramid build_pyramids(const ImageGrid& img, double r, int num_scales);

/// Per-channel rank-preserving quantile mapping of `source` onto the value
/// distribution of `reference`.
ImageGrid histogram_match(const ImageGrid& source, const ImageGrid& reference);

}  // namespace sinddm
