#pragma once

#include <vector>

#include "sinddm/image.hpp"

namespace sinddm {

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Sparse 1-D resampling operator: out[o] = sum_k weight[k] * in[index[k]]
/// for k in [offset[o], offset[o+1]). Downsampling widens the kernel by the
/// inverse scale (antialiasing); out-of-range taps replicate the edge sample.
struct AxisWeights {
  int in_size = 0;
  int out_size = 0;
  std::vector<int> offset;
  std::vector<int> index;
  std::vector<double> weight;

  static AxisWeights bicubic(int in_size, int out_size);
};

/// Bicubic resize followed by clamping to [-1, 1].
ImageGrid resize(const ImageGrid& img, Dims target);

/// Bicubic resize without clamping; a linear operator.
ImageGrid resize_linear(const ImageGrid& img, Dims target);

/// Adjoint of resize_linear: maps a gradient at `grad.dims()` back onto `source` dims.
ImageGrid resize_linear_adjoint(const ImageGrid& grad, Dims source);

/// Nearest-neighbour resize (masks).
ImageGrid resize_nearest(const ImageGrid& img, Dims target);

}  // namespace sinddm
