#include <omp.h>

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <type_traits>
#include <vector>

#include "sinddm/kernels.hpp"

namespace sinddm::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace parallel {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

// Pixels per work chunk; large enough to keep the GEMMs efficient.
constexpr int kChunkPixels = 2048;

struct RowChunks {
  int rows_per_chunk;
  int count;
};

RowChunks split_rows(int rows, int cols) {
  const int per = std::max(1, kChunkPixels / std::max(1, cols));
  return {per, (rows + per - 1) / per};
}

// Patch matrix for output rows [y0, y1): one row of k*k*in_c values per pixel.
template <class T>
void im2col(const ConvGeometry& g, std::span<const T> in, int y0, int y1, T* col) {
  const int ow = g.out_w();
  const std::size_t patch = g.patch_size();
  const std::size_t cbytes = sizeof(T) * g.in_c;
  for (int oy = y0; oy < y1; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col + (static_cast<std::size_t>(oy - y0) * ow + ox) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy - g.pad + ky;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox - g.pad + kx;
          T* dst = row + (static_cast<std::size_t>(ky) * g.k + kx) * g.in_c;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::memset(dst, 0, cbytes);
          } else {
            std::memcpy(dst, in.data() + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c, cbytes);
          }
        }
      }
    }
}

// Gather of output gradients feeding input rows [y0, y1): for input pixel
// (iy, ix) and tap (ky, kx) the contributing output is (iy+pad-ky, ix+pad-kx).
template <class T>
void gather_dout(const ConvGeometry& g, std::span<const T> dout, int y0, int y1, T* col) {
  const int oh = g.out_h(), ow = g.out_w();
  const std::size_t patch = static_cast<std::size_t>(g.k) * g.k * g.out_c;
  const std::size_t cbytes = sizeof(T) * g.out_c;
  for (int iy = y0; iy < y1; ++iy)
    for (int ix = 0; ix < g.in_w; ++ix) {
      T* row = col + (static_cast<std::size_t>(iy - y0) * g.in_w + ix) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int oy = iy + g.pad - ky;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ox = ix + g.pad - kx;
          T* dst = row + (static_cast<std::size_t>(ky) * g.k + kx) * g.out_c;
          if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) {
            std::memset(dst, 0, cbytes);
          } else {
            std::memcpy(dst, dout.data() + (static_cast<std::size_t>(oy) * ow + ox) * g.out_c, cbytes);
          }
        }
      }
    }
}

}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const int oh = g.out_h(), ow = g.out_w();
  const auto patch = static_cast<Eigen::Index>(g.patch_size());
  ConstMapMatrix<T> w(weight.data(), patch, g.out_c);
  const bool pointwise = g.k == 1 && g.pad == 0;
  const RowChunks chunks = split_rows(oh, ow);

#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(static)
    for (int c = 0; c < chunks.count; ++c) {
      const int y0 = c * chunks.rows_per_chunk;
      const int y1 = std::min(oh, y0 + chunks.rows_per_chunk);
      const Eigen::Index px = static_cast<Eigen::Index>(y1 - y0) * ow;
      const T* src = nullptr;
      if (pointwise) {
        src = in.data() + static_cast<std::size_t>(y0) * ow * g.in_c;
      } else {
        col.resize(static_cast<std::size_t>(px) * patch);
        im2col(g, in, y0, y1, col.data());
        src = col.data();
      }
      MapMatrix<T> o(out.data() + static_cast<std::size_t>(y0) * ow * g.out_c, px, g.out_c);
      o.noalias() = ConstMapMatrix<T>(src, px, patch) * w;
      if (!bias.empty()) {
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), g.out_c);
        o.rowwise() += b;
      }
    }
  }
}

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> din, std::span<T> dweight, std::span<T> dbias) {
  const int oh = g.out_h(), ow = g.out_w();
  const auto patch = static_cast<Eigen::Index>(g.patch_size());
  const bool pointwise = g.k == 1 && g.pad == 0;

  // Weight and bias gradients: per-chunk partials reduced in chunk order so the
  // result does not depend on the thread count.
  const RowChunks chunks = split_rows(oh, ow);
  std::vector<RowMatrix<T>> partial_w(chunks.count);
  std::vector<Eigen::Matrix<T, 1, Eigen::Dynamic>> partial_b(chunks.count);
#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(static)
    for (int c = 0; c < chunks.count; ++c) {
      const int y0 = c * chunks.rows_per_chunk;
      const int y1 = std::min(oh, y0 + chunks.rows_per_chunk);
      const Eigen::Index px = static_cast<Eigen::Index>(y1 - y0) * ow;
      const T* src = nullptr;
      if (pointwise) {
        src = in.data() + static_cast<std::size_t>(y0) * ow * g.in_c;
      } else {
        col.resize(static_cast<std::size_t>(px) * patch);
        im2col(g, in, y0, y1, col.data());
        src = col.data();
      }
      ConstMapMatrix<T> d(dout.data() + static_cast<std::size_t>(y0) * ow * g.out_c, px, g.out_c);
      partial_w[c].noalias() = ConstMapMatrix<T>(src, px, patch).transpose() * d;
      partial_b[c] = d.colwise().sum();
    }
  }
  MapMatrix<T> dw(dweight.data(), patch, g.out_c);
  for (int c = 0; c < chunks.count; ++c) {
    dw += partial_w[c];
    if (!dbias.empty()) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(dbias.data(), g.out_c) += partial_b[c];
    }
  }

  if (din.empty()) return;

  // Input gradient as a correlation of dout with the tap-transposed kernel.
  const std::size_t taps = static_cast<std::size_t>(g.k) * g.k;
  const auto dpatch = static_cast<Eigen::Index>(taps * g.out_c);
  RowMatrix<T> wt(dpatch, g.in_c);
  for (std::size_t tap = 0; tap < taps; ++tap)
    for (int ci = 0; ci < g.in_c; ++ci)
      for (int co = 0; co < g.out_c; ++co)
        wt(static_cast<Eigen::Index>(tap * g.out_c + co), ci) = weight[(tap * g.in_c + ci) * g.out_c + co];

  const RowChunks in_chunks = split_rows(g.in_h, g.in_w);
#pragma omp parallel
  {
    std::vector<T> col;
#pragma omp for schedule(static)
    for (int c = 0; c < in_chunks.count; ++c) {
      const int y0 = c * in_chunks.rows_per_chunk;
      const int y1 = std::min(g.in_h, y0 + in_chunks.rows_per_chunk);
      const Eigen::Index px = static_cast<Eigen::Index>(y1 - y0) * g.in_w;
      MapMatrix<T> di(din.data() + static_cast<std::size_t>(y0) * g.in_w * g.in_c, px, g.in_c);
      if (pointwise) {
        ConstMapMatrix<T> d(dout.data() + static_cast<std::size_t>(y0) * ow * g.out_c, px, g.out_c);
        di.noalias() = d * wt;
      } else {
        col.resize(static_cast<std::size_t>(px) * dpatch);
        gather_dout(g, dout, y0, y1, col.data());
        di.noalias() = ConstMapMatrix<T>(col.data(), px, dpatch) * wt;
      }
    }
  }
}

// Float uses Eigen's vectorized erf; its double erf is slower than libm.
constexpr std::ptrdiff_t kEltBlock = 4096;

// Aligned copy padded to a whole number of packets. Eigen evaluates the tail
// and unaligned head of a buffer with scalar std::erf, so without this the
// result for an element would depend on where the buffer sits in memory.
inline Eigen::ArrayXf padded_block(const float* src, std::ptrdiff_t len) {
  constexpr std::ptrdiff_t kPad = 16;
  Eigen::ArrayXf a = Eigen::ArrayXf::Zero((len + kPad - 1) / kPad * kPad);
  std::copy_n(src, len, a.data());
  return a;
}

template <class T>
void gelu_forward(std::span<const T> in, std::span<T> out) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
  const T rs2 = T(std::numbers::sqrt2 / 2);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n; b += kEltBlock) {
    const std::ptrdiff_t len = std::min(kEltBlock, n - b);
    if constexpr (std::is_same_v<T, float>) {
      Eigen::ArrayXf x = padded_block(in.data() + b, len);
      const Eigen::ArrayXf y = 0.5f * x * (1.0f + (x * rs2).erf());
      std::copy_n(y.data(), len, out.data() + b);
    } else {
      for (std::ptrdiff_t i = b; i < b + len; ++i) out[i] = T(0.5) * in[i] * (T(1) + std::erf(in[i] * rs2));
    }
  }
}

template <class T>
void gelu_backward(std::span<const T> in, std::span<const T> dout, std::span<T> din) {
  const T inv_sqrt_2pi = T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  const T rs2 = T(std::numbers::sqrt2 / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n; b += kEltBlock) {
    const std::ptrdiff_t len = std::min(kEltBlock, n - b);
    if constexpr (std::is_same_v<T, float>) {
      const Eigen::ArrayXf x = padded_block(in.data() + b, len);
      const Eigen::ArrayXf d = padded_block(dout.data() + b, len);
      const Eigen::ArrayXf y =
          d * (0.5f * (1.0f + (x * rs2).erf()) + x * inv_sqrt_2pi * (-0.5f * x.square()).exp());
      std::copy_n(y.data(), len, din.data() + b);
    } else {
      for (std::ptrdiff_t i = b; i < b + len; ++i) {
        const T x = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * rs2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        din[i] = dout[i] * (cdf + x * pdf);
      }
    }
  }
}

#define SINDDM_INSTANTIATE(T)                                                                          \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,         \
                                  std::span<const T>, std::span<T>);                                   \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,        \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);      \
  template void gelu_forward<T>(std::span<const T>, std::span<T>);                                     \
  template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);

SINDDM_INSTANTIATE(float)
SINDDM_INSTANTIATE(double)
#undef SINDDM_INSTANTIATE

}  // namespace parallel
}  // namespace sinddm::kernels
