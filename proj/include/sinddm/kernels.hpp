#pragma once

// Convolution and activation kernels on single NHWC images.
//
// Two implementations share one contract: `reference` is straightforward
// serial loops kept as the test oracle, `parallel` is the im2col + GEMM path
// with OpenMP over row chunks used by the network. Weights are laid out as
// [ky][kx][c_in][c_out], i.e. a (k*k*c_in) x c_out row-major matrix.

#include <cstddef>
#include <span>

namespace sinddm::kernels {

struct ConvGeometry {
  int in_h = 0;
  int in_w = 0;
  int in_c = 0;
  int out_c = 0;
  int k = 3;
  int pad = 1;

  int out_h() const { return in_h + 2 * pad - k + 1; }
  int out_w() const { return in_w + 2 * pad - k + 1; }
  std::size_t in_size() const { return static_cast<std::size_t>(in_h) * in_w * in_c; }
  std::size_t out_size() const { return static_cast<std::size_t>(out_h()) * out_w() * out_c; }
  std::size_t weight_size() const { return static_cast<std::size_t>(k) * k * in_c * out_c; }
  std::size_t patch_size() const { return static_cast<std::size_t>(k) * k * in_c; }
};

namespace reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);

/// din is overwritten (skipped when empty); dweight and dbias accumulate.
template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> din, std::span<T> dweight, std::span<T> dbias);

template <class T>
void gelu_forward(std::span<const T> in, std::span<T> out);

/// din = dout * gelu'(in).
template <class T>
void gelu_backward(std::span<const T> in, std::span<const T> dout, std::span<T> din);

}  // namespace reference

namespace parallel {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> din, std::span<T> dweight, std::span<T> dbias);

template <class T>
void gelu_forward(std::span<const T> in, std::span<T> out);

template <class T>
void gelu_backward(std::span<const T> in, std::span<const T> dout, std::span<T> din);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace sinddm::kernels
