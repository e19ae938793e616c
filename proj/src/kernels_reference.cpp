#include <cmath>
#include <numbers>

#include "sinddm/kernels.hpp"

namespace sinddm::kernels::reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < g.out_c; ++co) {
        T acc = bias.empty() ? T(0) : bias[co];
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            for (int ci = 0; ci < g.in_c; ++ci) {
              acc += in[(static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c + ci] *
                     weight[((static_cast<std::size_t>(ky) * g.k + kx) * g.in_c + ci) * g.out_c + co];
            }
          }
        }
        out[(static_cast<std::size_t>(oy) * ow + ox) * g.out_c + co] = acc;
      }
}

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> dout, std::span<T> din, std::span<T> dweight, std::span<T> dbias) {
  const int oh = g.out_h(), ow = g.out_w();
  for (T& v : din) v = T(0);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < g.out_c; ++co) {
        const T d = dout[(static_cast<std::size_t>(oy) * ow + ox) * g.out_c + co];
        if (!dbias.empty()) dbias[co] += d;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            for (int ci = 0; ci < g.in_c; ++ci) {
              const std::size_t ii = (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c + ci;
              const std::size_t wi = ((static_cast<std::size_t>(ky) * g.k + kx) * g.in_c + ci) * g.out_c + co;
              dweight[wi] += d * in[ii];
              if (!din.empty()) din[ii] += d * weight[wi];
            }
          }
        }
      }
}

template <class T>
void gelu_forward(std::span<const T> in, std::span<T> out) {
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = T(0.5) * in[i] * (T(1) + std::erf(in[i] * T(std::numbers::sqrt2 / 2)));
}

template <class T>
void gelu_backward(std::span<const T> in, std::span<const T> dout, std::span<T> din) {
  const T inv_sqrt_2pi = T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
    din[i] = dout[i] * (cdf + x * pdf);
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

}  // namespace sinddm::kernels::reference
