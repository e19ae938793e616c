#include "sinddm/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sinddm/error.hpp"
#include "sinddm/kernels.hpp"

namespace sinddm {

std::string to_string(PaddingMode m) { return m == PaddingMode::layer ? "layer" : "initial"; }

PaddingMode padding_mode_from_string(const std::string& s) {
  if (s == "layer") return PaddingMode::layer;
  if (s == "initial") return PaddingMode::initial;
  throw InvalidArgument("unknown padding mode '" + s + "'");
}

void DenoiserSpec::validate() const {
  if (blocks < 1) throw InvalidArgument("denoiser needs at least one block");
  if (convs_per_block < 1) throw InvalidArgument("denoiser blocks need at least one conv");
  if (hidden_width < 1 || time_embed_width < 1) throw InvalidArgument("denoiser widths must be positive");
  if (embed_dim < 4 || embed_dim % 2 != 0) throw InvalidArgument("embed_dim must be even and >= 4");
}

const ParamEntry& ParamLayout::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw InvalidArgument("no parameter named '" + name + "'");
}

namespace {

constexpr int kImageChannels = 3;

std::string conv_name(int b, int j) { return "block" + std::to_string(b) + ".conv" + std::to_string(j); }
std::string film_name(int b) { return "block" + std::to_string(b) + ".film"; }

}  // namespace

ParamLayout make_layout(const DenoiserSpec& spec) {
  spec.validate();
  ParamLayout layout;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    layout.entries.push_back({std::move(name), std::move(shape), layout.total, n});
    layout.total += n;
  };
  const int c = spec.hidden_width;
  const int e = spec.time_embed_width;
  add("embed.fc1.weight", {2 * spec.embed_dim, e});
  add("embed.fc1.bias", {e});
  add("embed.fc2.weight", {e, e});
  add("embed.fc2.bias", {e});
  add("head.weight", {3, 3, kImageChannels, c});
  add("head.bias", {c});
  for (int b = 0; b < spec.blocks; ++b) {
    for (int j = 0; j < spec.convs_per_block; ++j) {
      add(conv_name(b, j) + ".weight", {3, 3, c, c});
      add(conv_name(b, j) + ".bias", {c});
    }
    add(film_name(b) + ".weight", {e, 2 * c});
    add(film_name(b) + ".bias", {2 * c});
  }
  add("tail.weight", {1, 1, c, kImageChannels});
  add("tail.bias", {kImageChannels});
  return layout;
}

std::size_t count_params(const DenoiserSpec& spec) {
  spec.validate();
  const std::size_t c = spec.hidden_width;
  const std::size_t e = spec.time_embed_width;
  const std::size_t embed = 2 * spec.embed_dim * e + e + e * e + e;
  const std::size_t head = 9 * kImageChannels * c + c;
  const std::size_t convs = static_cast<std::size_t>(spec.blocks) * spec.convs_per_block * (9 * c * c + c);
  const std::size_t films = static_cast<std::size_t>(spec.blocks) * (e * 2 * c + 2 * c);
  const std::size_t tail = c * kImageChannels + kImageChannels;
  return embed + head + convs + films + tail;
}

std::vector<double> sinusoidal_embedding(int value, int dim) {
  const int half = dim / 2;
  std::vector<double> out(dim);
  const double scale = std::log(10000.0) / (half - 1);
  for (int i = 0; i < half; ++i) {
    const double arg = value * std::exp(-scale * i);
    out[i] = std::sin(arg);
    out[half + i] = std::cos(arg);
  }
  return out;
}

namespace {

template <class T>
void linear_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b, std::span<T> y) {
  const std::size_t out = y.size();
  for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T xi = x[i];
    const T* row = w.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += xi * row[o];
  }
}

// Accumulates dw, db; writes dx when non-empty.
template <class T>
void linear_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dy, std::span<T> dx,
                     std::span<T> dw, std::span<T> db) {
  const std::size_t out = dy.size();
  for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T* row = w.data() + i * out;
    T* drow = dw.data() + i * out;
    T acc = 0;
    for (std::size_t o = 0; o < out; ++o) {
      drow[o] += x[i] * dy[o];
      acc += row[o] * dy[o];
    }
    if (!dx.empty()) dx[i] = acc;
  }
}

// out = crop(src, border) + out, channel count `ch`.
template <class T>
void add_cropped(std::span<const T> src, Dims src_dims, int border, int ch, std::span<T> out) {
  const int oh = src_dims.h - 2 * border, ow = src_dims.w - 2 * border;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const T* s = src.data() + ((static_cast<std::size_t>(y + border) * src_dims.w) + x + border) * ch;
      T* o = out.data() + (static_cast<std::size_t>(y) * ow + x) * ch;
      for (int c = 0; c < ch; ++c) o[c] += s[c];
    }
}

// dst (src_dims) += pad(grad, border).
template <class T>
void add_uncropped(std::span<const T> grad, Dims src_dims, int border, int ch, std::span<T> dst) {
  const int oh = src_dims.h - 2 * border, ow = src_dims.w - 2 * border;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const T* g = grad.data() + (static_cast<std::size_t>(y) * ow + x) * ch;
      T* d = dst.data() + ((static_cast<std::size_t>(y + border) * src_dims.w) + x + border) * ch;
      for (int c = 0; c < ch; ++c) d[c] += g[c];
    }
}

template <class T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_grad_scalar(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  return cdf + x * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2) * std::exp(T(-0.5) * x * x);
}

std::size_t volume(Dims d, int ch) { return static_cast<std::size_t>(d.h) * d.w * ch; }

}  // namespace

template <class T>
Denoiser<T>::Denoiser(DenoiserSpec spec) : spec_(spec), layout_(make_layout(spec)), weights_(layout_.total, T(0)) {}

template <class T>
std::span<T> Denoiser<T>::param(const std::string& name) {
  const ParamEntry& e = layout_.find(name);
  return std::span<T>(weights_).subspan(e.offset, e.size);
}

template <class T>
void Denoiser<T>::set_weights(std::span<const T> w) {
  if (w.size() != weights_.size()) throw InvalidArgument("weight vector size mismatch");
  weights_.assign(w.begin(), w.end());
}

template <class T>
void Denoiser<T>::init(std::uint64_t seed, bool zero_output) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const ParamEntry& e : layout_.entries) {
    T* p = weights_.data() + e.offset;
    const bool is_bias = e.shape.size() == 1;
    if (is_bias || (zero_output && e.name == "tail.weight")) {
      std::fill(p, p + e.size, T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < e.shape.size(); ++d) fan_in *= e.shape[d];
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < e.size; ++i) p[i] = static_cast<T>(stddev * normal(engine));
  }
}

template <class T>
std::vector<T> Denoiser<T>::embed(int t, int s) const {
  const int e = spec_.time_embed_width;
  std::vector<T> e0(2 * spec_.embed_dim), h1(e), ts(e);
  const auto spe_t = sinusoidal_embedding(t, spec_.embed_dim);
  const auto spe_s = sinusoidal_embedding(s, spec_.embed_dim);
  for (int i = 0; i < spec_.embed_dim; ++i) {
    e0[i] = static_cast<T>(spe_t[i]);
    e0[spec_.embed_dim + i] = static_cast<T>(spe_s[i]);
  }
  auto w = std::span<const T>(weights_);
  const auto& fc1w = layout_.entries[0];
  const auto& fc1b = layout_.entries[1];
  const auto& fc2w = layout_.entries[2];
  const auto& fc2b = layout_.entries[3];
  linear_forward<T>(e0, w.subspan(fc1w.offset, fc1w.size), w.subspan(fc1b.offset, fc1b.size), h1);
  for (T& v : h1) v = gelu_scalar(v);
  linear_forward<T>(h1, w.subspan(fc2w.offset, fc2w.size), w.subspan(fc2b.offset, fc2b.size), ts);
  return ts;
}

template <class T>
std::vector<T> Denoiser<T>::forward(std::span<const T> x, Dims dims, int t, int s, Activations* cache) const {
  using namespace kernels;
  if (dims.h < 1 || dims.w < 1) throw InvalidArgument("denoiser input must be at least 1x1");
  if (x.size() != volume(dims, kImageChannels)) throw InvalidArgument("denoiser input size mismatch");

  const bool ref = backend_ == KernelBackend::reference;
  auto conv = [&](const ConvGeometry& g, std::span<const T> in, std::span<const T> w, std::span<const T> b,
                  std::span<T> out) {
    ref ? reference::conv2d_forward<T>(g, in, w, b, out) : parallel::conv2d_forward<T>(g, in, w, b, out);
  };
  auto gelu = [&](std::span<const T> in, std::span<T> out) {
    ref ? reference::gelu_forward<T>(in, out) : parallel::gelu_forward<T>(in, out);
  };
  const std::span<const T> w(weights_);
  auto view = [&](const std::string& name) {
    const ParamEntry& e = layout_.find(name);
    return w.subspan(e.offset, e.size);
  };

  const int c = spec_.hidden_width;
  const int cpb = spec_.convs_per_block;
  const bool initial = spec_.padding == PaddingMode::initial;
  const int pad = initial ? 0 : 1;

  Activations local;
  Activations& a = cache ? *cache : local;

  // Embedding MLP.
  const int e = spec_.time_embed_width;
  a.e0.assign(2 * spec_.embed_dim, T(0));
  {
    const auto spe_t = sinusoidal_embedding(t, spec_.embed_dim);
    const auto spe_s = sinusoidal_embedding(s, spec_.embed_dim);
    for (int i = 0; i < spec_.embed_dim; ++i) {
      a.e0[i] = static_cast<T>(spe_t[i]);
      a.e0[spec_.embed_dim + i] = static_cast<T>(spe_s[i]);
    }
  }
  a.h1.assign(e, T(0));
  a.g1.assign(e, T(0));
  a.ts.assign(e, T(0));
  linear_forward<T>(a.e0, view("embed.fc1.weight"), view("embed.fc1.bias"), a.h1);
  for (int i = 0; i < e; ++i) a.g1[i] = gelu_scalar(a.h1[i]);
  linear_forward<T>(a.g1, view("embed.fc2.weight"), view("embed.fc2.bias"), a.ts);

  a.film_in.assign(spec_.blocks, std::vector<T>(e));
  a.film.assign(spec_.blocks, std::vector<T>(2 * c));
  for (int b = 0; b < spec_.blocks; ++b) {
    for (int i = 0; i < e; ++i) a.film_in[b][i] = gelu_scalar(a.ts[i]);
    linear_forward<T>(a.film_in[b], view(film_name(b) + ".weight"), view(film_name(b) + ".bias"), a.film[b]);
  }

  // Head conv input (zero padded once by the receptive-field radius in initial mode).
  if (initial) {
    const int r = spec_.rf_radius();
    a.head_dims = {dims.h + 2 * r, dims.w + 2 * r};
    a.input.assign(volume(a.head_dims, kImageChannels), T(0));
    for (int y = 0; y < dims.h; ++y)
      std::copy_n(x.data() + static_cast<std::size_t>(y) * dims.w * kImageChannels, dims.w * kImageChannels,
                  a.input.data() + ((static_cast<std::size_t>(y + r) * a.head_dims.w) + r) * kImageChannels);
  } else {
    a.head_dims = dims;
    a.input.assign(x.begin(), x.end());
  }

  a.block_dims.assign(spec_.blocks + 1, {});
  a.block_in.assign(spec_.blocks + 1, {});
  a.conv_out.assign(spec_.blocks, std::vector<std::vector<T>>(cpb));
  a.modulated.assign(spec_.blocks, {});
  a.act.assign(spec_.blocks, std::vector<std::vector<T>>(cpb));

  ConvGeometry head{a.head_dims.h, a.head_dims.w, kImageChannels, c, 3, pad};
  a.block_dims[0] = {head.out_h(), head.out_w()};
  a.block_in[0].resize(head.out_size());
  conv(head, a.input, view("head.weight"), view("head.bias"), a.block_in[0]);

  const int inject = spec_.modulated_conv();
  for (int b = 0; b < spec_.blocks; ++b) {
    Dims d = a.block_dims[b];
    std::span<const T> in = a.block_in[b];
    for (int j = 0; j < cpb; ++j) {
      ConvGeometry g{d.h, d.w, c, c, 3, pad};
      if (g.out_h() < 1 || g.out_w() < 1) throw InvalidArgument("input too small for valid convolutions");
      auto& out = a.conv_out[b][j];
      out.resize(g.out_size());
      conv(g, in, view(conv_name(b, j) + ".weight"), view(conv_name(b, j) + ".bias"), out);
      d = {g.out_h(), g.out_w()};
      std::span<const T> pre = out;
      if (j == inject) {
        auto& m = a.modulated[b];
        m.resize(out.size());
        const T* scale = a.film[b].data();
        const T* shift = a.film[b].data() + c;
        const std::size_t px = out.size() / c;
        for (std::size_t p = 0; p < px; ++p)
          for (int k = 0; k < c; ++k) m[p * c + k] = out[p * c + k] * (T(1) + scale[k]) + shift[k];
        pre = m;
      }
      if (j + 1 < cpb) {
        a.act[b][j].resize(pre.size());
        gelu(pre, a.act[b][j]);
        in = a.act[b][j];
      } else {
        a.block_dims[b + 1] = d;
        a.block_in[b + 1].assign(pre.begin(), pre.end());
        add_cropped<T>(a.block_in[b], a.block_dims[b], initial ? cpb : 0, c, a.block_in[b + 1]);
      }
    }
  }

  const auto& trunk = a.block_in[spec_.blocks];
  a.trunk_act.resize(trunk.size());
  gelu(trunk, a.trunk_act);
  const Dims od = a.block_dims[spec_.blocks];
  ConvGeometry tail{od.h, od.w, c, kImageChannels, 1, 0};
  std::vector<T> y(tail.out_size());
  conv(tail, a.trunk_act, view("tail.weight"), view("tail.bias"), y);
  return y;
}

template <class T>
void Denoiser<T>::backward(const Activations& a, std::span<const T> dout, std::span<T> grad) const {
  using namespace kernels;
  if (grad.size() != weights_.size()) throw InvalidArgument("gradient buffer size mismatch");
  const bool ref = backend_ == KernelBackend::reference;
  auto conv_bwd = [&](const ConvGeometry& g, std::span<const T> in, std::span<const T> w, std::span<const T> d,
                      std::span<T> din, std::span<T> dw, std::span<T> db) {
    ref ? reference::conv2d_backward<T>(g, in, w, d, din, dw, db)
        : parallel::conv2d_backward<T>(g, in, w, d, din, dw, db);
  };
  auto gelu_bwd = [&](std::span<const T> in, std::span<const T> d, std::span<T> din) {
    ref ? reference::gelu_backward<T>(in, d, din) : parallel::gelu_backward<T>(in, d, din);
  };
  const std::span<const T> w(weights_);
  auto view = [&](const std::string& name) {
    const ParamEntry& e = layout_.find(name);
    return w.subspan(e.offset, e.size);
  };
  auto gview = [&](const std::string& name) {
    const ParamEntry& e = layout_.find(name);
    return grad.subspan(e.offset, e.size);
  };

  const int c = spec_.hidden_width;
  const int e = spec_.time_embed_width;
  const int cpb = spec_.convs_per_block;
  const bool initial = spec_.padding == PaddingMode::initial;
  const int pad = initial ? 0 : 1;
  const int inject = spec_.modulated_conv();

  // Tail.
  const Dims od = a.block_dims[spec_.blocks];
  ConvGeometry tail{od.h, od.w, c, kImageChannels, 1, 0};
  std::vector<T> d_act(a.trunk_act.size());
  conv_bwd(tail, a.trunk_act, view("tail.weight"), dout, d_act, gview("tail.weight"), gview("tail.bias"));
  std::vector<T> d_block(a.block_in[spec_.blocks].size());
  gelu_bwd(a.block_in[spec_.blocks], d_act, d_block);

  std::vector<T> d_ts(e, T(0));
  std::vector<T> d_film(2 * c);
  std::vector<T> d_film_in(e);
  for (int b = spec_.blocks - 1; b >= 0; --b) {
    const Dims din_dims = a.block_dims[b];
    // Residual path.
    std::vector<T> d_in(volume(din_dims, c), T(0));
    add_uncropped<T>(d_block, din_dims, initial ? cpb : 0, c, d_in);

    // Conv stack, last to first. `d_cur` is d(loss)/d(pre-activation output of conv j).
    std::vector<T> d_cur = d_block;
    std::fill(d_film.begin(), d_film.end(), T(0));
    for (int j = cpb - 1; j >= 0; --j) {
      if (j + 1 < cpb) {
        // d_cur holds d/d act[j]; map back through GeLU.
        const std::span<const T> pre = j == inject ? std::span<const T>(a.modulated[b]) : a.conv_out[b][j];
        std::vector<T> tmp(d_cur.size());
        gelu_bwd(pre, d_cur, tmp);
        d_cur.swap(tmp);
      }
      if (j == inject) {
        const auto& u = a.conv_out[b][j];
        const T* scale = a.film[b].data();
        const std::size_t px = u.size() / c;
        for (std::size_t p = 0; p < px; ++p)
          for (int k = 0; k < c; ++k) {
            const T dm = d_cur[p * c + k];
            d_film[k] += dm * u[p * c + k];
            d_film[c + k] += dm;
            d_cur[p * c + k] = dm * (T(1) + scale[k]);
          }
      }
      const Dims in_dims = [&] {
        if (!initial) return din_dims;
        return Dims{din_dims.h - 2 * j, din_dims.w - 2 * j};
      }();
      ConvGeometry g{in_dims.h, in_dims.w, c, c, 3, pad};
      const std::span<const T> in = j == 0 ? std::span<const T>(a.block_in[b]) : a.act[b][j - 1];
      std::vector<T> d_prev(in.size());
      conv_bwd(g, in, view(conv_name(b, j) + ".weight"), d_cur, d_prev, gview(conv_name(b, j) + ".weight"),
               gview(conv_name(b, j) + ".bias"));
      d_cur.swap(d_prev);
    }
    for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] += d_cur[i];
    d_block.swap(d_in);

    linear_backward<T>(a.film_in[b], view(film_name(b) + ".weight"), d_film, d_film_in,
                       gview(film_name(b) + ".weight"), gview(film_name(b) + ".bias"));
    for (int i = 0; i < e; ++i) d_ts[i] += d_film_in[i] * gelu_grad_scalar(a.ts[i]);
  }

  // Head conv; the image gradient is not needed.
  ConvGeometry head{a.head_dims.h, a.head_dims.w, kImageChannels, c, 3, pad};
  conv_bwd(head, a.input, view("head.weight"), d_block, {}, gview("head.weight"), gview("head.bias"));

  // Embedding MLP.
  std::vector<T> d_g1(e), d_h1(e);
  linear_backward<T>(a.g1, view("embed.fc2.weight"), d_ts, d_g1, gview("embed.fc2.weight"), gview("embed.fc2.bias"));
  for (int i = 0; i < e; ++i) d_h1[i] = d_g1[i] * gelu_grad_scalar(a.h1[i]);
  linear_backward<T>(a.e0, view("embed.fc1.weight"), d_h1, {}, gview("embed.fc1.weight"), gview("embed.fc1.bias"));
}

template <class T>
ImageGrid Denoiser<T>::predict_noise(const ImageGrid& x, int t, int s) const {
  if (x.channels() != kImageChannels) throw InvalidArgument("denoiser expects 3-channel input");
  x.require_finite("denoiser input");
  std::vector<T> in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in[i] = static_cast<T>(x[i]);
  const std::vector<T> y = forward(in, x.dims(), t, s);
  ImageGrid out(x.dims(), kImageChannels);
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<double>(y[i]);
  out.require_finite("denoiser output (training diverged?)");
  return out;
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace sinddm
