#include "sinddm/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sinddm/error.hpp"
#include "sinddm/json_io.hpp"
#include "sinddm/resample.hpp"

namespace sinddm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) throw NumericalError("cannot normalize a zero embedding");
  for (double& x : v) x /= n;
}

ImageGrid flip_horizontal(const ImageGrid& img) {
  ImageGrid out(img.dims(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
  return out;
}

void require_native(const Embedder& e, const ImageGrid& img) {
  if (img.dims() != e.native_size() || img.channels() != 3) {
    throw InvalidArgument(e.name() + " expects " + to_string(e.native_size()) + " RGB input, got " +
                          to_string(img.dims()));
  }
}

}  // namespace

LinearStubEmbedder::LinearStubEmbedder(Dims native, int dim, std::uint64_t seed)
    : native_(native), dim_(dim), seed_(seed) {
  if (native.h < 1 || native.w < 1 || dim < 1) throw InvalidArgument("invalid stub embedder geometry");
  const std::size_t n = static_cast<std::size_t>(native.h) * native.w * 3;
  Rng rng(derive_seed(seed, 0));
  proj_.resize(static_cast<std::size_t>(dim) * n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& v : proj_) v = scale * rng.normal();
}

std::vector<double> LinearStubEmbedder::embed_text(const std::string& text) const {
  Rng rng(derive_seed(seed_, fnv1a64(text.data(), text.size())));
  std::vector<double> v(dim_);
  for (double& x : v) x = rng.normal();
  normalize(v);
  return v;
}

std::vector<double> LinearStubEmbedder::project(const ImageGrid& img) const {
  require_native(*this, img);
  const std::size_t n = img.size();
  std::vector<double> u(dim_, 0.0);
  for (int k = 0; k < dim_; ++k) u[k] = dot(std::span<const double>(proj_).subspan(k * n, n), img.data());
  return u;
}

std::vector<double> LinearStubEmbedder::embed_image(const ImageGrid& img) const {
  std::vector<double> u = project(img);
  normalize(u);
  return u;
}

ImageGrid LinearStubEmbedder::embed_image_vjp(const ImageGrid& img, std::span<const double> g) const {
  if (static_cast<int>(g.size()) != dim_) throw InvalidArgument("embedding cotangent has the wrong size");
  const std::vector<double> u = project(img);
  const double norm = std::sqrt(dot(u, u));
  if (!(norm > 0.0)) throw NumericalError("stub embedder: zero projection");
  // d(u/|u|) = (I - e e^T) du / |u|
  double eg = 0.0;
  for (int k = 0; k < dim_; ++k) eg += u[k] / norm * g[k];
  ImageGrid out(img.dims(), 3);
  const std::size_t n = img.size();
  for (int k = 0; k < dim_; ++k) {
    const double du = (g[k] - u[k] / norm * eg) / norm;
    const double* row = proj_.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) out[i] += du * row[i];
  }
  return out;
}

ConstantEmbedder::ConstantEmbedder(std::string text, Dims native, int dim, std::uint64_t seed)
    : text_model_(native, dim, seed), fixed_(text_model_.embed_text(text)) {}

std::vector<double> ConstantEmbedder::embed_image(const ImageGrid& img) const {
  require_native(*this, img);
  return fixed_;
}

ImageGrid ConstantEmbedder::embed_image_vjp(const ImageGrid& img, std::span<const double>) const {
  require_native(*this, img);
  return ImageGrid(img.dims(), 3);
}

std::unique_ptr<Embedder> make_embedder(const std::string& name, const std::string& prompt) {
  if (name == "stub-linear") return std::make_unique<LinearStubEmbedder>();
  if (name == "stub-constant") return std::make_unique<ConstantEmbedder>(prompt);
  throw InvalidArgument("unknown embedder '" + name + "' (available: stub-linear, stub-constant)");
}

std::vector<std::string> text_templates(bool low_resolution) {
  if (!low_resolution) return {"{}", "a photo of {}.", "an image of {}.", "the {}."};
  return {"photo of {}.",
          "low quality photo of {}.",
          "low resolution photo of {}.",
          "low-res photo of {}.",
          "blurry photo of {}.",
          "pixelated photo of {}.",
          "a photo of {}.",
          "the photo of {}.",
          "image of {}.",
          "an image of {}.",
          "low quality image of {}.",
          "a low quality image of {}.",
          "low resolution image of {}.",
          "a low resolution image of {}.",
          "low-res image of {}.",
          "a low-res image of {}.",
          "blurry image of {}.",
          "a blurry image of {}.",
          "pixelated image of {}.",
          "a pixelated image of {}.",
          "the {}.",
          "a {}.",
          "{}.",
          "{}",
          "{}!",
          "{}..."};
}

std::vector<std::string> expand_prompt(const std::string& prompt, bool low_resolution) {
  std::vector<std::string> out;
  for (const std::string& t : text_templates(low_resolution)) {
    const auto at = t.find("{}");
    out.push_back(t.substr(0, at) + prompt + t.substr(at + 2));
  }
  return out;
}

ClipResult clip_loss_and_grad(const Embedder& embedder, const ImageGrid& img, const std::string& prompt,
                              const AugmentConfig& aug, Rng& rng, bool low_resolution_templates) {
  if (prompt.empty()) throw InvalidArgument("text guidance needs a non-empty prompt");
  if (aug.crops < 1) throw InvalidArgument("at least one augmented crop is required");
  if (!(aug.min_crop > 0.0 && aug.min_crop <= 1.0)) throw InvalidArgument("min_crop must lie in (0, 1]");

  std::vector<double> text_mean(embedder.dim(), 0.0);
  const auto texts = expand_prompt(prompt, low_resolution_templates);
  for (const std::string& t : texts) {
    const auto e = embedder.embed_text(t);
    for (int k = 0; k < embedder.dim(); ++k) text_mean[k] += e[k] / static_cast<double>(texts.size());
  }

  const Dims native = embedder.native_size();
  const int h = img.height(), w = img.width();
  ClipResult res{0.0, ImageGrid(img.dims(), img.channels())};
  std::vector<double> cot(embedder.dim());
  for (int k = 0; k < embedder.dim(); ++k) cot[k] = -text_mean[k] / aug.crops;

  for (int a = 0; a < aug.crops; ++a) {
    const Dims cd{std::max(1, static_cast<int>(std::lround(h * (aug.min_crop + (1.0 - aug.min_crop) * rng.uniform())))),
                  std::max(1, static_cast<int>(std::lround(w * (aug.min_crop + (1.0 - aug.min_crop) * rng.uniform()))))};
    const int y0 = rng.uniform_int(0, h - cd.h);
    const int x0 = rng.uniform_int(0, w - cd.w);
    const bool flip = aug.flips && rng.uniform() < 0.5;

    ImageGrid view = crop(img, y0, x0, cd);
    if (flip) view = flip_horizontal(view);
    const ImageGrid nat = resize_linear(view, native);
    const auto e = embedder.embed_image(nat);
    res.loss += (1.0 - dot(e, text_mean)) / aug.crops;

    ImageGrid g = resize_linear_adjoint(embedder.embed_image_vjp(nat, cot), cd);
    if (flip) g = flip_horizontal(g);
    for (int y = 0; y < cd.h; ++y)
      for (int x = 0; x < cd.w; ++x)
        for (int c = 0; c < img.channels(); ++c) res.grad.at(y0 + y, x0 + x, c) += g.at(y, x, c);
  }
  res.grad.require_finite("text guidance gradient");
  return res;
}

ImageGrid quantile_mask(const ImageGrid& grad, double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("fill factor must lie in [0, 1]");
  const std::size_t px = grad.pixels();
  std::vector<double> sal(px, 0.0);
  for (std::size_t p = 0; p < px; ++p) {
    double s = 0.0;
    for (int c = 0; c < grad.channels(); ++c) s += grad[p * grad.channels() + c] * grad[p * grad.channels() + c];
    sal[p] = std::sqrt(s);
  }
  std::vector<std::size_t> order(px);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sal[a] > sal[b]; });
  const auto k = std::min<std::size_t>(px, static_cast<std::size_t>(std::llround(f * static_cast<double>(px))));
  ImageGrid mask(grad.dims(), 1);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1.0;
  return mask;
}

ImageGrid resize_mask(const ImageGrid& mask, Dims target) {
  ImageGrid out = resize_nearest(mask, target);
  for (double& v : out.data()) v = v >= 0.5 ? 1.0 : 0.0;
  return out;
}

namespace {

void require_mask(const ImageGrid& img, const ImageGrid& mask, const char* what) {
  if (mask.dims() != img.dims() || mask.channels() != 1)
    throw InvalidArgument(std::string(what) + ": mask must be a one-channel grid of the image's dims");
}

}  // namespace

ImageGrid roi_update(const ImageGrid& x0_hat, const ImageGrid& target, const ImageGrid& mask, double eta) {
  require_same_shape(x0_hat, target, "roi_update target");
  require_mask(x0_hat, mask, "roi_update");
  ImageGrid out = x0_hat;
  const int ch = x0_hat.channels();
  for (std::size_t p = 0; p < x0_hat.pixels(); ++p) {
    if (mask[p] == 0.0) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      out[i] = (1.0 - eta) * x0_hat[i] + eta * target[i];
    }
  }
  return out;
}

ImageGrid clip_update(const ImageGrid& x0_hat, const ImageGrid& x0_prev, const ImageGrid& grad, const ImageGrid& mask,
                      double eta, double lambda, bool descent_variant) {
  require_same_shape(x0_hat, x0_prev, "clip_update previous estimate");
  require_same_shape(x0_hat, grad, "clip_update gradient");
  require_mask(x0_hat, mask, "clip_update");
  const int ch = x0_hat.channels();
  double xn = 0.0, gn = 0.0;
  for (std::size_t p = 0; p < x0_hat.pixels(); ++p) {
    if (mask[p] == 0.0) continue;
    for (int c = 0; c < ch; ++c) {
      xn += x0_hat[p * ch + c] * x0_hat[p * ch + c];
      gn += grad[p * ch + c] * grad[p * ch + c];
    }
  }
  const bool active = gn > 0.0;
  const double delta = active ? std::sqrt(xn) / std::sqrt(gn) : 0.0;
  ImageGrid out(x0_hat.dims(), ch);
  for (std::size_t p = 0; p < x0_hat.pixels(); ++p)
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      if (mask[p] != 0.0) {
        if (!active) {
          out[i] = x0_hat[i];
        } else {
          out[i] = descent_variant ? x0_hat[i] - eta * delta * grad[i] : eta * delta * grad[i];
        }
      } else {
        out[i] = lambda * x0_hat[i] + (1.0 - lambda) * x0_prev[i];
      }
    }
  return out;
}

std::string to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::content: return "content";
    case GuidanceMode::style: return "style";
    case GuidanceMode::roi_text: return "roi-text";
    case GuidanceMode::image_roi: return "image-roi";
  }
  return "content";
}

GuidanceMode guidance_mode_from_string(const std::string& s) {
  if (s == "content") return GuidanceMode::content;
  if (s == "style") return GuidanceMode::style;
  if (s == "roi-text") return GuidanceMode::roi_text;
  if (s == "image-roi") return GuidanceMode::image_roi;
  throw InvalidArgument("unknown guidance mode '" + s + "' (content, style, roi-text, image-roi)");
}

RoiRect scale_rect(const RoiRect& r, Dims from, Dims to) {
  const double sy = static_cast<double>(to.h) / from.h, sx = static_cast<double>(to.w) / from.w;
  RoiRect o;
  o.y = std::clamp(static_cast<int>(std::lround(r.y * sy)), 0, to.h - 1);
  o.x = std::clamp(static_cast<int>(std::lround(r.x * sx)), 0, to.w - 1);
  o.h = std::clamp(static_cast<int>(std::lround(r.h * sy)), 1, to.h - o.y);
  o.w = std::clamp(static_cast<int>(std::lround(r.w * sx)), 1, to.w - o.x);
  return o;
}

ImageGrid rect_mask(Dims dims, std::span<const RoiRect> rects) {
  ImageGrid m(dims, 1);
  for (const RoiRect& r : rects)
    for (int y = std::max(0, r.y); y < std::min(dims.h, r.y + r.h); ++y)
      for (int x = std::max(0, r.x); x < std::min(dims.w, r.x + r.w); ++x) m.at(y, x, 0) = 1.0;
  return m;
}

RoiTarget paste_target(const ImageGrid& source, Dims out_dims, int y, int x) {
  if (y < 0 || x < 0 || y + source.height() > out_dims.h || x + source.width() > out_dims.w)
    throw InvalidArgument("pasted region " + to_string(source.dims()) + " does not fit in " + to_string(out_dims));
  RoiTarget t{ImageGrid(out_dims, source.channels()), ImageGrid(out_dims, 1)};
  for (int yy = 0; yy < source.height(); ++yy)
    for (int xx = 0; xx < source.width(); ++xx) {
      for (int c = 0; c < source.channels(); ++c) t.target.at(y + yy, x + xx, c) = source.at(yy, xx, c);
      t.mask.at(y + yy, x + xx, 0) = 1.0;
    }
  return t;
}

void validate_guidance(const GuidanceConfig& g, const Sampler& sampler, const Embedder* embedder) {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0, 1]");
  };
  unit(g.f, "fill factor f");
  unit(g.eta, "strength eta");
  unit(g.lambda, "momentum lambda");
  const int n = sampler.num_scales();
  if (g.start_scale < 0 || g.start_scale >= n) throw InvalidArgument("start_scale must lie in [0, N-1]");
  if (g.free_final_steps < 0) throw InvalidArgument("free_final_steps must be non-negative");
  const Dims out = sample_dims(sampler.train_dims(), sampler.r(), g.sample.out_dims, g.sample.init_dims_scale).back();
  if (g.text_mode()) {
    if (!embedder) throw InvalidArgument(to_string(g.mode) + " guidance needs an embedder");
    if (g.prompt.empty()) throw InvalidArgument(to_string(g.mode) + " guidance needs a prompt");
    if (g.aug.crops < 1 || !(g.aug.min_crop > 0.0 && g.aug.min_crop <= 1.0))
      throw InvalidArgument("invalid augmentation settings");
  }
  if (g.mode == GuidanceMode::roi_text) {
    if (g.roi.empty()) throw InvalidArgument("roi-text guidance needs at least one ROI rectangle");
    for (const RoiRect& r : g.roi)
      if (r.h < 1 || r.w < 1 || r.y < 0 || r.x < 0 || r.y + r.h > out.h || r.x + r.w > out.w)
        throw InvalidArgument("ROI rectangle lies outside the " + to_string(out) + " output");
  } else if (!g.roi.empty()) {
    throw InvalidArgument("ROI rectangles are only used by roi-text guidance");
  }
  if (g.mode == GuidanceMode::image_roi) {
    if (!g.target || !g.target_mask) throw InvalidArgument("image-roi guidance needs a target image and mask");
    if (g.target->dims() != out || g.target_mask->dims() != out || g.target_mask->channels() != 1)
      throw InvalidArgument("image-roi target and mask must match the " + to_string(out) + " output");
  } else if (g.target || g.target_mask) {
    throw InvalidArgument("target images are only used by image-roi guidance");
  }
}

ReverseRun guided_run_settings(const Sampler& sampler, const GuidanceConfig& gcfg) {
  ReverseRun run = sampler.make_run(gcfg.sample);
  if (gcfg.text_mode()) {
    run.zero_gamma_all = true;
    run.sigma_mode = SigmaMode::ddpm_all_scales;
  }
  return run;
}

namespace {

constexpr std::uint64_t kAugmentStream = 0x61756;

std::size_t count_ones(const ImageGrid& m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](double v) { return v != 0.0; }));
}

class GuidanceHooks : public SamplerHooks {
 public:
  GuidanceHooks(const GuidanceConfig& g, const Embedder* e, Dims out_dims, GuidanceTrace* trace)
      : g_(g), embedder_(e), trace_(trace), aug_rng_(derive_seed(g.aug_seed, kAugmentStream)), out_dims_(out_dims) {}

  void on_x0(const StepInfo& info, ImageGrid& x0) override {
    if (info.t == info.t_start || prev_.dims() != x0.dims()) prev_ = x0;
    if (g_.mode == GuidanceMode::image_roi) {
      if (info.s < info.num_scales - 1) roi_step(info, x0);
    } else if (text_guided(info)) {
      text_step(info, x0);
    }
    prev_ = x0;
  }

 private:
  bool text_guided(const StepInfo& info) const {
    const bool finest = info.s == info.num_scales - 1;
    if (finest && info.t <= g_.free_final_steps) return false;
    if (g_.mode == GuidanceMode::style) return finest;
    if (info.s < g_.start_scale) return false;
    if (info.s == 0) return info.t <= info.t_start - info.T / 2;
    return true;
  }

  void record(GuidanceEvent::Kind kind, const StepInfo& info, const ImageGrid& mask) {
    if (trace_) trace_->events.push_back({kind, info.s, info.t, count_ones(mask)});
  }

  void roi_step(const StepInfo& info, ImageGrid& x0) {
    if (roi_scale_ != info.s) {
      // Mask-normalized downsampling keeps outside-ROI zeros from bleeding into the target.
      const ImageGrid& full_mask = *g_.target_mask;
      ImageGrid weighted = *g_.target;
      for (std::size_t p = 0; p < weighted.pixels(); ++p)
        for (int c = 0; c < weighted.channels(); ++c) weighted[p * weighted.channels() + c] *= full_mask[p];
      const ImageGrid num = resize_linear(weighted, x0.dims());
      const ImageGrid den = resize_linear(full_mask, x0.dims());
      roi_mask_ = resize_mask(full_mask, x0.dims());
      roi_target_ = ImageGrid(x0.dims(), x0.channels());
      for (std::size_t p = 0; p < roi_target_.pixels(); ++p)
        for (int c = 0; c < roi_target_.channels(); ++c)
          roi_target_[p * roi_target_.channels() + c] =
              den[p] > 1e-6 ? std::clamp(num[p * num.channels() + c] / den[p], -1.0, 1.0) : 0.0;
      roi_scale_ = info.s;
      record(GuidanceEvent::Kind::mask_created, info, roi_mask_);
    }
    x0 = roi_update(x0, roi_target_, roi_mask_, g_.eta);
    record(GuidanceEvent::Kind::roi_update, info, roi_mask_);
  }

  ImageGrid text_gradient(const ImageGrid& x0, Dims out_dims) {
    if (g_.mode != GuidanceMode::roi_text)
      return clip_loss_and_grad(*embedder_, x0, g_.prompt, g_.aug, aug_rng_, false).grad;
    ImageGrid grad(x0.dims(), x0.channels());
    for (const RoiRect& full : g_.roi) {
      const RoiRect r = scale_rect(full, out_dims, x0.dims());
      const ImageGrid view = crop(x0, r.y, r.x, {r.h, r.w});
      const ImageGrid g = clip_loss_and_grad(*embedder_, view, g_.prompt, g_.aug, aug_rng_, true).grad;
      for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
          for (int c = 0; c < x0.channels(); ++c) grad.at(r.y + y, r.x + x, c) += g.at(y, x, c) / g_.roi.size();
    }
    return grad;
  }

  ImageGrid roi_rect_mask(Dims dims) const {
    std::vector<RoiRect> rects;
    for (const RoiRect& r : g_.roi) rects.push_back(scale_rect(r, out_dims_, dims));
    return rect_mask(dims, rects);
  }

  void text_step(const StepInfo& info, ImageGrid& x0) {
    const ImageGrid grad = text_gradient(x0, out_dims_);
    if (mask_.empty()) {
      switch (g_.mode) {
        case GuidanceMode::content: mask_ = quantile_mask(grad, g_.f); break;
        case GuidanceMode::style: mask_ = ImageGrid(x0.dims(), 1, 1.0); break;
        case GuidanceMode::roi_text: mask_ = roi_rect_mask(x0.dims()); break;
        case GuidanceMode::image_roi: break;
      }
      record(GuidanceEvent::Kind::mask_created, info, mask_);
    } else if (mask_.dims() != x0.dims()) {
      // Rectangles are re-rasterized exactly; saliency masks are upsampled.
      mask_ = g_.mode == GuidanceMode::roi_text ? roi_rect_mask(x0.dims()) : resize_mask(mask_, x0.dims());
      record(GuidanceEvent::Kind::mask_upsampled, info, mask_);
    }
    x0 = clip_update(x0, prev_, grad, mask_, g_.eta, g_.lambda, g_.descent_variant);
    record(GuidanceEvent::Kind::clip_update, info, mask_);
  }

  const GuidanceConfig& g_;
  const Embedder* embedder_;
  GuidanceTrace* trace_;
  Rng aug_rng_;
  Dims out_dims_;
  ImageGrid prev_;
  ImageGrid mask_;
  int roi_scale_ = -1;
  ImageGrid roi_mask_, roi_target_;
};

}  // namespace

ImageGrid guided_run(const Sampler& sampler, const ReverseRun& run, const GuidanceConfig& gcfg,
                     const Embedder* embedder, GuidanceTrace* trace) {
  validate_guidance(gcfg, sampler, embedder);
  if (static_cast<int>(run.dims.size()) != sampler.num_scales())
    throw InvalidArgument("reverse run does not cover every scale");
  GuidanceHooks hooks(gcfg, embedder, run.dims.back(), trace);
  return sampler.run(run, &hooks);
}

ImageGrid guided_sample(const Sampler& sampler, const GuidanceConfig& gcfg, const Embedder* embedder,
                        GuidanceTrace* trace) {
  validate_guidance(gcfg, sampler, embedder);
  return guided_run(sampler, guided_run_settings(sampler, gcfg), gcfg, embedder, trace);
}

}  // namespace sinddm
