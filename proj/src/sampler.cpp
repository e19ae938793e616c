#include "sinddm/sampler.hpp"

#include <cmath>

#include "sinddm/error.hpp"
#include "sinddm/pyramid.hpp"
#include "sinddm/resample.hpp"

namespace sinddm {

namespace {

constexpr std::uint64_t kSamplerStream = 0x5a3d;

}  // namespace

X0Estimate estimate_x0(const ImageGrid& x_t, const ImageGrid& eps_hat, double alpha_bar_t, double gamma,
                       const ImageGrid& x_blur) {
  require_same_shape(x_t, eps_hat, "estimate_x0 noise estimate");
  if (!(gamma < 1.0)) throw InvalidArgument("estimate_x0 requires gamma < 1");
  if (!(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0)) throw InvalidArgument("estimate_x0 requires 0 < alpha_bar <= 1");
  if (gamma != 0.0) require_same_shape(x_t, x_blur, "estimate_x0 blur reference");

  const double sa = std::sqrt(alpha_bar_t);
  const double sn = std::sqrt(1.0 - alpha_bar_t);
  X0Estimate out{ImageGrid(x_t.dims(), x_t.channels()), ImageGrid(x_t.dims(), x_t.channels())};
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double mix = (x_t[i] - sn * eps_hat[i]) / sa;
    out.mix[i] = mix;
    out.x0[i] = gamma == 0.0 ? mix : (mix - gamma * x_blur[i]) / (1.0 - gamma);
  }
  out.x0.clamp();
  return out;
}

ImageGrid ddim_step(const ImageGrid& x_t, const ImageGrid& x_mix_t, const ImageGrid& x_mix_prev,
                    double alpha_bar_t, double alpha_bar_prev, double sigma, const ImageGrid& z) {
  require_same_shape(x_t, x_mix_t, "ddim_step mix");
  require_same_shape(x_t, x_mix_prev, "ddim_step previous mix");
  if (sigma != 0.0) require_same_shape(x_t, z, "ddim_step noise");
  if (!(alpha_bar_t < 1.0)) throw InvalidArgument("ddim_step requires alpha_bar_t < 1");
  const double budget = 1.0 - alpha_bar_prev;
  double dir2 = budget - sigma * sigma;
  if (dir2 < 0.0) {
    if (dir2 < -1e-12 * std::max(1.0, budget))
      throw InvalidArgument("ddim_step: sigma^2 exceeds 1 - alpha_bar_prev");
    dir2 = 0.0;
  }
  const double sa_prev = std::sqrt(alpha_bar_prev);
  const double sa = std::sqrt(alpha_bar_t);
  const double dir = std::sqrt(dir2) / std::sqrt(1.0 - alpha_bar_t);
  ImageGrid out(x_t.dims(), x_t.channels());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    double v = sa_prev * x_mix_prev[i] + dir * (x_t[i] - sa * x_mix_t[i]);
    if (sigma != 0.0) v += sigma * z[i];
    out[i] = v;
  }
  return out;
}

ImageGrid gaussian_noise(Dims dims, Rng& rng) {
  ImageGrid z(dims, 3);
  for (double& v : z.data()) v = rng.normal();
  return z;
}

ImageGrid ddim_step(const ImageGrid& x_t, const ImageGrid& x_mix_t, const ImageGrid& x_mix_prev,
                    double alpha_bar_t, double alpha_bar_prev, double sigma, Rng& rng) {
  if (sigma == 0.0) return ddim_step(x_t, x_mix_t, x_mix_prev, alpha_bar_t, alpha_bar_prev, 0.0, ImageGrid());
  return ddim_step(x_t, x_mix_t, x_mix_prev, alpha_bar_t, alpha_bar_prev, sigma, gaussian_noise(x_t.dims(), rng));
}

Injected upscale_inject(const ImageGrid& x0_hat, Dims next_dims, double alpha_bar_start, Rng& rng) {
  if (next_dims.h < x0_hat.height() || next_dims.w < x0_hat.width())
    throw InvalidArgument("upscale_inject cannot shrink the image");
  Injected out;
  out.blur = next_dims == x0_hat.dims() ? x0_hat : resize(x0_hat, next_dims);
  const double sa = std::sqrt(alpha_bar_start);
  const double sn = std::sqrt(std::max(0.0, 1.0 - alpha_bar_start));
  out.x = ImageGrid(next_dims, out.blur.channels());
  for (std::size_t i = 0; i < out.x.size(); ++i) out.x[i] = sa * out.blur[i] + sn * rng.normal();
  return out;
}

std::vector<Dims> sample_dims(const std::vector<Dims>& train_dims, double r, std::optional<Dims> out_dims,
                              std::optional<int> init_dims_scale) {
  const int n = static_cast<int>(train_dims.size());
  if (n < 1) throw InvalidArgument("sample_dims needs at least one scale");
  std::vector<Dims> dims = train_dims;
  if (out_dims && *out_dims != train_dims.back()) dims = scale_dims(*out_dims, r, n);
  if (init_dims_scale) {
    const int d = *init_dims_scale;
    if (d < 0 || d >= n) throw InvalidArgument("init_dims_scale must lie in [0, N-1]");
    for (int k = 0; k < d; ++k) dims[k] = dims[d];
  }
  if (dims[0].h < kMinCoarsestSide || dims[0].w < kMinCoarsestSide) {
    throw InvalidArgument("requested output gives a coarsest scale of " + to_string(dims[0]) + ", below " +
                          std::to_string(kMinCoarsestSide) + "x" + std::to_string(kMinCoarsestSide));
  }
  return dims;
}

Sampler::Sampler(const Checkpoint& ckpt)
    : Sampler(std::make_shared<Denoiser<float>>(ckpt.ema_model()), ckpt.plan, ckpt.dims, ckpt.r) {}

Sampler::Sampler(std::shared_ptr<const NoisePredictor> model, ScalePlan plan, std::vector<Dims> train_dims, double r)
    : model_(std::move(model)), plan_(std::move(plan)), train_dims_(std::move(train_dims)), r_(r) {
  if (!model_) throw InvalidArgument("sampler needs a model");
  if (static_cast<int>(train_dims_.size()) != plan_.num_scales())
    throw InvalidArgument("sampler plan and pyramid disagree on the scale count");
}

ReverseRun Sampler::make_run(const SampleConfig& cfg) const {
  const int n = num_scales();
  ReverseRun run;
  run.dims = sample_dims(train_dims_, r_, cfg.out_dims, cfg.init_dims_scale);
  run.start_t = plan_.start_t;
  if (!cfg.start_t_override.empty()) {
    if (static_cast<int>(cfg.start_t_override.size()) != n)
      throw InvalidArgument("start_t_override needs one entry per scale");
    for (int s = 0; s < n; ++s) {
      const int o = cfg.start_t_override[s];
      if (o == 0) continue;
      if (o < 1 || o > plan_.T()) throw InvalidArgument("start_t_override entries must lie in [1, T]");
      run.start_t[s] = o;
    }
  }
  run.sigma_mode = cfg.sigma_mode;
  run.seed = cfg.seed;
  return run;
}

ImageGrid Sampler::sample(const SampleConfig& cfg, SamplerHooks* hooks) const { return run(make_run(cfg), hooks); }

ImageGrid Sampler::run(const ReverseRun& rr, SamplerHooks* hooks) const {
  const int n = num_scales();
  const NoiseSchedule& ns = plan_.noise;
  if (static_cast<int>(rr.dims.size()) != n || static_cast<int>(rr.start_t.size()) != n)
    throw InvalidArgument("reverse run needs dims and start timesteps for every scale");
  if (rr.first_scale < 0 || rr.first_scale >= n) throw InvalidArgument("first_scale out of range");
  for (int s = rr.first_scale; s < n; ++s)
    if (rr.start_t[s] < 1 || rr.start_t[s] > ns.T) throw InvalidArgument("start timesteps must lie in [1, T]");
  if (!rr.inject && rr.first_scale != 0) throw InvalidArgument("a run starting above scale 0 needs an injected image");

  Rng rng(derive_seed(rr.seed, kSamplerStream));
  const int s0 = rr.first_scale;
  ImageGrid x, blur;
  if (rr.inject) {
    if (rr.inject->dims() != rr.dims[s0])
      throw InvalidArgument("injected image is " + to_string(rr.inject->dims()) + ", expected " +
                            to_string(rr.dims[s0]));
    const double ab = ns.alpha_bar[rr.start_t[s0]];
    blur = *rr.inject;
    x = ImageGrid(blur.dims(), blur.channels());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sqrt(ab) * blur[i] + std::sqrt(1.0 - ab) * rng.normal();
  } else {
    x = gaussian_noise(rr.dims[0], rng);
    blur = ImageGrid(rr.dims[0], 3);
  }

  ImageGrid x0;
  for (int s = s0; s < n; ++s) {
    const bool zero_gamma = rr.zero_gamma_all || (rr.zero_gamma_first && s == s0);
    const std::vector<double>& gam = plan_.gamma_sample[s];
    const int t_start = rr.start_t[s];
    StepInfo info{s, t_start, t_start, s0, n, ns.T};
    for (int t = t_start; t >= 1; --t) {
      info.t = t;
      const double g_t = zero_gamma ? 0.0 : gam[t];
      const double g_prev = zero_gamma ? 0.0 : gam[t - 1];
      const ImageGrid eps = model_->predict_noise(x, t, s);
      X0Estimate est = estimate_x0(x, eps, ns.alpha_bar[t], g_t, blur);
      if (hooks) {
        hooks->on_x0(info, est.x0);
        est.x0.clamp();
      }
      ImageGrid mix_prev = g_prev == 0.0 ? est.x0 : lerp(est.x0, blur, g_prev);
      x = ddim_step(x, est.mix, mix_prev, ns.alpha_bar[t], ns.alpha_bar[t - 1], sigma(ns, t, s, rr.sigma_mode), rng);
      x0 = std::move(est.x0);
    }
    x0.require_finite("sample at scale " + std::to_string(s));
    if (hooks) hooks->on_scale_done(s, x0);
    if (s + 1 < n) {
      Injected next = upscale_inject(x0, rr.dims[s + 1], ns.alpha_bar[rr.start_t[s + 1]], rng);
      x = std::move(next.x);
      blur = std::move(next.blur);
    }
  }
  return x0;
}

ImageGrid sample(const Checkpoint& ckpt, const SampleConfig& cfg, SamplerHooks* hooks) {
  return Sampler(ckpt).sample(cfg, hooks);
}

}  // namespace sinddm
