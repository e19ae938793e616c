#include "sinddm/manipulations.hpp"

#include <cmath>

#include "sinddm/error.hpp"
#include "sinddm/pyramid.hpp"
#include "sinddm/resample.hpp"

namespace sinddm {

ResolvedInjection resolve_injection(const Sampler& sampler, const InjectionSpec& spec) {
  const int n = sampler.num_scales();
  ResolvedInjection r;
  r.s = spec.s_inject.value_or(std::max(0, n - 2));
  if (r.s < 0 || r.s >= n) throw InvalidArgument("injection scale must lie in [0, " + std::to_string(n - 1) + "]");
  const int t_max = sampler.plan().start_t[r.s];
  r.t = spec.t_inject == 0 ? std::max(1, static_cast<int>(std::lround(0.5 * t_max))) : spec.t_inject;
  if (r.t < 1 || r.t > t_max) {
    throw InvalidArgument("injection timestep " + std::to_string(r.t) + " outside [1, " + std::to_string(t_max) +
                          "] for scale " + std::to_string(r.s));
  }
  return r;
}

ImageGrid inject_sample(const Sampler& sampler, const ImageGrid& img, const InjectionSpec& spec,
                        std::optional<Dims> out_dims) {
  const ResolvedInjection inj = resolve_injection(sampler, spec);
  SampleConfig cfg;
  cfg.out_dims = out_dims;
  cfg.sigma_mode = spec.sigma_mode;
  cfg.seed = spec.seed;
  ReverseRun run = sampler.make_run(cfg);
  if (img.dims() != run.dims[inj.s]) {
    throw InvalidArgument("injected image is " + to_string(img.dims()) + " but scale " + std::to_string(inj.s) +
                          " is " + to_string(run.dims[inj.s]));
  }
  run.first_scale = inj.s;
  run.start_t[inj.s] = inj.t;
  run.inject = img;
  run.zero_gamma_first = true;
  return sampler.run(run);
}

Dims content_output_dims(const Sampler& sampler, Dims content) {
  const Dims train = sampler.train_dims().back();
  if (content.h < 1 || content.w < 1) throw InvalidArgument("content image is empty");
  return {train.h, std::max(1, round_dim(static_cast<double>(train.h) * content.w / content.h))};
}

ImageGrid prepare_injection(const Sampler& sampler, const ImageGrid& content, const ImageGrid& reference,
                            const InjectionSpec& spec, Dims out_dims) {
  const ResolvedInjection inj = resolve_injection(sampler, spec);
  const Dims target = sample_dims(sampler.train_dims(), sampler.r(), out_dims).at(inj.s);
  ImageGrid img = resize(content, target);
  if (spec.histogram_match) img = histogram_match(img, reference);
  return img;
}

ImageGrid style_transfer(const Sampler& style_sampler, const ImageGrid& style_image, const ImageGrid& content,
                         InjectionSpec spec) {
  spec.histogram_match = true;
  const Dims out = content_output_dims(style_sampler, content.dims());
  return inject_sample(style_sampler, prepare_injection(style_sampler, content, style_image, spec, out), spec, out);
}

ImageGrid harmonize(const Sampler& bg_sampler, const ImageGrid& composite, InjectionSpec spec) {
  spec.histogram_match = false;
  const Dims out = content_output_dims(bg_sampler, composite.dims());
  return inject_sample(bg_sampler, prepare_injection(bg_sampler, composite, composite, spec, out), spec, out);
}

ImageGrid text_style_transfer(const Sampler& sampler, const ImageGrid& train_image, const Embedder& embedder,
                              GuidanceConfig gcfg, int t_inject, GuidanceTrace* trace) {
  gcfg.mode = GuidanceMode::style;
  gcfg.sample.out_dims.reset();
  gcfg.sample.init_dims_scale.reset();
  const int n = sampler.num_scales();
  ReverseRun run = guided_run_settings(sampler, gcfg);
  const int t_max = sampler.plan().start_t[n - 1];
  const int t = t_inject == 0 ? t_max : t_inject;
  if (t < 1 || t > t_max) throw InvalidArgument("text style transfer timestep outside [1, T[N-1]]");
  if (train_image.dims() != run.dims[n - 1]) throw InvalidArgument("training image does not match the checkpoint");
  run.first_scale = n - 1;
  run.start_t[n - 1] = t;
  run.inject = train_image;
  return guided_run(sampler, run, gcfg, &embedder, trace);
}

ImageGrid outpaint(const Sampler& sampler, const ImageGrid& train_image, Dims out_dims, int y, int x, double eta,
                   const SampleConfig& cfg, GuidanceTrace* trace) {
  GuidanceConfig g;
  g.mode = GuidanceMode::image_roi;
  g.eta = eta;
  g.sample = cfg;
  g.sample.out_dims = out_dims;
  RoiTarget t = paste_target(train_image, out_dims, y, x);
  g.target = std::move(t.target);
  g.target_mask = std::move(t.mask);
  return guided_sample(sampler, g, nullptr, trace);
}

SampleConfig object_size_config(int d, std::uint64_t seed, std::optional<Dims> out_dims) {
  SampleConfig cfg;
  cfg.init_dims_scale = d;
  cfg.seed = seed;
  cfg.out_dims = out_dims;
  return cfg;
}

}  // namespace sinddm
