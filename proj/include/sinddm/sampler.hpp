#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sinddm/checkpoint.hpp"
#include "sinddm/denoiser.hpp"
#include "sinddm/image.hpp"
#include "sinddm/rng.hpp"
#include "sinddm/schedule.hpp"

namespace sinddm {

struct X0Estimate {
  ImageGrid mix;  // de-noised but still blur-mixed image
  ImageGrid x0;   // blur removed, clamped to [-1, 1]
};

/// Inverts the forward mixing given a noise estimate; requires gamma < 1.
X0Estimate estimate_x0(const ImageGrid& x_t, const ImageGrid& eps_hat, double alpha_bar_t, double gamma,
                       const ImageGrid& x_blur);

/// One reverse step from t to t-1 with noise z; sigma^2 must not exceed 1 - alpha_bar_prev.
ImageGrid ddim_step(const ImageGrid& x_t, const ImageGrid& x_mix_t, const ImageGrid& x_mix_prev,
                    double alpha_bar_t, double alpha_bar_prev, double sigma, const ImageGrid& z);
ImageGrid ddim_step(const ImageGrid& x_t, const ImageGrid& x_mix_t, const ImageGrid& x_mix_prev,
                    double alpha_bar_t, double alpha_bar_prev, double sigma, Rng& rng);

ImageGrid gaussian_noise(Dims dims, Rng& rng);

struct Injected {
  ImageGrid x;     // noisy start for the next scale
  ImageGrid blur;  // upsampled estimate, the blur reference for that scale
};

/// Upsamples x0_hat to next_dims and re-noises it to level alpha_bar_start.
Injected upscale_inject(const ImageGrid& x0_hat, Dims next_dims, double alpha_bar_start, Rng& rng);

struct SampleConfig {
  std::optional<Dims> out_dims;         // finest-scale dims; default = training dims
  std::optional<int> init_dims_scale;   // object-size control: early scales run at this scale's dims
  std::vector<int> start_t_override;    // per scale; 0 keeps the plan's start
  SigmaMode sigma_mode = SigmaMode::ddpm_scale0_only;
  std::uint64_t seed = 0;
};

/// Per-scale generation dims for a requested finest size, same rounding as training.
std::vector<Dims> sample_dims(const std::vector<Dims>& train_dims, double r, std::optional<Dims> out_dims,
                              std::optional<int> init_dims_scale = std::nullopt);

struct StepInfo {
  int s = 0;
  int t = 0;
  int t_start = 0;      // first timestep run at this scale
  int first_scale = 0;  // first scale of the run
  int num_scales = 0;
  int T = 0;
};

/// Observation and modification points inside the reverse loop.
class SamplerHooks {
 public:
  virtual ~SamplerHooks() = default;
  /// Called after every x0 estimate, before the step to t-1 uses it.
  virtual void on_x0(const StepInfo&, ImageGrid& /*x0_hat*/) {}
  /// Called with the final estimate of each scale.
  virtual void on_scale_done(int /*s*/, const ImageGrid& /*x0_hat*/) {}
};

/// Fully resolved description of one reverse pass.
struct ReverseRun {
  std::vector<Dims> dims;      // per scale
  std::vector<int> start_t;    // per scale
  int first_scale = 0;
  // Clean image noised to start_t[first_scale] as the starting point; when
  // absent the run starts from pure noise (first_scale must be 0).
  std::optional<ImageGrid> inject;
  bool zero_gamma_first = false;  // gamma = 0 at the first scale run
  bool zero_gamma_all = false;
  SigmaMode sigma_mode = SigmaMode::ddpm_scale0_only;
  std::uint64_t seed = 0;
};

class Sampler {
 public:
  explicit Sampler(const Checkpoint& ckpt);
  Sampler(std::shared_ptr<const NoisePredictor> model, ScalePlan plan, std::vector<Dims> train_dims, double r);

  const ScalePlan& plan() const { return plan_; }
  const std::vector<Dims>& train_dims() const { return train_dims_; }
  double r() const { return r_; }
  int num_scales() const { return static_cast<int>(train_dims_.size()); }

  /// Unconditional run starting from noise at scale 0.
  ReverseRun make_run(const SampleConfig& cfg) const;
  ImageGrid sample(const SampleConfig& cfg, SamplerHooks* hooks = nullptr) const;
  ImageGrid run(const ReverseRun& run, SamplerHooks* hooks = nullptr) const;

 private:
  std::shared_ptr<const NoisePredictor> model_;
  ScalePlan plan_;
  std::vector<Dims> train_dims_;
  double r_;
};

/// Convenience wrapper around Sampler(ckpt).sample(cfg).
ImageGrid sample(const Checkpoint& ckpt, const SampleConfig& cfg, SamplerHooks* hooks = nullptr);

}  // namespace sinddm
