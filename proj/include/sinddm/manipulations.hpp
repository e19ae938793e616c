#pragma once

#include <cstdint>
#include <optional>

#include "sinddm/guidance.hpp"
#include "sinddm/image.hpp"
#include "sinddm/sampler.hpp"

namespace sinddm {

struct InjectionSpec {
  std::optional<int> s_inject;  // default N-2
  int t_inject = 0;             // 0 = round(0.5 * T[s_inject])
  bool histogram_match = false;
  SigmaMode sigma_mode = SigmaMode::ddpm_scale0_only;
  std::uint64_t seed = 0;
};

struct ResolvedInjection {
  int s = 0;
  int t = 0;
};

/// Applies the defaults and checks s in [0, N-1], t in [1, T[s]].
ResolvedInjection resolve_injection(const Sampler& sampler, const InjectionSpec& spec);

/// Noises img (already at the injection scale's dims for out_dims) to t_inject and
/// runs the remaining scales; gamma is zero at the injection scale.
ImageGrid inject_sample(const Sampler& sampler, const ImageGrid& img, const InjectionSpec& spec,
                        std::optional<Dims> out_dims = std::nullopt);

/// Finest output dims for a content image: training height, content aspect ratio.
Dims content_output_dims(const Sampler& sampler, Dims content);

/// The content image as fed to the injection scale (resized, optionally histogram matched).
ImageGrid prepare_injection(const Sampler& sampler, const ImageGrid& content, const ImageGrid& reference,
                            const InjectionSpec& spec, Dims out_dims);

/// Content resized to the injection scale, histogram matched to the style image, then injected.
ImageGrid style_transfer(const Sampler& style_sampler, const ImageGrid& style_image, const ImageGrid& content,
                         InjectionSpec spec);

/// Re-samples a naively pasted composite from the injection scale (no histogram matching).
ImageGrid harmonize(const Sampler& bg_sampler, const ImageGrid& composite, InjectionSpec spec);

/// Injects the training image at the finest scale and runs style-mode text guidance there.
/// t_inject = 0 uses the finest scale's planned start.
ImageGrid text_style_transfer(const Sampler& sampler, const ImageGrid& train_image, const Embedder& embedder,
                              GuidanceConfig gcfg, int t_inject = 0, GuidanceTrace* trace = nullptr);

/// Extends the training image to out_dims with the original pinned at (y, x)
/// through image-ROI guidance of strength eta.
ImageGrid outpaint(const Sampler& sampler, const ImageGrid& train_image, Dims out_dims, int y, int x, double eta,
                   const SampleConfig& cfg, GuidanceTrace* trace = nullptr);

/// Object-size control: early scales run at scale d's dims, so structures come out smaller.
SampleConfig object_size_config(int d, std::uint64_t seed, std::optional<Dims> out_dims = std::nullopt);

}  // namespace sinddm
