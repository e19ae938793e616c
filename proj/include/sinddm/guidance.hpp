#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sinddm/image.hpp"
#include "sinddm/rng.hpp"
#include "sinddm/sampler.hpp"

namespace sinddm {

/// Differentiable joint text/image embedder. Embeddings are unit vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  /// Image size accepted by embed_image.
  virtual Dims native_size() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<double> embed_text(const std::string& text) const = 0;
  virtual std::vector<double> embed_image(const ImageGrid& img) const = 0;
  /// Gradient of dot(g, embed_image(img)) with respect to img.
  virtual ImageGrid embed_image_vjp(const ImageGrid& img, std::span<const double> g) const = 0;
};

/// Unit-normalized fixed random projection of the pixels; text maps to a
/// hash-seeded random unit vector.
class LinearStubEmbedder : public Embedder {
 public:
  explicit LinearStubEmbedder(Dims native = {16, 16}, int dim = 32, std::uint64_t seed = 1);
  std::string name() const override { return "stub-linear"; }
  Dims native_size() const override { return native_; }
  int dim() const override { return dim_; }
  std::vector<double> embed_text(const std::string& text) const override;
  std::vector<double> embed_image(const ImageGrid& img) const override;
  ImageGrid embed_image_vjp(const ImageGrid& img, std::span<const double> g) const override;

 private:
  std::vector<double> project(const ImageGrid& img) const;
  Dims native_;
  int dim_;
  std::uint64_t seed_;
  std::vector<double> proj_;  // dim x (h * w * 3)
};

/// Maps every image and every text to one fixed unit vector, so any prompt
/// matches any image exactly and the image gradient is zero.
class ConstantEmbedder : public Embedder {
 public:
  explicit ConstantEmbedder(std::string text, Dims native = {16, 16}, int dim = 32, std::uint64_t seed = 1);
  std::string name() const override { return "stub-constant"; }
  Dims native_size() const override { return text_model_.native_size(); }
  int dim() const override { return text_model_.dim(); }
  std::vector<double> embed_text(const std::string&) const override { return fixed_; }
  std::vector<double> embed_image(const ImageGrid& img) const override;
  ImageGrid embed_image_vjp(const ImageGrid& img, std::span<const double> g) const override;

 private:
  LinearStubEmbedder text_model_;
  std::vector<double> fixed_;
};

/// Builds an embedder adapter by name ("stub-linear", "stub-constant").
std::unique_ptr<Embedder> make_embedder(const std::string& name, const std::string& prompt = {});

std::vector<std::string> text_templates(bool low_resolution);
std::vector<std::string> expand_prompt(const std::string& prompt, bool low_resolution);

struct AugmentConfig {
  int crops = 16;
  double min_crop = 0.7;  // smallest crop side as a fraction of the image side
  bool flips = true;
};

struct ClipResult {
  double loss = 0.0;
  ImageGrid grad;
};

/// Mean cosine distance between augmented views of img and the expanded prompt,
/// plus its gradient with respect to img. Augmentations draw from rng.
ClipResult clip_loss_and_grad(const Embedder& embedder, const ImageGrid& img, const std::string& prompt,
                              const AugmentConfig& aug, Rng& rng, bool low_resolution_templates = false);

/// One-channel 0/1 mask selecting the round(f * pixels) most salient pixels
/// (per-pixel L2 over channels); ties go to the earlier pixel in scan order.
ImageGrid quantile_mask(const ImageGrid& grad, double f);

/// Nearest-neighbour resize re-binarized at 0.5.
ImageGrid resize_mask(const ImageGrid& mask, Dims target);

/// Inside the mask: (1 - eta) * x0 + eta * target.
ImageGrid roi_update(const ImageGrid& x0_hat, const ImageGrid& target, const ImageGrid& mask, double eta);

/// Momentum text-guidance update. Masked pixels become eta * delta * grad
/// (or x0 - eta * delta * grad with descent_variant) where
/// delta = |x0 . m| / |grad . m|; when grad vanishes on the mask they are left
/// as they are. Unmasked pixels become lambda * x0 + (1 - lambda) * x0_prev.
ImageGrid clip_update(const ImageGrid& x0_hat, const ImageGrid& x0_prev, const ImageGrid& grad, const ImageGrid& mask,
                      double eta, double lambda, bool descent_variant = false);

enum class GuidanceMode { content, style, roi_text, image_roi };
std::string to_string(GuidanceMode m);
GuidanceMode guidance_mode_from_string(const std::string& s);

/// Axis-aligned rectangle in finest-scale output coordinates.
struct RoiRect {
  int y = 0, x = 0, h = 0, w = 0;
};

/// Rectangle scaled from `from` dims to `to` dims (at least one pixel).
RoiRect scale_rect(const RoiRect& r, Dims from, Dims to);
ImageGrid rect_mask(Dims dims, std::span<const RoiRect> rects);

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::content;
  std::string prompt;
  double f = 0.3;
  double eta = 0.3;
  double lambda = 0.05;
  int start_scale = 1;
  std::vector<RoiRect> roi;            // roi-text regions
  std::optional<ImageGrid> target;     // image-roi: desired contents at output dims
  std::optional<ImageGrid> target_mask;  // image-roi: one channel, 1 inside the ROIs
  int free_final_steps = 3;
  bool descent_variant = false;
  AugmentConfig aug;
  std::uint64_t aug_seed = 0;
  SampleConfig sample;

  bool text_mode() const { return mode != GuidanceMode::image_roi; }
};

struct GuidanceEvent {
  enum class Kind { mask_created, mask_upsampled, clip_update, roi_update };
  Kind kind;
  int s = 0;
  int t = 0;
  std::size_t mask_ones = 0;
};

struct GuidanceTrace {
  std::vector<GuidanceEvent> events;
};

/// Validates gcfg against the sampler geometry; throws InvalidArgument.
void validate_guidance(const GuidanceConfig& gcfg, const Sampler& sampler, const Embedder* embedder);

/// The reverse-run settings guided sampling uses for gcfg (text modes force
/// gamma = 0 and DDPM sigma on every scale).
ReverseRun guided_run_settings(const Sampler& sampler, const GuidanceConfig& gcfg);

/// Runs `run` with the guidance hooks of gcfg.
ImageGrid guided_run(const Sampler& sampler, const ReverseRun& run, const GuidanceConfig& gcfg,
                     const Embedder* embedder, GuidanceTrace* trace = nullptr);

ImageGrid guided_sample(const Sampler& sampler, const GuidanceConfig& gcfg, const Embedder* embedder,
                        GuidanceTrace* trace = nullptr);

/// Guidance target for outpainting-style edits: the training image pasted at
/// (y, x) of a grid of out_dims, with its mask.
struct RoiTarget {
  ImageGrid target;
  ImageGrid mask;
};
RoiTarget paste_target(const ImageGrid& source, Dims out_dims, int y, int x);

}  // namespace sinddm
