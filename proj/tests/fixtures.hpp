#pragma once

// A small randomly initialised model on a three-scale 40x40 pyramid; enough
// to drive the reverse loop end to end in a few milliseconds.

#include <memory>

#include "sinddm/checkpoint.hpp"
#include "sinddm/denoiser.hpp"
#include "sinddm/pyramid.hpp"
#include "sinddm/sampler.hpp"
#include "sinddm/schedule.hpp"
#include "sinddm/trainer.hpp"
#include "support.hpp"

namespace sinddm::testing {

struct TinySetup {
  ImageGrid image;
  Pyramid pyr;
  ScalePlan plan;
  std::shared_ptr<Denoiser<float>> model;
  Sampler sampler;

  explicit TinySetup(int T = 12, Dims dims = {40, 40}, int num_scales = 3)
      : image(textured_image(dims.h, dims.w, 3)),
        pyr(build_pyramids(image, 1.5, num_scales)),
        plan(make_plan(pyr, T)),
        model(make_model()),
        sampler(model, plan, pyr.dims, 1.5) {}

  static std::shared_ptr<Denoiser<float>> make_model() {
    DenoiserSpec s;
    s.hidden_width = 8;
    s.blocks = 1;
    auto m = std::make_shared<Denoiser<float>>(s);
    m->init(4, false);
    return m;
  }
};

/// A few training steps of a very small model on a 32x32 image.
inline Checkpoint tiny_checkpoint(std::int64_t steps = 3, bool blur_ablation = false, std::uint64_t seed = 42) {
  DenoiserSpec spec;
  spec.hidden_width = 4;
  spec.blocks = 1;
  spec.convs_per_block = 2;
  spec.embed_dim = 8;
  spec.time_embed_width = 8;
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = 2;
  cfg.T = 10;
  cfg.num_scales = 2;
  cfg.lr_halving_steps = scaled_lr_milestones(steps);
  cfg.seed = seed;
  cfg.blur_ablation = blur_ablation;
  Trainer tr(textured_image(32, 32, 7), cfg, spec);
  tr.run();
  return tr.checkpoint();
}

}  // namespace sinddm::testing
