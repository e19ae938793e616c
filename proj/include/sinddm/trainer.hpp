#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sinddm/checkpoint.hpp"
#include "sinddm/denoiser.hpp"
#include "sinddm/pyramid.hpp"
#include "sinddm/rng.hpp"
#include "sinddm/schedule.hpp"
#include "sinddm/train_config.hpp"

namespace sinddm {

struct TrainingExample {
  ImageGrid noisy;
  ImageGrid target_eps;
  int t = 0;
};

/// sqrt(abar) * (gamma * blurry + (1 - gamma) * clean) + sqrt(1 - abar) * eps.
ImageGrid forward_diffuse(const ImageGrid& clean, const ImageGrid& blurry, double gamma, double alpha_bar,
                          const ImageGrid& eps);

/// Draws eps ~ N(0, I) and builds the noisy input for scale s at timestep t.
TrainingExample make_training_example(const Pyramid& p, const ScalePlan& plan, int s, int t, Rng& rng);

/// Adam with PyTorch defaults (betas 0.9 / 0.999, eps 1e-8, bias correction).
class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.f), v_(n, 0.f) {}
  Adam(std::vector<float> m, std::vector<float> v, std::int64_t steps);

  void step(std::span<float> params, std::span<const float> grad, double lr);

  const std::vector<float>& m() const { return m_; }
  const std::vector<float>& v() const { return v_; }
  std::int64_t steps() const { return steps_; }

 private:
  std::vector<float> m_, v_;
  std::int64_t steps_ = 0;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

/// Mean absolute error of the batch; all examples must share scale s.
/// Accumulates nothing: `grad` is overwritten with d(loss)/d(weights).
double batch_loss_and_grad(const Denoiser<float>& model, std::span<const TrainingExample> batch, int s,
                           std::span<float> grad);

/// One optimizer step on the batch; returns the pre-update loss.
double train_step(Denoiser<float>& model, Adam& opt, std::span<const TrainingExample> batch, int s, double lr);

/// ema = decay * ema + (1 - decay) * params.
void ema_update(std::span<float> ema, std::span<const float> params, double decay);

struct StepRecord {
  std::int64_t step = 0;
  int scale = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Single-image training loop: uniform scale per batch, uniform timestep per
/// example, EMA after every step, learning-rate halving at milestones.
class Trainer {
 public:
  Trainer(const ImageGrid& image, TrainConfig cfg, DenoiserSpec spec);

  /// Continues a run; refuses a config whose fingerprint differs unless force.
  static Trainer resume(const Checkpoint& ckpt, const TrainConfig& cfg, bool force = false);

  StepRecord step();

  using StepCallback = std::function<void(const StepRecord&)>;
  using CheckpointCallback = std::function<void(const Checkpoint&)>;
  /// Runs until cfg.steps; calls on_checkpoint every checkpoint_every steps.
  void run(const StepCallback& on_step = {}, const CheckpointCallback& on_checkpoint = {});

  Checkpoint checkpoint() const;

  const Pyramid& pyramid() const { return pyramid_; }
  const ScalePlan& plan() const { return plan_; }
  const Denoiser<float>& model() const { return model_; }
  std::span<const float> ema_weights() const { return ema_; }
  std::int64_t steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  Trainer(TrainConfig cfg, DenoiserSpec spec, Pyramid p, ScalePlan plan);

  TrainConfig cfg_;
  Pyramid pyramid_;
  ScalePlan plan_;
  Denoiser<float> model_;
  std::vector<float> ema_;
  Adam opt_;
  Rng rng_;
  std::int64_t step_ = 0;
};

/// Trains from scratch and returns the final checkpoint.
Checkpoint train(const ImageGrid& image, const TrainConfig& cfg, const DenoiserSpec& spec,
                 const Trainer::StepCallback& on_step = {}, const Trainer::CheckpointCallback& on_checkpoint = {});

}  // namespace sinddm
