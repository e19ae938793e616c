#include "sinddm/trainer.hpp"

#include <cmath>

#include "sinddm/error.hpp"

namespace sinddm {

ImageGrid forward_diffuse(const ImageGrid& clean, const ImageGrid& blurry, double gamma, double alpha_bar,
                          const ImageGrid& eps) {
  require_same_shape(clean, eps, "forward_diffuse");
  require_same_shape(clean, blurry, "forward_diffuse");
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  ImageGrid out(clean.dims(), clean.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mix = gamma == 0.0 ? clean[i] : gamma * blurry[i] + (1.0 - gamma) * clean[i];
    out[i] = a * mix + b * eps[i];
  }
  return out;
}

TrainingExample make_training_example(const Pyramid& p, const ScalePlan& plan, int s, int t, Rng& rng) {
  if (s < 0 || s >= p.num_scales()) throw InvalidArgument("scale out of range");
  if (t < 0 || t > plan.T()) throw InvalidArgument("timestep out of range");
  const ImageGrid& clean = p.scales[s];
  ImageGrid eps(clean.dims(), clean.channels());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  const double g = s == 0 ? 0.0 : plan.gamma_train[s][t];
  TrainingExample ex;
  ex.noisy = forward_diffuse(clean, p.blurry[s], g, plan.noise.alpha_bar[t], eps);
  ex.target_eps = std::move(eps);
  ex.t = t;
  return ex;
}

Adam::Adam(std::vector<float> m, std::vector<float> v, std::int64_t steps)
    : m_(std::move(m)), v_(std::move(v)), steps_(steps) {
  if (m_.size() != v_.size()) throw InvalidArgument("Adam moment sizes differ");
}

void Adam::step(std::span<float> params, std::span<const float> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw InvalidArgument("Adam size mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_), eps = static_cast<float>(eps_);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    m_[i] = b1 * m_[i] + (1.f - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.f - b2) * grad[i] * grad[i];
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) * inv_sqrt_bc2 + eps);
  }
}

double batch_loss_and_grad(const Denoiser<float>& model, std::span<const TrainingExample> batch, int s,
                           std::span<float> grad) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  std::fill(grad.begin(), grad.end(), 0.f);
  const Dims d = batch.front().noisy.dims();
  const double count = static_cast<double>(batch.size()) * batch.front().noisy.size();
  const float inv_count = static_cast<float>(1.0 / count);

  double loss = 0.0;
  Denoiser<float>::Activations cache;
  std::vector<float> x, dout;
  for (const TrainingExample& ex : batch) {
    if (ex.noisy.dims() != d) throw InvalidArgument("batch members must share one scale");
    x.resize(ex.noisy.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(ex.noisy[i]);
    const std::vector<float> pred = model.forward(x, d, ex.t, s, &cache);
    dout.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = static_cast<double>(pred[i]) - ex.target_eps[i];
      loss += std::abs(r);
      dout[i] = r > 0 ? inv_count : (r < 0 ? -inv_count : 0.f);
    }
    model.backward(cache, dout, grad);
  }
  loss /= count;
  if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at scale " + std::to_string(s));
  return loss;
}

double train_step(Denoiser<float>& model, Adam& opt, std::span<const TrainingExample> batch, int s, double lr) {
  std::vector<float> grad(model.weights().size());
  const double loss = batch_loss_and_grad(model, batch, s, grad);
  for (float g : grad)
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient at scale " + std::to_string(s));
  opt.step(model.weights(), grad, lr);
  return loss;
}

void ema_update(std::span<float> ema, std::span<const float> params, double decay) {
  if (ema.size() != params.size()) throw InvalidArgument("EMA shape mismatch");
  const float d = static_cast<float>(decay);
  const float rest = static_cast<float>(1.0 - decay);
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = d * ema[i] + rest * params[i];
}

namespace {

void check_plan(const ScalePlan& plan, bool blur_ablation) {
  for (int s = 1; s < plan.num_scales(); ++s) {
    if (blur_ablation || plan.rmse[s] == 0.0) continue;
    for (int t = plan.start_t[s] + 1; t <= plan.T(); ++t)
      if (plan.gamma_train[s][t] != 1.0)
        throw InvalidArgument("plan violates gamma_train == 1 above T[s] at scale " + std::to_string(s));
  }
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, DenoiserSpec spec, Pyramid p, ScalePlan plan)
    : cfg_(std::move(cfg)),
      pyramid_(std::move(p)),
      plan_(std::move(plan)),
      model_(spec),
      opt_(model_.weights().size()),
      rng_(derive_seed(cfg_.seed, 1)) {}

Trainer::Trainer(const ImageGrid& image, TrainConfig cfg, DenoiserSpec spec)
    : Trainer(cfg, spec, Pyramid{}, ScalePlan{}) {
  cfg_.validate();
  spec.validate();
  const int n = cfg_.num_scales > 0
                    ? cfg_.num_scales
                    : choose_num_scales(image.dims(), spec.receptive_field(), cfg_.rf_area_ratio, cfg_.r);
  cfg_.num_scales = n;
  pyramid_ = build_pyramids(image, cfg_.r, n);
  plan_ = make_plan(pyramid_, cfg_.T, cfg_.gap_norm, cfg_.blur_ablation);
  check_plan(plan_, cfg_.blur_ablation);
  model_.init(derive_seed(cfg_.seed, 0));
  ema_.assign(model_.weights().begin(), model_.weights().end());
}

Trainer Trainer::resume(const Checkpoint& ckpt, const TrainConfig& cfg, bool force) {
  TrainConfig merged = cfg;
  if (merged.num_scales == 0) merged.num_scales = ckpt.num_scales();
  merged.validate();
  const std::uint64_t fp = config_fingerprint(ckpt.spec, merged);
  if (!force && fp != ckpt.fingerprint) {
    throw InvalidArgument("config fingerprint " + fingerprint_hex(fp) + " differs from checkpoint " +
                          fingerprint_hex(ckpt.fingerprint) + "; pass --force to resume anyway");
  }
  merged.num_scales = ckpt.num_scales();
  Pyramid p = build_pyramids(ckpt.train_image, ckpt.r, ckpt.num_scales());
  Trainer tr(merged, ckpt.spec, std::move(p), ckpt.plan);
  tr.model_.set_weights(ckpt.weights);
  tr.ema_ = ckpt.ema_weights;
  tr.opt_ = Adam(ckpt.adam_m, ckpt.adam_v, ckpt.step);
  tr.step_ = ckpt.step;
  tr.rng_.set_state(ckpt.rng_state);
  return tr;
}

StepRecord Trainer::step() {
  const int s = rng_.uniform_int(0, pyramid_.num_scales() - 1);
  std::vector<TrainingExample> batch;
  batch.reserve(cfg_.batch);
  for (int i = 0; i < cfg_.batch; ++i) {
    const int t = rng_.uniform_int(0, plan_.T());
    batch.push_back(make_training_example(pyramid_, plan_, s, t, rng_));
  }
  const double lr = lr_at(cfg_, step_);
  StepRecord rec;
  rec.step = step_;
  rec.scale = s;
  rec.lr = lr;
  rec.loss = train_step(model_, opt_, batch, s, lr);
  ema_update(ema_, model_.weights(), cfg_.ema_decay);
  ++step_;
  return rec;
}

void Trainer::run(const StepCallback& on_step, const CheckpointCallback& on_checkpoint) {
  while (step_ < cfg_.steps) {
    const StepRecord rec = step();
    if (on_step) on_step(rec);
    if (on_checkpoint && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.steps)
      on_checkpoint(checkpoint());
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.spec = model_.spec();
  c.train = cfg_;
  c.r = pyramid_.r;
  c.dims = pyramid_.dims;
  c.train_image = pyramid_.scales.back();
  c.plan = plan_;
  c.weights.assign(model_.weights().begin(), model_.weights().end());
  c.ema_weights = ema_;
  c.adam_m = opt_.m();
  c.adam_v = opt_.v();
  c.step = step_;
  c.rng_state = rng_.state();
  c.fingerprint = config_fingerprint(c.spec, cfg_);
  return c;
}

Checkpoint train(const ImageGrid& image, const TrainConfig& cfg, const DenoiserSpec& spec,
                 const Trainer::StepCallback& on_step, const Trainer::CheckpointCallback& on_checkpoint) {
  Trainer tr(image, cfg, spec);
  tr.run(on_step, on_checkpoint);
  return tr.checkpoint();
}

}  // namespace sinddm
