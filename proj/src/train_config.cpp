#include "sinddm/train_config.hpp"

#include <algorithm>
#include <cmath>

#include "sinddm/error.hpp"

namespace sinddm {

void TrainConfig::validate() const {
  if (steps <= 0) throw InvalidArgument("steps must be > 0");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be finite and >= 0");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema_decay must lie in (0, 1)");
  if (T < 2) throw InvalidArgument("T must be >= 2");
  if (!(r >= 1.2 && r <= 2.0)) throw InvalidArgument("scale factor r must lie in [1.2, 2.0]");
  if (num_scales != 0 && num_scales < 2) throw InvalidArgument("num_scales must be 0 (auto) or >= 2");
  if (!(rf_area_ratio > 0.0 && rf_area_ratio < 1.0)) throw InvalidArgument("rf_area_ratio must lie in (0, 1)");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
  if (!std::is_sorted(lr_halving_steps.begin(), lr_halving_steps.end()))
    throw InvalidArgument("lr_halving_steps must be sorted");
}

std::vector<std::int64_t> scaled_lr_milestones(std::int64_t steps) {
  static constexpr std::int64_t kReference[] = {20000, 40000, 70000, 80000, 90000, 110000};
  constexpr double kReferenceSteps = 120000.0;
  std::vector<std::int64_t> out;
  for (std::int64_t m : kReference) out.push_back(std::llround(m * (steps / kReferenceSteps)));
  return out;
}

double lr_at(const TrainConfig& cfg, std::int64_t step) {
  double lr = cfg.lr;
  for (std::int64_t m : cfg.lr_halving_steps)
    if (step >= m) lr *= 0.5;
  return lr;
}

}  // namespace sinddm
