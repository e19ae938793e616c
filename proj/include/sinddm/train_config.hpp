#pragma once

#include <cstdint>
#include <vector>

#include "sinddm/schedule.hpp"

namespace sinddm {

struct TrainConfig {
  std::int64_t steps = 120000;
  int batch = 32;
  double lr = 1e-3;
  // Steps at which the learning rate halves.
  std::vector<std::int64_t> lr_halving_steps{20000, 40000, 70000, 80000, 90000, 110000};
  double ema_decay = 0.995;
  std::uint64_t seed = 0;
  int T = 100;
  double r = 1.5;
  int num_scales = 0;  // 0 = choose from the receptive-field rule
  double rf_area_ratio = 0.4;
  GapNorm gap_norm = GapNorm::rmse;
  bool blur_ablation = false;
  std::int64_t checkpoint_every = 10000;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Reference milestones rescaled to a run of `steps` steps.
std::vector<std::int64_t> scaled_lr_milestones(std::int64_t steps);

/// Learning rate in effect at `step` (0-based).
double lr_at(const TrainConfig& cfg, std::int64_t step);

}  // namespace sinddm
