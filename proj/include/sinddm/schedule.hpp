#pragma once

#include <string>
#include <vector>

#include "sinddm/pyramid.hpp"

namespace sinddm {

/// Cumulative signal retention alpha_bar[t], t = 0..T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha_bar;

  /// Per-step retention alpha_t = alpha_bar[t] / alpha_bar[t-1].
  double alpha(int t) const { return alpha_bar[t] / alpha_bar[t - 1]; }
  /// Noise-to-signal ratio sqrt(1 - abar) / sqrt(abar).
  double noise_ratio(int t) const;

  /// Wraps an explicit table (used by tests and checkpoint loading).
  static NoiseSchedule from_table(std::vector<double> alpha_bar);
};

/// Cosine schedule with offset 0.008 and betas clipped at 0.999.
NoiseSchedule cosine_alpha_bar(int T);

enum class SigmaMode { ddpm_scale0_only, ddpm_all_scales };
enum class GammaMode { train, sample };
/// How the blur gap between x^s and its blurry twin is measured.
enum class GapNorm { rmse, l2 };

std::string to_string(SigmaMode m);
SigmaMode sigma_mode_from_string(const std::string& s);
std::string to_string(GapNorm n);
GapNorm gap_norm_from_string(const std::string& s);

inline constexpr double kGammaSampleClamp = 0.55;

/// Per-scale gap between x^s and blurry x^s; entry 0 is zero by construction.
std::vector<double> scale_rmse(const Pyramid& p, GapNorm norm = GapNorm::rmse);

/// T[0] = T; T[s] = first t whose noise ratio exceeds gap[s], or T if none does.
std::vector<int> start_timesteps(const NoiseSchedule& ns, const std::vector<double>& gap);

double gamma(const NoiseSchedule& ns, double gap_s, int t, GammaMode mode, int s);

/// DDPM posterior standard deviation at step t (t >= 1); zero for s > 0 in
/// ddpm_scale0_only mode.
double sigma(const NoiseSchedule& ns, int t, int s, SigmaMode mode);

/// Everything the sampler and trainer need per scale, stored explicitly.
struct ScalePlan {
  NoiseSchedule noise;
  GapNorm norm = GapNorm::rmse;
  std::vector<double> rmse;
  std::vector<int> start_t;
  std::vector<std::vector<double>> gamma_train;  // N x (T+1)
  std::vector<std::vector<double>> gamma_sample;  // N x (T+1)
  SigmaMode sigma_mode = SigmaMode::ddpm_scale0_only;

  int num_scales() const { return static_cast<int>(rmse.size()); }
  int T() const { return noise.T; }
};

/// blur_ablation forces both gamma tables to zero (noise-only diffusion).
ScalePlan make_plan(const Pyramid& p, int T, GapNorm norm = GapNorm::rmse, bool blur_ablation = false);

}  // namespace sinddm
