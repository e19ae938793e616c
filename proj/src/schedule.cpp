#include "sinddm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sinddm/error.hpp"

namespace sinddm {

double NoiseSchedule::noise_ratio(int t) const {
  const double ab = alpha_bar[t];
  return std::sqrt(1.0 - ab) / std::sqrt(ab);
}

NoiseSchedule NoiseSchedule::from_table(std::vector<double> alpha_bar) {
  if (alpha_bar.size() < 2) throw InvalidArgument("alpha_bar table needs at least two entries");
  for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
    if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) throw InvalidArgument("alpha_bar entries must lie in (0, 1]");
    if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1])) throw InvalidArgument("alpha_bar must be strictly decreasing");
  }
  NoiseSchedule ns;
  ns.T = static_cast<int>(alpha_bar.size()) - 1;
  ns.alpha_bar = std::move(alpha_bar);
  return ns;
}

NoiseSchedule cosine_alpha_bar(int T) {
  if (T < 2) throw InvalidArgument("T must be >= 2");
  constexpr double offset = 0.008;
  const auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule ns;
  ns.T = T;
  ns.alpha_bar.resize(T + 1);
  ns.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    ns.alpha_bar[t] = ns.alpha_bar[t - 1] * (1.0 - beta);
  }
  return ns;
}

std::string to_string(SigmaMode m) {
  return m == SigmaMode::ddpm_scale0_only ? "ddpm-scale0-only" : "ddpm-all-scales";
}

SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "ddpm-scale0-only") return SigmaMode::ddpm_scale0_only;
  if (s == "ddpm-all-scales") return SigmaMode::ddpm_all_scales;
  throw InvalidArgument("unknown sigma mode '" + s + "'");
}

std::string to_string(GapNorm n) { return n == GapNorm::rmse ? "rmse" : "l2"; }

GapNorm gap_norm_from_string(const std::string& s) {
  if (s == "rmse") return GapNorm::rmse;
  if (s == "l2") return GapNorm::l2;
  throw InvalidArgument("unknown gap norm '" + s + "'");
}

std::vector<double> scale_rmse(const Pyramid& p, GapNorm norm) {
  std::vector<double> out(p.num_scales(), 0.0);
  for (int s = 1; s < p.num_scales(); ++s) {
    const ImageGrid& a = p.scales[s];
    const ImageGrid& b = p.blurry[s];
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    out[s] = norm == GapNorm::rmse ? std::sqrt(acc / static_cast<double>(a.size())) : std::sqrt(acc);
  }
  return out;
}

std::vector<int> start_timesteps(const NoiseSchedule& ns, const std::vector<double>& gap) {
  std::vector<int> out(gap.size(), ns.T);
  for (std::size_t s = 1; s < gap.size(); ++s) {
    if (gap[s] < 0.0) throw InvalidArgument("scale gap must be non-negative");
    for (int t = 0; t <= ns.T; ++t) {
      if (ns.noise_ratio(t) > gap[s]) {
        out[s] = t;
        break;
      }
    }
  }
  return out;
}

double gamma(const NoiseSchedule& ns, double gap_s, int t, GammaMode mode, int s) {
  if (t < 0 || t > ns.T) throw InvalidArgument("timestep out of range");
  if (s == 0 || gap_s == 0.0) return 0.0;
  const double raw = ns.noise_ratio(t) / gap_s;
  return std::min(raw, mode == GammaMode::train ? 1.0 : kGammaSampleClamp);
}

double sigma(const NoiseSchedule& ns, int t, int s, SigmaMode mode) {
  if (t < 1 || t > ns.T) throw InvalidArgument("sigma requires 1 <= t <= T");
  if (mode == SigmaMode::ddpm_scale0_only && s > 0) return 0.0;
  const double ab_t = ns.alpha_bar[t];
  const double ab_prev = ns.alpha_bar[t - 1];
  return std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ns.alpha(t));
}

ScalePlan make_plan(const Pyramid& p, int T, GapNorm norm, bool blur_ablation) {
  ScalePlan plan;
  plan.noise = cosine_alpha_bar(T);
  plan.norm = norm;
  plan.rmse = scale_rmse(p, norm);
  plan.start_t = start_timesteps(plan.noise, plan.rmse);
  const int n = p.num_scales();
  plan.gamma_train.assign(n, std::vector<double>(T + 1, 0.0));
  plan.gamma_sample.assign(n, std::vector<double>(T + 1, 0.0));
  for (int s = 0; s < n; ++s)
    for (int t = 0; t <= T; ++t) {
      if (blur_ablation) continue;
      plan.gamma_train[s][t] = gamma(plan.noise, plan.rmse[s], t, GammaMode::train, s);
      plan.gamma_sample[s][t] = gamma(plan.noise, plan.rmse[s], t, GammaMode::sample, s);
    }
  return plan;
}

}  // namespace sinddm
