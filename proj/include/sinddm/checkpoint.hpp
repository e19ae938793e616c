#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sinddm/denoiser.hpp"
#include "sinddm/image.hpp"
#include "sinddm/schedule.hpp"
#include "sinddm/train_config.hpp"

namespace sinddm {

/// Everything needed to sample from, evaluate, or resume a trained model.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  DenoiserSpec spec;
  TrainConfig train;
  double r = 1.5;
  std::vector<Dims> dims;  // per-scale training dims, coarsest first
  ImageGrid train_image;
  ScalePlan plan;
  std::vector<float> weights;
  std::vector<float> ema_weights;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  std::int64_t step = 0;
  std::string rng_state;
  std::uint64_t fingerprint = 0;

  int num_scales() const { return static_cast<int>(dims.size()); }
  /// Denoiser carrying the EMA weights (the sampling model).
  Denoiser<float> ema_model() const;
  Denoiser<float> raw_model() const;
};

/// Hash of every hyperparameter that shapes the trained model (step count
/// and checkpoint cadence excluded so a run can be extended).
std::uint64_t config_fingerprint(const DenoiserSpec& spec, const TrainConfig& cfg);
std::string fingerprint_hex(std::uint64_t fp);

/// Atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Validates magic, version, manifest and checksum; throws IntegrityError on
/// any mismatch and never returns partial state.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sinddm
