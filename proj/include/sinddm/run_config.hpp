#pragma once

// Declarative configuration for every subcommand; the snapshot written to a
// run directory is this document with all defaults filled in.

#include <map>
#include <optional>
#include <string>

#include "sinddm/denoiser.hpp"
#include "sinddm/guidance.hpp"
#include "sinddm/json_io.hpp"
#include "sinddm/manipulations.hpp"
#include "sinddm/train_config.hpp"

namespace sinddm {

struct SampleSection {
  std::uint64_t seed = 0;
  int n = 1;
  double width_scale = 1.0;
  double height_scale = 1.0;
  std::optional<int> init_dims_scale;
  std::vector<int> start_t_override;
  SigmaMode sigma_mode = SigmaMode::ddpm_scale0_only;
  bool dump_scales = false;
};

struct GuidanceSection {
  std::string mode = "content";
  std::string prompt;
  std::string embedder = "stub-linear";
  double f = 0.3;
  double eta = 0.3;
  double lambda = 0.05;
  int start_scale = 1;
  int free_final_steps = 3;
  bool descent_variant = false;
  bool from_image = false;  // style mode: inject the training image at the finest scale
  std::vector<RoiRect> roi;
  int crops = 16;
  double min_crop = 0.7;
  bool flips = true;
  std::uint64_t aug_seed = 0;
};

struct InjectionSection {
  std::optional<int> s_inject;
  int t_inject = 0;
};

struct OutpaintSection {
  int y = 0;
  int x = 0;
  double eta = 1.0;
};

struct EvalSection {
  int n = 50;
  std::string extractor = "stub-filters";
  std::string distance = "stub-l1";
};

struct RunConfig {
  static constexpr int kFormatVersion = 1;
  std::string command;
  std::map<std::string, std::string> inputs;  // named input paths (image, ckpt, content, ...)
  DenoiserSpec model;
  TrainConfig train;
  SampleSection sample;
  GuidanceSection guidance;
  InjectionSection injection;
  OutpaintSection outpaint;
  EvalSection eval;
};

Json to_json(const RunConfig& c);
/// Strict reader: unknown keys anywhere are rejected; missing keys keep defaults.
RunConfig run_config_from_json(const Json& j);

/// Sample settings for one image of a batch; image i uses derive_seed(seed, i).
SampleConfig to_sample_config(const SampleSection& s, const std::vector<Dims>& train_dims, int index);
GuidanceConfig to_guidance_config(const RunConfig& c, const std::vector<Dims>& train_dims, int index);

}  // namespace sinddm
