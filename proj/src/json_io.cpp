#include "sinddm/json_io.hpp"

#include <algorithm>
#include <cstring>

#include "sinddm/error.hpp"

namespace sinddm {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) throw InvalidArgument(where + ": unknown key '" + it.key() + "'");
  }
}

namespace {

template <class V>
void read_opt(const Json& j, const char* key, V& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

Json to_json(const DenoiserSpec& spec) {
  return Json{{"blocks", spec.blocks},
              {"convs_per_block", spec.convs_per_block},
              {"hidden_width", spec.hidden_width},
              {"embed_dim", spec.embed_dim},
              {"time_embed_width", spec.time_embed_width},
              {"padding", to_string(spec.padding)}};
}

DenoiserSpec denoiser_spec_from_json(const Json& j) {
  reject_unknown_keys(j, {"blocks", "convs_per_block", "hidden_width", "embed_dim", "time_embed_width", "padding"},
                      "model");
  DenoiserSpec spec;
  try {
    read_opt(j, "blocks", spec.blocks);
    read_opt(j, "convs_per_block", spec.convs_per_block);
    read_opt(j, "hidden_width", spec.hidden_width);
    read_opt(j, "embed_dim", spec.embed_dim);
    read_opt(j, "time_embed_width", spec.time_embed_width);
    if (j.contains("padding")) spec.padding = padding_mode_from_string(j.at("padding").get<std::string>());
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
  spec.validate();
  return spec;
}

Json to_json(const TrainConfig& cfg) {
  return Json{{"steps", cfg.steps},
              {"batch", cfg.batch},
              {"lr", cfg.lr},
              {"lr_halving_steps", cfg.lr_halving_steps},
              {"ema_decay", cfg.ema_decay},
              {"seed", cfg.seed},
              {"T", cfg.T},
              {"r", cfg.r},
              {"num_scales", cfg.num_scales},
              {"rf_area_ratio", cfg.rf_area_ratio},
              {"gap_norm", to_string(cfg.gap_norm)},
              {"blur_ablation", cfg.blur_ablation},
              {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"steps", "batch", "lr", "lr_halving_steps", "ema_decay", "seed", "T", "r", "num_scales",
                       "rf_area_ratio", "gap_norm", "blur_ablation", "checkpoint_every"},
                      "train");
  TrainConfig cfg;
  try {
    read_opt(j, "steps", cfg.steps);
    read_opt(j, "batch", cfg.batch);
    read_opt(j, "lr", cfg.lr);
    read_opt(j, "lr_halving_steps", cfg.lr_halving_steps);
    read_opt(j, "ema_decay", cfg.ema_decay);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "T", cfg.T);
    read_opt(j, "r", cfg.r);
    read_opt(j, "num_scales", cfg.num_scales);
    read_opt(j, "rf_area_ratio", cfg.rf_area_ratio);
    if (j.contains("gap_norm")) cfg.gap_norm = gap_norm_from_string(j.at("gap_norm").get<std::string>());
    read_opt(j, "blur_ablation", cfg.blur_ablation);
    read_opt(j, "checkpoint_every", cfg.checkpoint_every);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("train: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sinddm
