#include "sinddm/run_config.hpp"

#include "sinddm/error.hpp"
#include "sinddm/pyramid.hpp"

namespace sinddm {

namespace {

template <class V>
void read_opt(const Json& j, const char* key, V& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

template <class V>
void read_opt(const Json& j, const char* key, std::optional<V>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<V>();
  }
}

template <class V>
Json opt_json(const std::optional<V>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json to_json(const SampleSection& s) {
  return Json{{"seed", s.seed},
              {"n", s.n},
              {"width_scale", s.width_scale},
              {"height_scale", s.height_scale},
              {"init_dims_scale", opt_json(s.init_dims_scale)},
              {"start_t_override", s.start_t_override},
              {"sigma_mode", to_string(s.sigma_mode)},
              {"dump_scales", s.dump_scales}};
}

SampleSection sample_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"seed", "n", "width_scale", "height_scale", "init_dims_scale", "start_t_override",
                       "sigma_mode", "dump_scales"},
                      "sample");
  SampleSection s;
  read_opt(j, "seed", s.seed);
  read_opt(j, "n", s.n);
  read_opt(j, "width_scale", s.width_scale);
  read_opt(j, "height_scale", s.height_scale);
  read_opt(j, "init_dims_scale", s.init_dims_scale);
  read_opt(j, "start_t_override", s.start_t_override);
  if (j.contains("sigma_mode")) s.sigma_mode = sigma_mode_from_string(j.at("sigma_mode").get<std::string>());
  read_opt(j, "dump_scales", s.dump_scales);
  if (s.n < 1) throw InvalidArgument("sample.n must be at least 1");
  if (!(s.width_scale > 0.0 && s.height_scale > 0.0)) throw InvalidArgument("sample scales must be positive");
  return s;
}

Json to_json(const GuidanceSection& g) {
  Json roi = Json::array();
  for (const RoiRect& r : g.roi) roi.push_back({r.y, r.x, r.h, r.w});
  return Json{{"mode", g.mode},
              {"prompt", g.prompt},
              {"embedder", g.embedder},
              {"f", g.f},
              {"eta", g.eta},
              {"lambda", g.lambda},
              {"start_scale", g.start_scale},
              {"free_final_steps", g.free_final_steps},
              {"descent_variant", g.descent_variant},
              {"from_image", g.from_image},
              {"roi", roi},
              {"crops", g.crops},
              {"min_crop", g.min_crop},
              {"flips", g.flips},
              {"aug_seed", g.aug_seed}};
}

GuidanceSection guidance_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"mode", "prompt", "embedder", "f", "eta", "lambda", "start_scale", "free_final_steps",
                       "descent_variant", "from_image", "roi", "crops", "min_crop", "flips", "aug_seed"},
                      "guidance");
  GuidanceSection g;
  read_opt(j, "mode", g.mode);
  guidance_mode_from_string(g.mode);
  read_opt(j, "prompt", g.prompt);
  read_opt(j, "embedder", g.embedder);
  read_opt(j, "f", g.f);
  read_opt(j, "eta", g.eta);
  read_opt(j, "lambda", g.lambda);
  read_opt(j, "start_scale", g.start_scale);
  read_opt(j, "free_final_steps", g.free_final_steps);
  read_opt(j, "descent_variant", g.descent_variant);
  read_opt(j, "from_image", g.from_image);
  if (j.contains("roi")) {
    for (const auto& r : j.at("roi")) {
      if (!r.is_array() || r.size() != 4) throw InvalidArgument("guidance.roi entries must be [y, x, h, w]");
      g.roi.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
    }
  }
  read_opt(j, "crops", g.crops);
  read_opt(j, "min_crop", g.min_crop);
  read_opt(j, "flips", g.flips);
  read_opt(j, "aug_seed", g.aug_seed);
  return g;
}

}  // namespace

Json to_json(const RunConfig& c) {
  return Json{{"format_version", RunConfig::kFormatVersion},
              {"command", c.command},
              {"inputs", c.inputs},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"sample", to_json(c.sample)},
              {"guidance", to_json(c.guidance)},
              {"injection", {{"s_inject", opt_json(c.injection.s_inject)}, {"t_inject", c.injection.t_inject}}},
              {"outpaint", {{"y", c.outpaint.y}, {"x", c.outpaint.x}, {"eta", c.outpaint.eta}}},
              {"eval", {{"n", c.eval.n}, {"extractor", c.eval.extractor}, {"distance", c.eval.distance}}}};
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"format_version", "command", "inputs", "model", "train", "sample", "guidance", "injection",
                       "outpaint", "eval"},
                      "config");
  RunConfig c;
  try {
    if (j.contains("format_version") && j.at("format_version").get<int>() != RunConfig::kFormatVersion)
      throw InvalidArgument("unsupported config format_version");
    read_opt(j, "command", c.command);
    read_opt(j, "inputs", c.inputs);
    if (j.contains("model")) c.model = denoiser_spec_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("sample")) c.sample = sample_from_json(j.at("sample"));
    if (j.contains("guidance")) c.guidance = guidance_from_json(j.at("guidance"));
    if (j.contains("injection")) {
      const Json& s = j.at("injection");
      reject_unknown_keys(s, {"s_inject", "t_inject"}, "injection");
      read_opt(s, "s_inject", c.injection.s_inject);
      read_opt(s, "t_inject", c.injection.t_inject);
    }
    if (j.contains("outpaint")) {
      const Json& s = j.at("outpaint");
      reject_unknown_keys(s, {"y", "x", "eta"}, "outpaint");
      read_opt(s, "y", c.outpaint.y);
      read_opt(s, "x", c.outpaint.x);
      read_opt(s, "eta", c.outpaint.eta);
    }
    if (j.contains("eval")) {
      const Json& s = j.at("eval");
      reject_unknown_keys(s, {"n", "extractor", "distance"}, "eval");
      read_opt(s, "n", c.eval.n);
      read_opt(s, "extractor", c.eval.extractor);
      read_opt(s, "distance", c.eval.distance);
    }
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

SampleConfig to_sample_config(const SampleSection& s, const std::vector<Dims>& train_dims, int index) {
  SampleConfig cfg;
  const Dims full = train_dims.back();
  if (s.width_scale != 1.0 || s.height_scale != 1.0)
    cfg.out_dims = Dims{round_dim(full.h * s.height_scale), round_dim(full.w * s.width_scale)};
  cfg.init_dims_scale = s.init_dims_scale;
  cfg.start_t_override = s.start_t_override;
  cfg.sigma_mode = s.sigma_mode;
  cfg.seed = derive_seed(s.seed, static_cast<std::uint64_t>(index));
  return cfg;
}

GuidanceConfig to_guidance_config(const RunConfig& c, const std::vector<Dims>& train_dims, int index) {
  const GuidanceSection& g = c.guidance;
  GuidanceConfig out;
  out.mode = guidance_mode_from_string(g.mode);
  out.prompt = g.prompt;
  out.f = g.f;
  out.eta = g.eta;
  out.lambda = g.lambda;
  out.start_scale = g.start_scale;
  out.free_final_steps = g.free_final_steps;
  out.descent_variant = g.descent_variant;
  out.roi = g.roi;
  out.aug = {g.crops, g.min_crop, g.flips};
  out.aug_seed = derive_seed(g.aug_seed, static_cast<std::uint64_t>(index));
  out.sample = to_sample_config(c.sample, train_dims, index);
  return out;
}

}  // namespace sinddm
