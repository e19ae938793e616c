#include "sinddm/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "sinddm/checkpoint.hpp"
#include "sinddm/error.hpp"
#include "sinddm/evaluation.hpp"
#include "sinddm/guidance.hpp"
#include "sinddm/manipulations.hpp"
#include "sinddm/png_io.hpp"
#include "sinddm/pyramid.hpp"
#include "sinddm/run_config.hpp"
#include "sinddm/sampler.hpp"
#include "sinddm/trainer.hpp"

namespace fs = std::filesystem;

namespace sinddm {

fs::path default_runs_dir() {
  const char* env = std::getenv("SINDDM_RUNS_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::string> prescan_config(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

Json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read config file " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError("config file " + p.string() + " is not valid JSON: " + e.what());
  }
}

bool json_has(const Json& j, const char* section, const char* key) {
  return j.is_object() && j.contains(section) && j.at(section).is_object() && j.at(section).contains(key);
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + s + "' is not a comma-separated integer list");
    }
  }
  return out;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return o.str();
}

fs::path make_run_dir(const std::string& command, const std::string& out) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else {
    const fs::path base = default_runs_dir() / (command + "-" + timestamp());
    dir = base;
    for (int k = 1; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream o(p);
  if (!o) throw IoError("cannot write " + p.string());
  o << s;
  if (!o) throw IoError("failed writing " + p.string());
}

std::string indexed(const std::string& stem, int i) {
  std::ostringstream o;
  o << stem << "_" << std::setw(3) << std::setfill('0') << i << ".png";
  return o.str();
}

ImageGrid read_mask_png(const fs::path& p) {
  const ImageGrid rgb = read_png(p);
  ImageGrid m(rgb.dims(), 1);
  for (std::size_t q = 0; q < m.pixels(); ++q) {
    const double v = (rgb[q * 3] + rgb[q * 3 + 1] + rgb[q * 3 + 2]) / 3.0;
    m[q] = v > 0.0 ? 1.0 : 0.0;
  }
  return m;
}

class ScaleDumper : public SamplerHooks {
 public:
  ScaleDumper(fs::path dir, int index) : dir_(std::move(dir)), index_(index) {}
  void on_scale_done(int s, const ImageGrid& x0) override {
    std::ostringstream name;
    name << "sample_" << std::setw(3) << std::setfill('0') << index_ << "_scale" << s << ".png";
    write_png(dir_ / name.str(), x0);
  }

 private:
  fs::path dir_;
  int index_;
};

// Options shared across subcommands, bound straight into the config.
struct Cli {
  RunConfig cfg;
  Json raw;  // config file contents, to tell explicit settings from defaults
  std::string out_dir;
  std::string image, ckpt, resume, content, composite, target, mask;
  bool force = false;
  std::string padding, gap_norm, sigma_mode, start_t, lr_halving, at;
  std::vector<std::string> roi;
  int init_dims_scale = -1;
  int s_inject = -1;
  bool no_flips = false;
};

void add_sample_options(CLI::App* sub, Cli& c) {
  sub->add_option("--seed", c.cfg.sample.seed, "Sampling seed");
  sub->add_option("--n", c.cfg.sample.n, "Number of images")->check(CLI::PositiveNumber);
  sub->add_option("--width-scale", c.cfg.sample.width_scale, "Output width relative to the training image");
  sub->add_option("--height-scale", c.cfg.sample.height_scale, "Output height relative to the training image");
  sub->add_option("--init-dims-scale", c.init_dims_scale, "Object-size control: run early scales at this scale's dims");
  sub->add_option("--sigma-mode", c.sigma_mode, "ddpm-scale0-only | ddpm-all-scales");
  sub->add_option("--start-t", c.start_t, "Comma-separated per-scale start timesteps (0 keeps the plan)");
}

void add_injection_options(CLI::App* sub, Cli& c) {
  sub->add_option("--s-inject", c.s_inject, "Injection scale (default N-2)");
  sub->add_option("--t-inject", c.cfg.injection.t_inject, "Injection timestep (default half the scale's start)");
}

int cmd_train(Cli& c, std::ostream& out) {
  RunConfig& cfg = c.cfg;
  if (c.image.empty() && c.resume.empty()) throw UsageError("train needs --image (or --resume)");
  std::optional<Checkpoint> resumed;
  if (!c.resume.empty()) resumed = load_checkpoint(c.resume);
  if (!c.lr_halving.empty()) {
    cfg.train.lr_halving_steps.clear();
    for (int v : parse_int_list(c.lr_halving, "--lr-halving")) cfg.train.lr_halving_steps.push_back(v);
  } else if (!json_has(c.raw, "train", "lr_halving_steps")) {
    // A resumed run keeps its schedule; a fresh one scales the reference milestones to its length.
    cfg.train.lr_halving_steps =
        resumed ? resumed->train.lr_halving_steps : scaled_lr_milestones(cfg.train.steps);
  }
  if (!c.image.empty()) cfg.inputs["image"] = c.image;
  if (!c.resume.empty()) cfg.inputs["resume"] = c.resume;
  cfg.train.validate();
  cfg.model.validate();

  std::optional<Trainer> trainer;
  if (resumed) {
    cfg.model = resumed->spec;
    trainer.emplace(Trainer::resume(*resumed, cfg.train, c.force));
  } else {
    trainer.emplace(read_png(c.image), cfg.train, cfg.model);
  }
  cfg.train.num_scales = trainer->pyramid().num_scales();

  const fs::path dir = make_run_dir("train", c.out_dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  std::ofstream log(dir / "loss.jsonl", c.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + (dir / "loss.jsonl").string());

  const fs::path ckpt_path = dir / "ckpt";
  const std::int64_t every = std::max<std::int64_t>(1, cfg.train.steps / 20);
  out << "training " << to_string(trainer->pyramid().dims.back()) << " image, " << trainer->pyramid().num_scales()
      << " scales, " << count_params(cfg.model) << " parameters, " << cfg.train.steps << " steps\n";
  trainer->run(
      [&](const StepRecord& r) {
        log << Json{{"step", r.step}, {"scale", r.scale}, {"loss", r.loss}, {"lr", r.lr}}.dump() << '\n';
        if (r.step % every == 0 || r.step == cfg.train.steps)
          out << "step " << r.step << " loss " << r.loss << '\n' << std::flush;
      },
      [&](const Checkpoint& ck) { save_checkpoint(ck, ckpt_path); });
  save_checkpoint(trainer->checkpoint(), ckpt_path);
  out << "checkpoint written to " << ckpt_path.string() << '\n';
  return kExitOk;
}

Sampler load_sampler(Cli& c, Checkpoint& ck) {
  if (c.ckpt.empty()) throw UsageError("--ckpt is required");
  c.cfg.inputs["ckpt"] = c.ckpt;
  ck = load_checkpoint(c.ckpt);
  c.cfg.model = ck.spec;
  c.cfg.train = ck.train;
  return Sampler(ck);
}

int cmd_sample(Cli& c, std::ostream& out) {
  Checkpoint ck;
  const Sampler sampler = load_sampler(c, ck);
  const fs::path dir = make_run_dir("sample", c.out_dir);
  write_text(dir / "config.json", to_json(c.cfg).dump(2) + "\n");
  for (int i = 0; i < c.cfg.sample.n; ++i) {
    const SampleConfig sc = to_sample_config(c.cfg.sample, ck.dims, i);
    ScaleDumper dumper(dir, i);
    const ImageGrid img = sampler.sample(sc, c.cfg.sample.dump_scales ? &dumper : nullptr);
    write_png(dir / indexed("sample", i), img);
    out << (dir / indexed("sample", i)).string() << " " << to_string(img.dims()) << '\n';
  }
  return kExitOk;
}

int cmd_guide(Cli& c, std::ostream& out) {
  Checkpoint ck;
  const Sampler sampler = load_sampler(c, ck);
  GuidanceSection& gs = c.cfg.guidance;
  if (!c.roi.empty()) {
    gs.roi.clear();
    for (const std::string& r : c.roi) {
      const auto v = parse_int_list(r, "--roi");
      if (v.size() != 4) throw UsageError("--roi expects y,x,h,w");
      gs.roi.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  if (c.no_flips) gs.flips = false;
  const GuidanceMode mode = guidance_mode_from_string(gs.mode);
  std::unique_ptr<Embedder> embedder;
  if (mode != GuidanceMode::image_roi) embedder = make_embedder(gs.embedder, gs.prompt);
  std::optional<ImageGrid> target, mask;
  if (mode == GuidanceMode::image_roi) {
    if (c.target.empty() || c.mask.empty()) throw UsageError("image-roi guidance needs --target and --mask");
    c.cfg.inputs["target"] = c.target;
    c.cfg.inputs["mask"] = c.mask;
    target = read_png(c.target);
    mask = read_mask_png(c.mask);
  }
  if (gs.from_image && mode != GuidanceMode::style) throw UsageError("--from-image applies to style guidance only");

  const fs::path dir = make_run_dir("guide", c.out_dir);
  write_text(dir / "config.json", to_json(c.cfg).dump(2) + "\n");
  std::ofstream trace_log(dir / "trace.jsonl");
  for (int i = 0; i < c.cfg.sample.n; ++i) {
    GuidanceConfig g = to_guidance_config(c.cfg, ck.dims, i);
    g.target = target;
    g.target_mask = mask;
    GuidanceTrace trace;
    const ImageGrid img = gs.from_image ? text_style_transfer(sampler, ck.train_image, *embedder, g, 0, &trace)
                                        : guided_sample(sampler, g, embedder.get(), &trace);
    write_png(dir / indexed("guided", i), img);
    for (const GuidanceEvent& e : trace.events) {
      static const char* kinds[] = {"mask_created", "mask_upsampled", "clip_update", "roi_update"};
      trace_log << Json{{"sample", i}, {"event", kinds[static_cast<int>(e.kind)]}, {"s", e.s}, {"t", e.t},
                        {"mask_ones", e.mask_ones}}
                       .dump()
                << '\n';
    }
    out << (dir / indexed("guided", i)).string() << " " << to_string(img.dims()) << '\n';
  }
  return kExitOk;
}

int cmd_inject(Cli& c, std::ostream& out, bool style) {
  Checkpoint ck;
  const Sampler sampler = load_sampler(c, ck);
  const std::string& src = style ? c.content : c.composite;
  if (src.empty()) throw UsageError(style ? "style-transfer needs --content" : "harmonize needs --composite");
  c.cfg.inputs[style ? "content" : "composite"] = src;
  const ImageGrid input = read_png(src);
  const fs::path dir = make_run_dir(style ? "style-transfer" : "harmonize", c.out_dir);
  write_text(dir / "config.json", to_json(c.cfg).dump(2) + "\n");
  for (int i = 0; i < c.cfg.sample.n; ++i) {
    InjectionSpec spec;
    spec.s_inject = c.cfg.injection.s_inject;
    spec.t_inject = c.cfg.injection.t_inject;
    spec.sigma_mode = c.cfg.sample.sigma_mode;
    spec.seed = derive_seed(c.cfg.sample.seed, static_cast<std::uint64_t>(i));
    const ImageGrid img = style ? style_transfer(sampler, ck.train_image, input, spec) : harmonize(sampler, input, spec);
    const std::string name = indexed(style ? "styled" : "harmonized", i);
    write_png(dir / name, img);
    out << (dir / name).string() << " " << to_string(img.dims()) << '\n';
  }
  return kExitOk;
}

int cmd_outpaint(Cli& c, std::ostream& out) {
  Checkpoint ck;
  const Sampler sampler = load_sampler(c, ck);
  if (!c.at.empty()) {
    const auto v = parse_int_list(c.at, "--at");
    if (v.size() != 2) throw UsageError("--at expects y,x");
    c.cfg.outpaint.y = v[0];
    c.cfg.outpaint.x = v[1];
  }
  const fs::path dir = make_run_dir("outpaint", c.out_dir);
  write_text(dir / "config.json", to_json(c.cfg).dump(2) + "\n");
  for (int i = 0; i < c.cfg.sample.n; ++i) {
    SampleConfig sc = to_sample_config(c.cfg.sample, ck.dims, i);
    const Dims out_dims = sc.out_dims.value_or(ck.dims.back());
    const ImageGrid img =
        outpaint(sampler, ck.train_image, out_dims, c.cfg.outpaint.y, c.cfg.outpaint.x, c.cfg.outpaint.eta, sc);
    write_png(dir / indexed("outpaint", i), img);
    out << (dir / indexed("outpaint", i)).string() << " " << to_string(img.dims()) << '\n';
  }
  return kExitOk;
}

int cmd_eval(Cli& c, std::ostream& out) {
  Checkpoint ck;
  load_sampler(c, ck);
  const auto extractor = c.cfg.eval.extractor.empty() ? nullptr : make_feature_extractor(c.cfg.eval.extractor);
  const auto distance = c.cfg.eval.distance.empty() ? nullptr : make_distance(c.cfg.eval.distance);
  const fs::path dir = make_run_dir("eval", c.out_dir);
  write_text(dir / "config.json", to_json(c.cfg).dump(2) + "\n");
  const MetricReport r = eval_report(ck, c.cfg.eval.n, extractor.get(), distance.get(), c.cfg.sample.seed);
  const std::string text = to_json(r).dump(2) + "\n";
  write_text(dir / "report.json", text);
  out << text;
  return kExitOk;
}

int cmd_inspect(Cli& c, std::ostream& out) {
  if (c.ckpt.empty()) throw UsageError("--ckpt is required");
  const Checkpoint ck = load_checkpoint(c.ckpt);
  Json dims = Json::array();
  for (Dims d : ck.dims) dims.push_back({d.h, d.w});
  const Json j{{"format_version", Checkpoint::kFormatVersion},
               {"model", to_json(ck.spec)},
               {"parameters", count_params(ck.spec)},
               {"train", to_json(ck.train)},
               {"r", ck.r},
               {"dims", dims},
               {"start_t", ck.plan.start_t},
               {"rmse", ck.plan.rmse},
               {"gap_norm", to_string(ck.plan.norm)},
               {"step", ck.step},
               {"fingerprint", fingerprint_hex(ck.fingerprint)}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Cli c;
  CLI::App app{"Single-image multi-scale diffusion: train, sample, guide and edit."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  try {
    if (const auto path = prescan_config(argc, argv)) {
      c.raw = read_json_file(*path);
      c.cfg = run_config_from_json(c.raw);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  RunConfig& cfg = c.cfg;
  c.padding = to_string(cfg.model.padding);
  c.gap_norm = to_string(cfg.train.gap_norm);
  c.sigma_mode = to_string(cfg.sample.sigma_mode);
  if (cfg.sample.init_dims_scale) c.init_dims_scale = *cfg.sample.init_dims_scale;
  if (cfg.injection.s_inject) c.s_inject = *cfg.injection.s_inject;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", "JSON run config; flags override its values");
    sub->add_option("--out", c.out_dir, "Run directory (default: $SINDDM_RUNS_DIR/<command>-<time>)");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model on one image");
  common(train);
  train->add_option("--image", c.image, "Training image (PNG)");
  train->add_option("--resume", c.resume, "Continue from a checkpoint");
  train->add_flag("--force", c.force, "Resume even if the config fingerprint differs");
  train->add_option("--steps", cfg.train.steps)->check(CLI::PositiveNumber);
  train->add_option("--batch", cfg.train.batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", cfg.train.lr);
  train->add_option("--lr-halving", c.lr_halving, "Comma-separated steps at which the learning rate halves");
  train->add_option("--ema-decay", cfg.train.ema_decay);
  train->add_option("--seed", cfg.train.seed);
  train->add_option("--T", cfg.train.T, "Diffusion steps per scale");
  train->add_option("--r", cfg.train.r, "Pyramid scale factor");
  train->add_option("--num-scales", cfg.train.num_scales, "Pyramid depth (0 = automatic)");
  train->add_option("--rf-area-ratio", cfg.train.rf_area_ratio);
  train->add_option("--gap-norm", c.gap_norm, "rmse | l2");
  train->add_flag("--blur-ablation", cfg.train.blur_ablation, "Train without blur mixing");
  train->add_option("--checkpoint-every", cfg.train.checkpoint_every);
  train->add_option("--blocks", cfg.model.blocks);
  train->add_option("--convs-per-block", cfg.model.convs_per_block);
  train->add_option("--hidden-width", cfg.model.hidden_width);
  train->add_option("--embed-dim", cfg.model.embed_dim);
  train->add_option("--time-embed-width", cfg.model.time_embed_width);
  train->add_option("--padding", c.padding, "layer | initial");

  CLI::App* sample = app.add_subcommand("sample", "Generate images from a checkpoint");
  common(sample);
  sample->add_option("--ckpt", c.ckpt, "Checkpoint file");
  add_sample_options(sample, c);
  sample->add_flag("--dump-scales", cfg.sample.dump_scales, "Also write each scale's final estimate");

  CLI::App* guide = app.add_subcommand("guide", "Guided generation (text or image ROI)");
  common(guide);
  guide->add_option("--ckpt", c.ckpt, "Checkpoint file");
  add_sample_options(guide, c);
  guide->add_option("--mode", cfg.guidance.mode, "content | style | roi-text | image-roi");
  guide->add_option("--prompt", cfg.guidance.prompt);
  guide->add_option("--embedder", cfg.guidance.embedder, "stub-linear | stub-constant");
  guide->add_option("--f", cfg.guidance.f, "Fill factor");
  guide->add_option("--eta", cfg.guidance.eta, "Strength");
  guide->add_option("--lambda", cfg.guidance.lambda, "Momentum");
  guide->add_option("--start-scale", cfg.guidance.start_scale);
  guide->add_option("--free-final-steps", cfg.guidance.free_final_steps);
  guide->add_flag("--descent-variant", cfg.guidance.descent_variant, "Gradient-descent form of the text update");
  guide->add_flag("--from-image", cfg.guidance.from_image, "Style mode: restyle the training image itself");
  guide->add_option("--roi", c.roi, "ROI rectangle y,x,h,w in output pixels (repeatable)");
  guide->add_option("--target", c.target, "image-roi: target contents (PNG at output size)");
  guide->add_option("--mask", c.mask, "image-roi: ROI mask (PNG, white = pinned)");
  guide->add_option("--crops", cfg.guidance.crops, "Augmented crops per step");
  guide->add_option("--min-crop", cfg.guidance.min_crop);
  guide->add_flag("--no-flips", c.no_flips);
  guide->add_option("--aug-seed", cfg.guidance.aug_seed);

  CLI::App* style = app.add_subcommand("style-transfer", "Re-render a content image with the model's style");
  common(style);
  style->add_option("--ckpt", c.ckpt, "Checkpoint trained on the style image");
  style->add_option("--content", c.content, "Content image (PNG)");
  add_sample_options(style, c);
  add_injection_options(style, c);

  CLI::App* harm = app.add_subcommand("harmonize", "Blend a pasted object into the background");
  common(harm);
  harm->add_option("--ckpt", c.ckpt, "Checkpoint trained on the background");
  harm->add_option("--composite", c.composite, "Naively pasted composite (PNG)");
  add_sample_options(harm, c);
  add_injection_options(harm, c);

  CLI::App* outp = app.add_subcommand("outpaint", "Extend the training image beyond its borders");
  common(outp);
  outp->add_option("--ckpt", c.ckpt, "Checkpoint file");
  add_sample_options(outp, c);
  outp->add_option("--at", c.at, "Top-left y,x of the original inside the output");
  outp->add_option("--eta", cfg.outpaint.eta, "ROI strength");

  CLI::App* eval = app.add_subcommand("eval", "Diversity and SIFID report over samples");
  common(eval);
  eval->add_option("--ckpt", c.ckpt, "Checkpoint file");
  eval->add_option("--n", cfg.eval.n, "Number of samples")->check(CLI::Range(2, 100000));
  eval->add_option("--seed", cfg.sample.seed);
  eval->add_option("--extractor", cfg.eval.extractor, "Feature extractor (empty to skip SIFID)");
  eval->add_option("--distance", cfg.eval.distance, "Perceptual distance (empty to skip)");

  CLI::App* inspect = app.add_subcommand("inspect", "Print a checkpoint summary");
  inspect->add_option("--ckpt", c.ckpt, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  cfg.command = name;
  auto given = [&](const char* flag) { return sub->count(flag) > 0; };

  int stage = kExitUsage;  // failures before a subcommand starts work are usage errors
  try {
    cfg.model.padding = padding_mode_from_string(c.padding);
    cfg.train.gap_norm = gap_norm_from_string(c.gap_norm);
    cfg.sample.sigma_mode = sigma_mode_from_string(c.sigma_mode);
    if (c.init_dims_scale >= 0) cfg.sample.init_dims_scale = c.init_dims_scale;
    if (c.s_inject >= 0) cfg.injection.s_inject = c.s_inject;
    if (!c.start_t.empty()) cfg.sample.start_t_override = parse_int_list(c.start_t, "--start-t");
    if (name == "train" && !given("--seed") && !json_has(c.raw, "train", "seed")) cfg.train.seed = fresh_seed();
    if (name != "train" && name != "inspect" && !given("--seed") && !json_has(c.raw, "sample", "seed"))
      cfg.sample.seed = fresh_seed();
    if (name == "outpaint" && !given("--width-scale") && !json_has(c.raw, "sample", "width_scale"))
      cfg.sample.width_scale = 2.0;
    if (name == "guide") guidance_mode_from_string(cfg.guidance.mode);

    stage = kExitRuntime;
    if (name == "train") return cmd_train(c, out);
    if (name == "sample") return cmd_sample(c, out);
    if (name == "guide") return cmd_guide(c, out);
    if (name == "style-transfer") return cmd_inject(c, out, true);
    if (name == "harmonize") return cmd_inject(c, out, false);
    if (name == "outpaint") return cmd_outpaint(c, out);
    if (name == "eval") return cmd_eval(c, out);
    if (name == "inspect") return cmd_inspect(c, out);
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return stage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace sinddm
