#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sinddm/json_io.hpp"
#include "sinddm/png_io.hpp"
#include "support.hpp"

using namespace sinddm;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("SINDDM_CLI");
  REQUIRE_MESSAGE(p != nullptr, "SINDDM_CLI must point at the sinddm binary");
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Result {
  int code = -1;
  std::string out, err;
};

Result run(const std::string& args, const fs::path& scratch) {
  const fs::path o = scratch / "stdout.txt", e = scratch / "stderr.txt";
  const std::string cmd = "'" + cli_path() + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

const char* kTinyModel =
    " --hidden-width 4 --blocks 1 --convs-per-block 2 --embed-dim 8 --time-embed-width 8"
    " --T 8 --num-scales 2 --batch 2";

// One trained checkpoint shared by the tests below.
struct Trained {
  fs::path dir = sinddm::testing::temp_dir("cli");
  fs::path image = dir / "train.png";
  fs::path run_dir = dir / "train-run";
  Result result;
  Trained() {
    write_png(image, sinddm::testing::textured_image(32, 32, 4));
    result = run("train --image '" + image.string() + "' --out '" + run_dir.string() + "' --steps 4 --seed 3" +
                     kTinyModel,
                 dir);
  }
  fs::path ckpt() const { return run_dir / "ckpt"; }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("train writes a checkpoint, config and loss log") {
  const Trained& t = trained();
  INFO(t.result.err);
  REQUIRE(t.result.code == 0);
  CHECK(fs::exists(t.ckpt()));
  const Json cfg = Json::parse(slurp(t.run_dir / "config.json"));
  CHECK(cfg["train"]["seed"] == 3);
  CHECK(cfg["train"]["steps"] == 4);
  std::istringstream log(slurp(t.run_dir / "loss.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const Json j = Json::parse(line);
    CHECK(j.contains("loss"));
    CHECK(j.contains("scale"));
    CHECK(j["step"] == lines);
  }
  CHECK(lines == 4);
}

TEST_CASE("inspect prints the checkpoint summary") {
  const Trained& t = trained();
  REQUIRE(t.result.code == 0);
  const Result r = run("inspect --ckpt '" + t.ckpt().string() + "'", t.dir);
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j["step"] == 4);
  CHECK(j["dims"].size() == 2);
  CHECK(j["model"]["hidden_width"] == 4);
  CHECK(j.contains("fingerprint"));
}

TEST_CASE("same seed gives identical sample bytes") {
  const Trained& t = trained();
  REQUIRE(t.result.code == 0);
  const fs::path a = t.dir / "sa", b = t.dir / "sb", c = t.dir / "sc";
  const std::string base = "sample --ckpt '" + t.ckpt().string() + "' --n 2 --seed 11 --out ";
  REQUIRE(run(base + "'" + a.string() + "' --dump-scales", t.dir).code == 0);
  REQUIRE(run(base + "'" + b.string() + "'", t.dir).code == 0);
  REQUIRE(run("sample --ckpt '" + t.ckpt().string() + "' --n 1 --seed 12 --out '" + c.string() + "'", t.dir).code == 0);
  CHECK(slurp(a / "sample_000.png") == slurp(b / "sample_000.png"));
  CHECK(slurp(a / "sample_001.png") == slurp(b / "sample_001.png"));
  CHECK(slurp(a / "sample_000.png") != slurp(a / "sample_001.png"));
  CHECK(slurp(c / "sample_000.png") != slurp(a / "sample_000.png"));
  CHECK(fs::exists(a / "sample_000_scale0.png"));
  CHECK(read_png(a / "sample_000.png").dims() == Dims{32, 32});
  CHECK(Json::parse(slurp(a / "config.json"))["sample"]["seed"] == 11);
}

TEST_CASE("a config file supplies defaults and flags override it") {
  const Trained& t = trained();
  REQUIRE(t.result.code == 0);
  const fs::path cfg = t.dir / "run.json";
  std::ofstream(cfg) << R"({"sample": {"seed": 11, "n": 1, "width_scale": 2.0}})";
  const fs::path out = t.dir / "from-config";
  REQUIRE(run("sample --config '" + cfg.string() + "' --ckpt '" + t.ckpt().string() + "' --out '" + out.string() + "'",
              t.dir)
              .code == 0);
  CHECK(read_png(out / "sample_000.png").dims() == Dims{32, 64});
  CHECK(!fs::exists(out / "sample_001.png"));
  const fs::path over = t.dir / "override";
  REQUIRE(run("sample --config '" + cfg.string() + "' --width-scale 1 --ckpt '" + t.ckpt().string() + "' --out '" +
                  over.string() + "'",
              t.dir)
              .code == 0);
  CHECK(read_png(over / "sample_000.png").dims() == Dims{32, 32});

  std::ofstream(cfg, std::ios::trunc) << R"({"sample": {"sed": 1}})";
  const Result bad = run("sample --config '" + cfg.string() + "' --ckpt '" + t.ckpt().string() + "'", t.dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("sed") != std::string::npos);
}

TEST_CASE("exit codes") {
  const Trained& t = trained();
  const fs::path d = t.dir;
  CHECK(run("", d).code == 2);
  CHECK(run("frobnicate", d).code == 2);
  CHECK(run("sample --bogus-flag", d).code == 2);
  CHECK(run("sample", d).code == 2);  // --ckpt missing
  CHECK(run("sample --ckpt x --sigma-mode ddim", d).code == 2);
  CHECK(run("eval --ckpt x --n 1", d).code == 2);
  CHECK(run("--help", d).code == 0);
  const Result missing = run("sample --ckpt '" + (d / "missing.ckpt").string() + "' --out '" + (d / "m").string() + "'", d);
  CHECK(missing.code == 1);
  CHECK(!missing.err.empty());
  std::ofstream(d / "junk.ckpt") << "not a checkpoint";
  CHECK(run("inspect --ckpt '" + (d / "junk.ckpt").string() + "'", d).code == 1);
}

TEST_CASE("guide, manipulation and eval subcommands produce their artifacts") {
  const Trained& t = trained();
  REQUIRE(t.result.code == 0);
  const std::string ck = " --ckpt '" + t.ckpt().string() + "'";
  const fs::path g = t.dir / "guide";
  Result r = run("guide" + ck + " --prompt fire --crops 2 --seed 1 --out '" + g.string() + "'", t.dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(g / "guided_000.png"));
  CHECK(fs::exists(g / "trace.jsonl"));

  const fs::path st = t.dir / "style";
  r = run("style-transfer" + ck + " --content '" + t.image.string() + "' --out '" + st.string() + "'", t.dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(st / "styled_000.png"));

  const fs::path hm = t.dir / "harm";
  r = run("harmonize" + ck + " --composite '" + t.image.string() + "' --out '" + hm.string() + "'", t.dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(hm / "harmonized_000.png"));

  const fs::path op = t.dir / "outpaint";
  r = run("outpaint" + ck + " --at 0,16 --out '" + op.string() + "'", t.dir);
  REQUIRE(r.code == 0);
  CHECK(read_png(op / "outpaint_000.png").dims() == Dims{32, 64});

  const fs::path ev = t.dir / "eval";
  r = run("eval" + ck + " --n 2 --seed 4 --out '" + ev.string() + "'", t.dir);
  REQUIRE(r.code == 0);
  const Json rep = Json::parse(slurp(ev / "report.json"));
  CHECK(rep["n_samples"] == 2);
  CHECK(Json::parse(r.out) == rep);
}

TEST_CASE("resume refuses a changed configuration unless forced") {
  const Trained& t = trained();
  REQUIRE(t.result.code == 0);
  const std::string base = "train --resume '" + t.ckpt().string() + "' --image '" + t.image.string() + "'";
  const fs::path same = t.dir / "resume-same";
  CHECK(run(base + " --steps 6 --seed 3" + kTinyModel + " --out '" + same.string() + "'", t.dir).code == 0);
  const Result changed = run(base + " --steps 6 --seed 3 --lr 0.01" + kTinyModel, t.dir);
  CHECK(changed.code == 1);
  CHECK(changed.err.find("fingerprint") != std::string::npos);
  const fs::path forced = t.dir / "resume-forced";
  CHECK(run(base + " --steps 6 --seed 3 --lr 0.01 --force" + kTinyModel + " --out '" + forced.string() + "'", t.dir)
            .code == 0);
}
