#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "sinddm/error.hpp"
#include "sinddm/guidance.hpp"
#include "fixtures.hpp"

using namespace sinddm;
using sinddm::testing::TinySetup;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("templates and prompt expansion") {
  CHECK(text_templates(false).size() == 4);
  const auto low = text_templates(true);
  CHECK(low.size() == 26);
  CHECK(std::set<std::string>(low.begin(), low.end()).size() == 26);
  for (const auto& t : low) CHECK(t.find("{}") != std::string::npos);
  const auto e = expand_prompt("fire", true);
  CHECK(e[0] == "photo of fire.");
  CHECK(e[23] == "fire");
}

TEST_CASE("stub embedders") {
  const LinearStubEmbedder lin;
  const ImageGrid img = sinddm::testing::textured_image(16, 16, 2);
  CHECK(norm(lin.embed_image(img)) == doctest::Approx(1.0));
  CHECK(norm(lin.embed_text("a cat")) == doctest::Approx(1.0));
  CHECK(lin.embed_text("a cat") == lin.embed_text("a cat"));
  CHECK(lin.embed_text("a cat") != lin.embed_text("a dog"));
  CHECK_THROWS_AS(lin.embed_image(sinddm::testing::textured_image(8, 16)), InvalidArgument);

  // Vector-Jacobian product against finite differences of dot(g, embed).
  Rng rng(3);
  std::vector<double> g(lin.dim());
  for (double& v : g) v = rng.normal();
  const ImageGrid vjp = lin.embed_image_vjp(img, g);
  for (std::size_t i = 0; i < img.size(); i += 97) {
    ImageGrid up = img, dn = img;
    up[i] += 1e-5;
    dn[i] -= 1e-5;
    const auto eu = lin.embed_image(up), ed = lin.embed_image(dn);
    double fd = 0;
    for (int k = 0; k < lin.dim(); ++k) fd += g[k] * (eu[k] - ed[k]) / 2e-5;
    CHECK(vjp[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }

  const ConstantEmbedder con("zebra");
  CHECK(con.embed_image(img) == con.embed_text("zebra"));
  for (double v : con.embed_image_vjp(img, g).data()) CHECK(v == 0.0);
  CHECK(make_embedder("stub-linear")->name() == "stub-linear");
  CHECK_THROWS_AS(make_embedder("clip-vit"), InvalidArgument);
}

TEST_CASE("clip loss with a constant embedder") {
  const ConstantEmbedder con("zebra");
  Rng rng(1);
  const ClipResult r = clip_loss_and_grad(con, sinddm::testing::textured_image(20, 24), "zebra", {}, rng);
  CHECK(std::abs(r.loss) < 1e-6);
  for (double v : r.grad.data()) CHECK(v == 0.0);
}

TEST_CASE("clip gradient matches finite differences") {
  const LinearStubEmbedder lin;
  const ImageGrid img = sinddm::testing::textured_image(20, 20, 5);
  AugmentConfig aug;
  aug.crops = 4;
  auto loss_at = [&](const ImageGrid& x) {
    Rng rng(8);
    return clip_loss_and_grad(lin, x, "a red apple", aug, rng);
  };
  const ClipResult base = loss_at(img);
  CHECK(base.loss > 0.0);
  CHECK(base.loss < 2.0);
  Rng pick(4);
  for (int k = 0; k < 12; ++k) {
    const std::size_t i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(img.size()) - 1));
    ImageGrid up = img, dn = img;
    up[i] += 1e-4;
    dn[i] -= 1e-4;
    const double fd = (loss_at(up).loss - loss_at(dn).loss) / 2e-4;
    CHECK(std::abs(base.grad[i] - fd) < 1e-3 * std::max(1.0, std::abs(fd)));
  }
  // Same RNG state, same result.
  CHECK(loss_at(img).grad == base.grad);
}

TEST_CASE("clip loss validation") {
  const LinearStubEmbedder lin;
  Rng rng(1);
  const ImageGrid img = sinddm::testing::textured_image(16, 16);
  CHECK_THROWS_AS(clip_loss_and_grad(lin, img, "", {}, rng), InvalidArgument);
  AugmentConfig bad;
  bad.crops = 0;
  CHECK_THROWS_AS(clip_loss_and_grad(lin, img, "x", bad, rng), InvalidArgument);
  bad.crops = 2;
  bad.min_crop = 0.0;
  CHECK_THROWS_AS(clip_loss_and_grad(lin, img, "x", bad, rng), InvalidArgument);
}

TEST_CASE("quantile mask") {
  ImageGrid g(1, 4, 1);
  g[0] = 4;
  g[1] = 3;
  g[2] = 2;
  g[3] = 1;
  const ImageGrid m = quantile_mask(g, 0.5);
  CHECK(m.channels() == 1);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 1.0);
  CHECK(m[2] == 0.0);
  CHECK(m[3] == 0.0);
  const ImageGrid none = quantile_mask(g, 0.0), all = quantile_mask(g, 1.0);
  for (double v : none.data()) CHECK(v == 0.0);
  for (double v : all.data()) CHECK(v == 1.0);

  // Ties break toward earlier pixels.
  const ImageGrid flat(1, 4, 3, 0.5);
  const ImageGrid tm = quantile_mask(flat, 0.5);
  CHECK(tm[0] == 1.0);
  CHECK(tm[1] == 1.0);
  CHECK(tm[3] == 0.0);

  Rng rng(2);
  const ImageGrid big = sinddm::testing::random_image({17, 23}, rng);
  for (double f : {0.1, 0.3, 0.77}) {
    const ImageGrid q = quantile_mask(big, f);
    double ones = 0;
    for (double v : q.data()) ones += v;
    CHECK(std::abs(ones / q.pixels() - f) <= 1.0 / q.pixels());
  }
  CHECK_THROWS_AS(quantile_mask(g, 1.5), InvalidArgument);
}

TEST_CASE("roi update contracts toward the target inside the mask") {
  Rng rng(5);
  const ImageGrid x = sinddm::testing::random_image({6, 6}, rng);
  const ImageGrid target = sinddm::testing::random_image({6, 6}, rng);
  ImageGrid mask(6, 6, 1);
  for (int y = 1; y < 4; ++y) mask.at(y, 2, 0) = 1.0;

  CHECK(roi_update(x, target, mask, 0.0) == x);
  const ImageGrid full = roi_update(x, target, mask, 1.0);
  const ImageGrid half = roi_update(x, target, mask, 0.3);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 6; ++xx)
      for (int c = 0; c < 3; ++c) {
        if (mask.at(y, xx, 0) != 0.0) {
          CHECK(full.at(y, xx, c) == target.at(y, xx, c));
          CHECK(std::abs(half.at(y, xx, c) - target.at(y, xx, c)) ==
                doctest::Approx(0.7 * std::abs(x.at(y, xx, c) - target.at(y, xx, c))));
        } else {
          CHECK(half.at(y, xx, c) == x.at(y, xx, c));
        }
      }
  CHECK_THROWS_AS(roi_update(x, target, ImageGrid(6, 6, 3), 0.5), InvalidArgument);
}

TEST_CASE("clip update hand case") {
  ImageGrid x0(1, 2, 3), prev(1, 2, 3), grad(1, 2, 3), mask(1, 2, 1);
  x0.at(0, 0, 0) = 0.6;
  x0.at(0, 0, 1) = 0.8;
  grad.at(0, 0, 0) = 0.3;
  grad.at(0, 0, 1) = 0.4;
  mask[0] = 1.0;
  x0.at(0, 1, 0) = 1.0;
  prev.at(0, 1, 0) = 0.0;
  grad.at(0, 1, 2) = 100.0;  // outside the mask: ignored by delta

  // delta = |x0 . m| / |g . m| = 1 / 0.5 = 2.
  const ImageGrid a = clip_update(x0, prev, grad, mask, 0.25, 0.1);
  CHECK(a.at(0, 0, 0) == doctest::Approx(0.15));
  CHECK(a.at(0, 0, 1) == doctest::Approx(0.2));
  CHECK(a.at(0, 0, 2) == 0.0);
  CHECK(a.at(0, 1, 0) == doctest::Approx(0.1));
  const ImageGrid d = clip_update(x0, prev, grad, mask, 0.25, 0.1, true);
  CHECK(d.at(0, 0, 0) == doctest::Approx(0.45));
  CHECK(d.at(0, 0, 1) == doctest::Approx(0.6));

  // No gradient on the mask: masked pixels pass through.
  const ImageGrid z = clip_update(x0, prev, ImageGrid(1, 2, 3), mask, 0.25, 1.0);
  CHECK(z == x0);
}

TEST_CASE("rectangles") {
  const RoiRect r = scale_rect({10, 20, 30, 40}, {100, 100}, {50, 25});
  CHECK(r.y == 5);
  CHECK(r.x == 5);
  CHECK(r.h == 15);
  CHECK(r.w == 10);
  const RoiRect tiny = scale_rect({99, 99, 1, 1}, {100, 100}, {10, 10});
  CHECK(tiny.h == 1);
  CHECK(tiny.y + tiny.h <= 10);
  const std::vector<RoiRect> rects{{0, 0, 2, 2}, {1, 1, 2, 2}};
  const ImageGrid m = rect_mask({4, 4}, rects);
  double ones = 0;
  for (double v : m.data()) ones += v;
  CHECK(ones == 7.0);

  const ImageGrid src(2, 3, 3, 0.5);
  const RoiTarget t = paste_target(src, {5, 5}, 1, 2);
  CHECK(t.target.at(1, 2, 0) == 0.5);
  CHECK(t.target.at(0, 0, 0) == 0.0);
  CHECK(t.mask.at(2, 4, 0) == 1.0);
  CHECK(t.mask.at(3, 4, 0) == 0.0);
  CHECK_THROWS_AS(paste_target(src, {5, 5}, 4, 0), InvalidArgument);
}

TEST_CASE("guidance with a zero gradient and lambda 1 leaves sampling unchanged") {
  TinySetup f;
  const ConstantEmbedder con("stripes");
  GuidanceConfig g;
  g.mode = GuidanceMode::content;
  g.prompt = "stripes";
  g.lambda = 1.0;
  g.sample.seed = 17;
  const ReverseRun run = guided_run_settings(f.sampler, g);
  CHECK(run.zero_gamma_all);
  CHECK(run.sigma_mode == SigmaMode::ddpm_all_scales);
  GuidanceTrace trace;
  const ImageGrid guided = guided_sample(f.sampler, g, &con, &trace);
  CHECK(guided == f.sampler.run(run));
  CHECK(!trace.events.empty());
}

TEST_CASE("content guidance: mask made once, upsampled per scale, guidance window") {
  TinySetup f;
  const LinearStubEmbedder lin;
  GuidanceConfig g;
  g.prompt = "fire";
  g.aug.crops = 2;
  g.start_scale = 0;
  g.sample.seed = 2;
  g.sample.start_t_override = {0, 8, 8};
  GuidanceTrace trace;
  const ImageGrid out = guided_sample(f.sampler, g, &lin, &trace);
  CHECK(out.dims() == f.pyr.dims.back());
  int created = 0;
  std::map<int, std::size_t> ones_at;
  for (const GuidanceEvent& e : trace.events) {
    if (e.kind == GuidanceEvent::Kind::mask_created) {
      ++created;
      CHECK(e.s == 0);
      CHECK(e.t == f.plan.start_t[0] - f.plan.noise.T / 2);
    }
    if (e.kind != GuidanceEvent::Kind::clip_update) continue;
    if (e.s == 0) CHECK(e.t <= f.plan.start_t[0] - f.plan.noise.T / 2);
    if (e.s == 2) CHECK(e.t > g.free_final_steps);
    // The mask never changes within a scale.
    auto [it, fresh] = ones_at.emplace(e.s, e.mask_ones);
    if (!fresh) CHECK(it->second == e.mask_ones);
  }
  CHECK(created == 1);
  CHECK(ones_at.size() == 3);
  const auto px0 = static_cast<double>(f.pyr.dims[0].h * f.pyr.dims[0].w);
  CHECK(std::abs(ones_at[0] / px0 - g.f) <= 1.0 / px0);
}

TEST_CASE("start scale skips earlier scales") {
  TinySetup f;
  const LinearStubEmbedder lin;
  GuidanceConfig g;
  g.prompt = "fire";
  g.aug.crops = 2;
  g.start_scale = 1;
  g.sample.start_t_override = {0, 8, 8};
  GuidanceTrace trace;
  guided_sample(f.sampler, g, &lin, &trace);
  for (const GuidanceEvent& e : trace.events) CHECK(e.s >= 1);
}

TEST_CASE("style guidance touches only the finest scale with a full mask") {
  TinySetup f;
  const LinearStubEmbedder lin;
  GuidanceConfig g;
  g.mode = GuidanceMode::style;
  g.prompt = "van gogh";
  g.aug.crops = 2;
  g.sample.start_t_override = {0, 8, 8};
  GuidanceTrace trace;
  guided_sample(f.sampler, g, &lin, &trace);
  REQUIRE(!trace.events.empty());
  const Dims fin = f.pyr.dims.back();
  for (const GuidanceEvent& e : trace.events) {
    CHECK(e.s == 2);
    CHECK(e.mask_ones == std::size_t(fin.h * fin.w));
  }
}

TEST_CASE("roi-text guidance masks only the rectangles") {
  TinySetup f;
  const LinearStubEmbedder lin;
  GuidanceConfig g;
  g.mode = GuidanceMode::roi_text;
  g.prompt = "moon";
  g.aug.crops = 2;
  g.roi = {{4, 4, 16, 12}};
  g.sample.start_t_override = {0, 8, 8};
  GuidanceTrace trace;
  guided_sample(f.sampler, g, &lin, &trace);
  for (const GuidanceEvent& e : trace.events)
    if (e.s == 2 && e.kind == GuidanceEvent::Kind::clip_update) CHECK(e.mask_ones == 16u * 12u);
}

TEST_CASE("image-roi guidance pulls the region toward the target") {
  TinySetup f;
  const Dims out = f.pyr.dims.back();
  const ImageGrid patch(12, 12, 3, 0.8);
  const RoiTarget t = paste_target(patch, out, 10, 10);
  GuidanceConfig g;
  g.mode = GuidanceMode::image_roi;
  g.target = t.target;
  g.target_mask = t.mask;
  g.eta = 0.5;
  g.sample.seed = 5;
  GuidanceTrace trace;
  const ImageGrid guided = guided_sample(f.sampler, g, nullptr, &trace);
  const ImageGrid plain = f.sampler.run(guided_run_settings(f.sampler, g));
  auto roi_err = [&](const ImageGrid& img) {
    double e = 0;
    for (int y = 10; y < 22; ++y)
      for (int x = 10; x < 22; ++x)
        for (int c = 0; c < 3; ++c) e += std::abs(img.at(y, x, c) - 0.8);
    return e;
  };
  CHECK(roi_err(guided) < roi_err(plain));
  for (const GuidanceEvent& e : trace.events) CHECK(e.s < 2);
}

TEST_CASE("guidance validation") {
  TinySetup f;
  const LinearStubEmbedder lin;
  GuidanceConfig g;
  g.prompt = "x";
  CHECK_NOTHROW(validate_guidance(g, f.sampler, &lin));
  CHECK_THROWS_AS(validate_guidance(g, f.sampler, nullptr), InvalidArgument);
  GuidanceConfig bad = g;
  bad.f = 1.2;
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, &lin), InvalidArgument);
  bad = g;
  bad.prompt.clear();
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, &lin), InvalidArgument);
  bad = g;
  bad.start_scale = 3;
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, &lin), InvalidArgument);
  bad = g;
  bad.mode = GuidanceMode::roi_text;
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, &lin), InvalidArgument);
  bad.roi = {{0, 0, 100, 100}};
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, &lin), InvalidArgument);
  bad = g;
  bad.mode = GuidanceMode::image_roi;
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, nullptr), InvalidArgument);
  bad.target = ImageGrid(5, 5, 3);
  bad.target_mask = ImageGrid(5, 5, 1);
  CHECK_THROWS_AS(validate_guidance(bad, f.sampler, nullptr), InvalidArgument);
  for (GuidanceMode m : {GuidanceMode::content, GuidanceMode::style, GuidanceMode::roi_text, GuidanceMode::image_roi})
    CHECK(guidance_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(guidance_mode_from_string("global"), InvalidArgument);
}
