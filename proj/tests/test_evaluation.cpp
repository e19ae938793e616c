#include <doctest.h>

#include <algorithm>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "sinddm/error.hpp"
#include "sinddm/evaluation.hpp"
#include "fixtures.hpp"

using namespace sinddm;

namespace {

// Closed-form 2x2: tr sqrt(A) = sqrt(tr A + 2 sqrt(det A)) for A with non-negative eigenvalues.
double frechet_2x2(const Eigen::Vector2d& m1, const Eigen::Matrix2d& c1, const Eigen::Vector2d& m2,
                   const Eigen::Matrix2d& c2) {
  const Eigen::Matrix2d s1 = c1 + kSifidJitter * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d s2 = c2 + kSifidJitter * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d p = s1 * s2;
  const double tr_sqrt = std::sqrt(p.trace() + 2 * std::sqrt(p.determinant()));
  return (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2 * tr_sqrt;
}

Gaussian gaussian(Eigen::Vector2d m, Eigen::Matrix2d c) {
  Gaussian g;
  g.mean = m;
  g.cov = c;
  return g;
}

}  // namespace

TEST_CASE("mean_std is the population version") {
  const MeanStd m = mean_std({1, 2, 3, 4});
  CHECK(m.mean == 2.5);
  CHECK(m.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("pixel diversity hand case") {
  ImageGrid a(1, 1, 1, 0.0), b(1, 1, 1, 1.0);
  ImageGrid train(1, 2, 1);
  train[0] = 0.0;
  train[1] = 1.0;  // std 0.5
  CHECK(pixel_diversity({a, b}, train) == 1.0);
  CHECK(pixel_diversity({a, a, a}, train) == 0.0);
  CHECK_THROWS_AS(pixel_diversity({a}, train), InvalidArgument);
  CHECK_THROWS_AS(pixel_diversity({a, b}, ImageGrid(2, 2, 1, 0.3)), InvalidArgument);
}

TEST_CASE("pixel diversity uses channel-mean intensity and is scale-free") {
  Rng rng(3);
  std::vector<ImageGrid> s;
  for (int i = 0; i < 4; ++i) s.push_back(sinddm::testing::random_image({5, 6}, rng));
  const ImageGrid train = sinddm::testing::textured_image(8, 8);
  const double base = pixel_diversity(s, train);
  CHECK(base > 0.0);
  auto scaled = s;
  ImageGrid train2 = train;
  for (auto& img : scaled)
    for (double& v : img.data()) v *= 0.5;
  for (double& v : train2.data()) v *= 0.5;
  CHECK(pixel_diversity(scaled, train2) == doctest::Approx(base).epsilon(1e-12));

  // Opposite colour shifts that cancel in the mean intensity add no diversity.
  ImageGrid p(2, 2, 3, 0.0), q(2, 2, 3, 0.0);
  for (std::size_t px = 0; px < 4; ++px) {
    p[px * 3] = 0.5;
    p[px * 3 + 1] = -0.5;
  }
  CHECK(pixel_diversity({p, q}, train) == 0.0);
}

TEST_CASE("perceptual diversity") {
  const ImageGrid z(2, 2, 3, 0.0), o(2, 2, 3, 1.0);
  const MeanAbsDistance d;
  CHECK(perceptual_diversity({z, o, z}, d) == doctest::Approx(2.0 / 3.0));
  CHECK(pairwise_distances({z, o, z}, d).size() == 3);
  CHECK(perceptual_diversity({z, z}, d) == 0.0);
  CHECK_THROWS_AS(perceptual_diversity({z}, d), InvalidArgument);
}

TEST_CASE("stub feature extractor") {
  const StubFeatureExtractor ex(2);
  const ImageGrid img = sinddm::testing::textured_image(7, 9);
  const FeatureSet f = ex.extract(img);
  CHECK(f.rows() == 5 * 7);
  CHECK(f.cols() == 2);
  // First filter is a 3x3 box on intensity.
  double box = 0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) box += (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 27.0;
  CHECK(f(0, 0) == doctest::Approx(box));
  // Sobel filters normalised by 8 return the per-pixel slope of a ramp.
  ImageGrid ramp(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) ramp.at(y, x, c) = 0.1 * x;
  const FeatureSet r = StubFeatureExtractor(3).extract(ramp);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    CHECK(r(i, 1) == doctest::Approx(0.1));
    CHECK(r(i, 2) == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(StubFeatureExtractor(5), InvalidArgument);
  CHECK_THROWS_AS(ex.extract(ImageGrid(2, 5, 3)), InvalidArgument);
}

TEST_CASE("Frechet distance against the closed-form 2x2 case") {
  Eigen::Matrix2d c1, c2;
  c1 << 2.0, 0.3, 0.3, 1.0;
  c2 << 0.5, -0.1, -0.1, 0.8;
  const Eigen::Vector2d m1(0.1, -0.2), m2(0.4, 0.5);
  CHECK(frechet_distance(gaussian(m1, c1), gaussian(m2, c2)) ==
        doctest::Approx(frechet_2x2(m1, c1, m2, c2)).epsilon(1e-10));
  CHECK(frechet_distance(gaussian(m1, c1), gaussian(m2, c2)) ==
        doctest::Approx(frechet_distance(gaussian(m2, c2), gaussian(m1, c1))).epsilon(1e-12));
  // Equal covariances: only the mean shift remains.
  CHECK(frechet_distance(gaussian(m1, c1), gaussian(m2, c1)) == doctest::Approx((m1 - m2).squaredNorm()).epsilon(1e-9));
}

TEST_CASE("fit_gaussian and shrinkage") {
  FeatureSet f(4, 2);
  f << 1, 0, -1, 0, 0, 1, 0, -1;
  const Gaussian g = fit_gaussian(f);
  CHECK(g.mean.norm() == 0.0);
  CHECK(g.cov(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(g.cov(0, 1) == 0.0);
  CHECK(!g.shrunk);

  FeatureSet few(2, 3);
  few << 1, 2, 3, 3, 2, 1;
  const Gaussian s = fit_gaussian(few);
  CHECK(s.shrunk);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.cov);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK_THROWS_AS(fit_gaussian(FeatureSet(1, 2)), InvalidArgument);
}

TEST_CASE("sifid") {
  const StubFeatureExtractor ex;
  const ImageGrid x = sinddm::testing::textured_image(20, 20, 2);
  const ImageGrid y = sinddm::testing::textured_image(20, 20, 3);
  CHECK(sifid(x, x, ex) < 1e-6);
  CHECK(sifid(x, y, ex) > 1e-4);
  CHECK(sifid(x, y, ex) == doctest::Approx(sifid(y, x, ex)).epsilon(1e-9));
  bool shrunk = true;
  sifid(x, y, ex, &shrunk);
  CHECK(!shrunk);
}

TEST_CASE("metrics are invariant to sample order") {
  Rng rng(8);
  std::vector<ImageGrid> s;
  for (int i = 0; i < 5; ++i) s.push_back(sinddm::testing::random_image({9, 9}, rng));
  const ImageGrid train = sinddm::testing::textured_image(9, 9, 4);
  const StubFeatureExtractor ex;
  const MeanAbsDistance d;
  const MetricReport a = evaluate_samples(s, train, &ex, &d);
  std::vector<ImageGrid> p = s;
  std::reverse(p.begin(), p.end());
  std::swap(p[0], p[2]);
  const MetricReport b = evaluate_samples(p, train, &ex, &d);
  CHECK(a.pixel_div.mean == doctest::Approx(b.pixel_div.mean).epsilon(1e-12));
  CHECK(a.perceptual_div->mean == doctest::Approx(b.perceptual_div->mean).epsilon(1e-12));
  CHECK(a.perceptual_div->std == doctest::Approx(b.perceptual_div->std).epsilon(1e-12));
  CHECK(a.sifid->mean == doctest::Approx(b.sifid->mean).epsilon(1e-12));
  CHECK(a.sifid->std == doctest::Approx(b.sifid->std).epsilon(1e-12));
}

TEST_CASE("report json, optional metrics and warnings") {
  Rng rng(2);
  std::vector<ImageGrid> s{sinddm::testing::random_image({3, 3}, rng), sinddm::testing::random_image({3, 3}, rng)};
  const ImageGrid train = sinddm::testing::textured_image(3, 3);
  const MetricReport plain = evaluate_samples(s, train, nullptr, nullptr);
  CHECK(!plain.perceptual_div);
  CHECK(!plain.sifid);
  const Json j = to_json(plain);
  CHECK(j["perceptual_div"].is_null());
  CHECK(j["n_samples"] == 2);
  CHECK(j["format_version"] == MetricReport::kFormatVersion);

  // 3x4 images give two feature vectors of four dims: shrinkage kicks in.
  const std::vector<ImageGrid> few{sinddm::testing::random_image({3, 4}, rng), sinddm::testing::random_image({3, 4}, rng)};
  const StubFeatureExtractor ex4(4);
  const MetricReport w = evaluate_samples(few, sinddm::testing::textured_image(3, 4), &ex4, nullptr);
  CHECK(w.sifid);
  CHECK(w.warnings.size() == 1);
  CHECK(to_json(w)["warnings"].size() == 1);
}

TEST_CASE("eval_report on a checkpoint") {
  const Checkpoint ck = sinddm::testing::tiny_checkpoint();
  const StubFeatureExtractor ex;
  const MeanAbsDistance d;
  std::vector<ImageGrid> samples;
  const MetricReport r = eval_report(ck, 2, &ex, &d, 5, &samples);
  CHECK(r.n_samples == 2);
  CHECK(samples.size() == 2);
  CHECK(samples[0] != samples[1]);
  CHECK(r.fingerprint == fingerprint_hex(ck.fingerprint));
  CHECK(r.seed == 5);
  const Json j = to_json(r);
  for (const char* k : {"pixel_div", "perceptual_div", "sifid", "extractor", "distance", "fingerprint"})
    CHECK(!j[k].is_null());
  const MetricReport again = eval_report(ck, 2, &ex, &d, 5);
  CHECK(to_json(again) == j);
  SampleConfig cfg;
  cfg.seed = derive_seed(5, 1);
  CHECK(sample(ck, cfg) == samples[1]);
  CHECK_THROWS_AS(eval_report(ck, 1, &ex, &d, 5), InvalidArgument);
}
