#include "sinddm/evaluation.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "sinddm/error.hpp"
#include "sinddm/sampler.hpp"

namespace sinddm {

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

namespace {

std::vector<double> intensity(const ImageGrid& img) {
  std::vector<double> out(img.pixels());
  const int ch = img.channels();
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    double s = 0.0;
    for (int c = 0; c < ch; ++c) s += img[p * ch + c];
    out[p] = s / ch;
  }
  return out;
}

}  // namespace

ImageGrid pixel_diversity_map(const std::vector<ImageGrid>& samples, const ImageGrid& train_img) {
  if (samples.size() < 2) throw InvalidArgument("pixel diversity needs at least two samples");
  for (const ImageGrid& s : samples)
    if (s.dims() != samples[0].dims() || s.channels() != samples[0].channels())
      throw InvalidArgument("pixel diversity samples must share dims");
  const double train_std = mean_std(intensity(train_img)).std;
  if (!(train_std > 0.0)) throw InvalidArgument("training image has zero intensity variance");

  const std::size_t px = samples[0].pixels();
  std::vector<double> sum(px, 0.0), sq(px, 0.0);
  for (const ImageGrid& s : samples) {
    const auto v = intensity(s);
    for (std::size_t p = 0; p < px; ++p) sum[p] += v[p];
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t p = 0; p < px; ++p) sum[p] /= n;
  for (const ImageGrid& s : samples) {
    const auto v = intensity(s);
    for (std::size_t p = 0; p < px; ++p) sq[p] += (v[p] - sum[p]) * (v[p] - sum[p]);
  }
  ImageGrid map(samples[0].dims(), 1);
  for (std::size_t p = 0; p < px; ++p) map[p] = std::sqrt(sq[p] / n) / train_std;
  return map;
}

double pixel_diversity(const std::vector<ImageGrid>& samples, const ImageGrid& train_img) {
  const ImageGrid map = pixel_diversity_map(samples, train_img);
  double s = 0.0;
  for (double v : map.data()) s += v;
  return s / static_cast<double>(map.size());
}

double MeanAbsDistance::distance(const ImageGrid& a, const ImageGrid& b) const {
  require_same_shape(a, b, "mean absolute distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

std::vector<double> pairwise_distances(const std::vector<ImageGrid>& samples, const PerceptualDistance& d) {
  if (samples.size() < 2) throw InvalidArgument("perceptual diversity needs at least two samples");
  std::vector<double> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) out.push_back(d.distance(samples[i], samples[j]));
  return out;
}

double perceptual_diversity(const std::vector<ImageGrid>& samples, const PerceptualDistance& d) {
  return mean_std(pairwise_distances(samples, d)).mean;
}

StubFeatureExtractor::StubFeatureExtractor(int dim) : dim_(dim) {
  if (dim < 1 || dim > 4) throw InvalidArgument("stub feature extractor supports 1 to 4 channels");
}

FeatureSet StubFeatureExtractor::extract(const ImageGrid& img) const {
  static const double filters[4][9] = {
      {1 / 9., 1 / 9., 1 / 9., 1 / 9., 1 / 9., 1 / 9., 1 / 9., 1 / 9., 1 / 9.},
      {-1 / 8., 0, 1 / 8., -2 / 8., 0, 2 / 8., -1 / 8., 0, 1 / 8.},
      {-1 / 8., -2 / 8., -1 / 8., 0, 0, 0, 1 / 8., 2 / 8., 1 / 8.},
      {0, 1 / 4., 0, 1 / 4., -1, 1 / 4., 0, 1 / 4., 0},
  };
  if (img.height() < 3 || img.width() < 3) throw InvalidArgument("feature extraction needs at least 3x3 pixels");
  const auto v = intensity(img);
  const int oh = img.height() - 2, ow = img.width() - 2, w = img.width();
  FeatureSet f(static_cast<Eigen::Index>(oh) * ow, dim_);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int k = 0; k < dim_; ++k) {
        double s = 0.0;
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx) s += filters[k][dy * 3 + dx] * v[(y + dy) * w + x + dx];
        f(static_cast<Eigen::Index>(y) * ow + x, k) = s;
      }
  return f;
}

std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& name) {
  if (name == "stub-filters") return std::make_unique<StubFeatureExtractor>();
  throw InvalidArgument("unknown feature extractor '" + name + "' (available: stub-filters)");
}

std::unique_ptr<PerceptualDistance> make_distance(const std::string& name) {
  if (name == "stub-l1") return std::make_unique<MeanAbsDistance>();
  throw InvalidArgument("unknown perceptual distance '" + name + "' (available: stub-l1)");
}

Gaussian fit_gaussian(const FeatureSet& f) {
  const Eigen::Index n = f.rows(), d = f.cols();
  if (n < 2) throw InvalidArgument("fitting a feature Gaussian needs at least two vectors");
  Gaussian g;
  g.mean = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  if (n < d) {
    // Shrink toward a scaled identity so the estimate stays well conditioned.
    const double alpha = static_cast<double>(d) / static_cast<double>(n + d);
    const double mu = g.cov.trace() / static_cast<double>(d);
    g.cov = (1.0 - alpha) * g.cov + alpha * mu * Eigen::MatrixXd::Identity(d, d);
    g.shrunk = true;
  }
  return g;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition failed in matrix square root");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Gaussian& a, const Gaussian& b) {
  if (a.mean.size() != b.mean.size()) throw InvalidArgument("feature dimensions differ");
  const Eigen::Index d = a.mean.size();
  const Eigen::MatrixXd jitter = kSifidJitter * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s1 = a.cov + jitter, s2 = b.cov + jitter;
  const Eigen::MatrixXd r1 = psd_sqrt(s1);
  Eigen::MatrixXd inner = r1 * s2 * r1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition failed in Frechet distance");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double dist = (a.mean - b.mean).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, dist);
}

double sifid(const ImageGrid& sample, const ImageGrid& train_img, const FeatureExtractor& extractor, bool* shrunk) {
  const Gaussian a = fit_gaussian(extractor.extract(sample));
  const Gaussian b = fit_gaussian(extractor.extract(train_img));
  if (shrunk) *shrunk = a.shrunk || b.shrunk;
  return frechet_distance(a, b);
}

Json to_json(const MetricReport& r) {
  auto ms = [](const MeanStd& m) { return Json{{"mean", m.mean}, {"std", m.std}}; };
  Json j{{"format_version", MetricReport::kFormatVersion},
         {"n_samples", r.n_samples},
         {"pixel_div", ms(r.pixel_div)},
         {"perceptual_div", r.perceptual_div ? ms(*r.perceptual_div) : Json(nullptr)},
         {"sifid", r.sifid ? ms(*r.sifid) : Json(nullptr)},
         {"extractor", r.extractor.empty() ? Json(nullptr) : Json(r.extractor)},
         {"distance", r.distance.empty() ? Json(nullptr) : Json(r.distance)},
         {"fingerprint", r.fingerprint},
         {"seed", r.seed},
         {"external", Json::object()},
         {"warnings", r.warnings}};
  return j;
}

MetricReport evaluate_samples(const std::vector<ImageGrid>& samples, const ImageGrid& train_img,
                              const FeatureExtractor* extractor, const PerceptualDistance* distance) {
  MetricReport r;
  r.n_samples = static_cast<int>(samples.size());
  const ImageGrid map = pixel_diversity_map(samples, train_img);
  r.pixel_div = mean_std({map.data().begin(), map.data().end()});
  if (distance) {
    r.perceptual_div = mean_std(pairwise_distances(samples, *distance));
    r.distance = distance->name();
  }
  if (extractor) {
    std::vector<double> scores;
    bool any_shrunk = false;
    for (const ImageGrid& s : samples) {
      bool shrunk = false;
      scores.push_back(sifid(s, train_img, *extractor, &shrunk));
      any_shrunk |= shrunk;
    }
    r.sifid = mean_std(scores);
    r.extractor = extractor->name();
    if (any_shrunk) r.warnings.push_back("fewer feature vectors than feature dimensions; covariance shrinkage applied");
  }
  return r;
}

MetricReport eval_report(const Checkpoint& ckpt, int n, const FeatureExtractor* extractor,
                         const PerceptualDistance* distance, std::uint64_t seed, std::vector<ImageGrid>* samples_out) {
  if (n < 2) throw InvalidArgument("evaluation needs at least two samples");
  const Sampler sampler(ckpt);
  std::vector<ImageGrid> samples;
  for (int i = 0; i < n; ++i) {
    SampleConfig cfg;
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    samples.push_back(sampler.sample(cfg));
  }
  MetricReport r = evaluate_samples(samples, ckpt.train_image, extractor, distance);
  r.fingerprint = fingerprint_hex(ckpt.fingerprint);
  r.seed = seed;
  if (samples_out) *samples_out = std::move(samples);
  return r;
}

}  // namespace sinddm
