#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sinddm/checkpoint.hpp"
#include "sinddm/image.hpp"
#include "sinddm/json_io.hpp"

namespace sinddm {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
/// Population mean and standard deviation.
MeanStd mean_std(const std::vector<double>& v);

/// Per-pixel std of channel-mean intensity across samples, divided by the std of
/// the training image's intensity.
ImageGrid pixel_diversity_map(const std::vector<ImageGrid>& samples, const ImageGrid& train_img);
double pixel_diversity(const std::vector<ImageGrid>& samples, const ImageGrid& train_img);

class PerceptualDistance {
 public:
  virtual ~PerceptualDistance() = default;
  virtual std::string name() const = 0;
  virtual double distance(const ImageGrid& a, const ImageGrid& b) const = 0;
};

/// Mean absolute difference.
class MeanAbsDistance : public PerceptualDistance {
 public:
  std::string name() const override { return "stub-l1"; }
  double distance(const ImageGrid& a, const ImageGrid& b) const override;
};

/// Distances over all unordered pairs.
std::vector<double> pairwise_distances(const std::vector<ImageGrid>& samples, const PerceptualDistance& d);
double perceptual_diversity(const std::vector<ImageGrid>& samples, const PerceptualDistance& d);

using FeatureSet = Eigen::MatrixXd;  // one row per spatial position

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual FeatureSet extract(const ImageGrid& img) const = 0;
};

/// Fixed 3x3 filters (box, horizontal and vertical gradient, Laplacian) on
/// channel-mean intensity, valid positions only; the first `dim` filters are used.
class StubFeatureExtractor : public FeatureExtractor {
 public:
  explicit StubFeatureExtractor(int dim = 2);
  std::string name() const override { return "stub-filters"; }
  FeatureSet extract(const ImageGrid& img) const override;

 private:
  int dim_;
};

std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& name);
std::unique_ptr<PerceptualDistance> make_distance(const std::string& name);

inline constexpr double kSifidJitter = 1e-6;

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool shrunk = false;  // fewer vectors than dimensions; covariance was shrunk
};
Gaussian fit_gaussian(const FeatureSet& f);
/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), jittered by kSifidJitter on both diagonals.
double frechet_distance(const Gaussian& a, const Gaussian& b);
double sifid(const ImageGrid& sample, const ImageGrid& train_img, const FeatureExtractor& extractor,
             bool* shrunk = nullptr);

struct MetricReport {
  static constexpr int kFormatVersion = 1;
  int n_samples = 0;
  MeanStd pixel_div;
  std::optional<MeanStd> perceptual_div;
  std::optional<MeanStd> sifid;
  std::string extractor;
  std::string distance;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

Json to_json(const MetricReport& r);

/// Metrics over an existing sample set.
MetricReport evaluate_samples(const std::vector<ImageGrid>& samples, const ImageGrid& train_img,
                              const FeatureExtractor* extractor, const PerceptualDistance* distance);

/// Draws n samples at training dims (sample i uses seed derive_seed(seed, i)) and scores them.
MetricReport eval_report(const Checkpoint& ckpt, int n, const FeatureExtractor* extractor,
                         const PerceptualDistance* distance, std::uint64_t seed,
                         std::vector<ImageGrid>* samples_out = nullptr);

}  // namespace sinddm
