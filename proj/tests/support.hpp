#pragma once

// Synthetic inputs and small brute-force helpers shared by the tests.

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <algorithm>

#include "sinddm/image.hpp"
#include "sinddm/rng.hpp"

namespace sinddm::testing {

/// Smooth colour blobs over stripes and a soft checker; values stay inside [-0.9, 0.9].
inline ImageGrid textured_image(int h, int w, std::uint64_t seed = 1) {
  Rng rng(seed);
  const double fx = 0.2 + 0.3 * rng.uniform(), fy = 0.15 + 0.3 * rng.uniform(), ph = 6.28 * rng.uniform();
  const int blobs = 5;
  double by[blobs], bx[blobs], br[blobs], bc[blobs][3];
  for (int b = 0; b < blobs; ++b) {
    by[b] = rng.uniform() * h;
    bx[b] = rng.uniform() * w;
    br[b] = (0.08 + 0.12 * rng.uniform()) * std::min(h, w);
    for (int c = 0; c < 3; ++c) bc[b][c] = 2.0 * rng.uniform() - 1.0;
  }
  ImageGrid img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double base[3] = {0.4 * std::sin(fx * x + ph), 0.4 * std::cos(fy * y + 0.5 * fx * x),
                        ((x / 6 + y / 6) % 2 ? 0.25 : -0.25)};
      for (int b = 0; b < blobs; ++b) {
        const double d2 = ((y - by[b]) * (y - by[b]) + (x - bx[b]) * (x - bx[b])) / (br[b] * br[b]);
        const double k = std::exp(-d2);
        for (int c = 0; c < 3; ++c) base[c] += 0.5 * k * bc[b][c];
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(base[c], -0.9, 0.9);
    }
  return img;
}

inline ImageGrid random_image(Dims d, Rng& rng, int channels = 3, double lo = -1.0, double hi = 1.0) {
  ImageGrid img(d, channels);
  for (double& v : img.data()) v = lo + (hi - lo) * rng.uniform();
  return img;
}

inline ImageGrid constant_image(Dims d, double v, int channels = 3) { return ImageGrid(d, channels, v); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto p = std::filesystem::temp_directory_path() /
                 ("sinddm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace sinddm::testing
