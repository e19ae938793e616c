#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sinddm/image.hpp"

namespace sinddm {

enum class PaddingMode { layer, initial };
std::string to_string(PaddingMode m);
PaddingMode padding_mode_from_string(const std::string& s);

/// Architecture hyperparameters of the time/scale-conditioned noise predictor.
///
/// Image path: 3x3 head conv, `blocks` residual blocks of `convs_per_block`
/// 3x3 convs with GeLU (scale/shift modulation after the second conv), GeLU
/// and a 1x1 output conv. Receptive field = 3 + 2 * blocks * convs_per_block.
struct DenoiserSpec {
  int blocks = 4;
  int convs_per_block = 4;
  int hidden_width = 88;
  int embed_dim = 64;           // per scalar input (t and s)
  int time_embed_width = 128;   // joint embedding after the MLP
  PaddingMode padding = PaddingMode::layer;

  int receptive_field() const { return 3 + 2 * blocks * convs_per_block; }
  int rf_radius() const { return receptive_field() / 2; }
  int modulated_conv() const { return convs_per_block > 1 ? 1 : 0; }
  void validate() const;
  bool operator==(const DenoiserSpec&) const = default;
};

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named views into one flat parameter vector.
struct ParamLayout {
  std::vector<ParamEntry> entries;
  std::size_t total = 0;

  const ParamEntry& find(const std::string& name) const;
};

ParamLayout make_layout(const DenoiserSpec& spec);

/// Closed-form parameter count; throws for invalid specs.
std::size_t count_params(const DenoiserSpec& spec);

/// Sinusoidal positional embedding of one scalar index (sin half, cos half).
std::vector<double> sinusoidal_embedding(int value, int dim);

/// Anything that predicts the injected noise from (x_t, t, s).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual ImageGrid predict_noise(const ImageGrid& x, int t, int s) const = 0;
};

enum class KernelBackend { parallel, reference };

template <class T>
class Denoiser : public NoisePredictor {
 public:
  /// Cached intermediate values of one forward pass, consumed by backward().
  struct Activations {
    Dims head_dims;                 // dims fed to the head conv (padded in initial mode)
    std::vector<T> input;           // head conv input
    std::vector<T> e0, h1, g1, ts;  // embedding MLP
    std::vector<std::vector<T>> film_in, film;
    std::vector<Dims> block_dims;   // blocks + 1 entries
    std::vector<std::vector<T>> block_in;           // blocks + 1 entries; last is trunk output
    std::vector<std::vector<std::vector<T>>> conv_out;  // [block][conv], pre-modulation
    std::vector<std::vector<T>> modulated;          // [block]
    std::vector<std::vector<std::vector<T>>> act;   // [block][conv], GeLU outputs
    std::vector<T> trunk_act;
  };

  explicit Denoiser(DenoiserSpec spec);

  const DenoiserSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<T> weights() { return weights_; }
  std::span<const T> weights() const { return weights_; }
  std::span<T> param(const std::string& name);
  void set_weights(std::span<const T> w);

  /// Fan-in scaled normal init, zero biases; the output conv is zeroed unless
  /// zero_output is false.
  void init(std::uint64_t seed, bool zero_output = true);

  void set_backend(KernelBackend b) { backend_ = b; }

  /// Joint (t, s) embedding vector of width time_embed_width.
  std::vector<T> embed(int t, int s) const;

  /// HWC input of `dims` with 3 channels -> noise estimate of the same shape.
  std::vector<T> forward(std::span<const T> x, Dims dims, int t, int s, Activations* cache = nullptr) const;

  /// Accumulates d(loss)/d(weights) into `grad` given d(loss)/d(output).
  void backward(const Activations& cache, std::span<const T> dout, std::span<T> grad) const;

  ImageGrid predict_noise(const ImageGrid& x, int t, int s) const override;

 private:
  DenoiserSpec spec_;
  ParamLayout layout_;
  std::vector<T> weights_;
  KernelBackend backend_ = KernelBackend::parallel;
};

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace sinddm
