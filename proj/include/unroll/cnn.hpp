#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "unroll/image.hpp"
#include "unroll/rng.hpp"

namespace unroll {

/// Encoder-decoder denoiser layout. Each encoder block has `convs_per_block`
/// 3×3 conv+ReLU layers (the last one doubles `channels_enc`), followed by a
/// 2×2 stride-2 conv that halves resolution. Each decoder block has
/// `convs_per_block` 3×3 conv+ReLU layers (the last one emits
/// `channels_dec_out`), a 2×2 stride-2 transposed conv back up to
/// `channels_dec`, and a fusion 3×3 conv+ReLU over the concatenation with the
/// encoder map of the same resolution. A final linear 3×3 conv produces the
/// residual, added to the input when `residual_skip` is set.
struct NetSpec {
  int blocks_enc = 2;
  int convs_per_block = 2;
  int kernel = 3;
  int channels_enc = 16;
  int channels_dec = 32;
  int channels_dec_out = 32;
  bool residual_skip = true;
  /// When false every ReLU is the identity (a linear network; used for gradient checks).
  bool relu = true;

  /// L=4, 4 convs per block, 64/128/512 channels.
  static NetSpec full();
  /// L=2, 2 convs per block, 16 encoder and 32 decoder channels.
  static NetSpec desk();
  /// L=1, 2 convs per block, 4 channels everywhere.
  static NetSpec tiny();

  void validate() const;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// Flat parameters in serialization order: encoder convs, pools, decoder
/// convs, transposed convs, fusion convs, output conv; each layer stores its
/// weights then its biases.
using ParamVector = std::vector<double>;

/// Version of the serialization order, written into weights files.
inline constexpr std::int32_t kParamLayoutVersion = 1;

std::size_t param_count(const NetSpec& spec);

/// He-style init: weights ~ N(0, 2/fan_in), biases zero.
ParamVector init_params(const NetSpec& spec, Rng& rng);

/// Activations recorded by cnn_forward for a single backward pass.
struct CnnTape {
  struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;
  };
  NetSpec spec;
  std::uint64_t params_fingerprint = 0;
  double input_scale = 1.0;
  int height = 0;
  int width = 0;
  std::vector<Tensor> values;
};

/// Forward pass. The branch sees x/peak and its output is scaled back by peak,
/// so the network is independent of the image's nominal range.
Image cnn_forward(const NetSpec& spec, const ParamVector& params, const Image& x, CnnTape* tape);

struct CnnGradients {
  Image grad_in;
  ParamVector grad_params;
};

/// Reverse-mode gradients of cnn_forward. ReLU uses subgradient 0 at 0.
/// Throws if the tape does not come from a forward pass with these params.
CnnGradients cnn_backward(const NetSpec& spec, const ParamVector& params, const CnnTape& tape,
                          const Image& grad_out);

std::uint64_t fingerprint(const ParamVector& params);

/// Weights file: "UNRW1", eight little-endian int32 fields (layout version,
/// blocks_enc, convs_per_block, kernel, channels_enc, channels_dec,
/// channels_dec_out, flags), int64 parameter count, then float32 parameters.
void write_weights(std::ostream& out, const NetSpec& spec, const ParamVector& params);
void read_weights(std::istream& in, NetSpec& spec, ParamVector& params);
void save_weights(const std::filesystem::path& path, const NetSpec& spec, const ParamVector& params);
void load_weights(const std::filesystem::path& path, NetSpec& spec, ParamVector& params);

}  // namespace unroll
