#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsda/tensor.hpp"

namespace tsda {

enum class LayerKind : std::uint8_t { dense = 0, relu = 1, conv2d = 2, maxpool2d = 3, flatten = 4 };

std::string to_string(LayerKind kind);

/// Declarative description of one layer.
///
/// Dense layers map a rank-1 input of width `in` to width `out`. Conv layers
/// take `[in, H, W]` (channels first) and use stride 1 with valid padding.
/// Max-pooling is fixed to a 2x2 window with stride 2; odd trailing rows and
/// columns are dropped.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;   // dense input width, conv input channels
  std::size_t out = 0;  // dense output width, conv output channels
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec relu();
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel_h, std::size_t kernel_w);
  static LayerSpec maxpool2d();
  static LayerSpec flatten();

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
  Shape weight_shape() const;
  Shape bias_shape() const;

  /// Output shape for a given input shape; throws DimensionError when the
  /// input does not fit this layer.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Weights and biases of one layer; both empty for parameterless kinds.
struct LayerParams {
  Tensor weights;
  Tensor biases;

  std::size_t size() const { return weights.size() + biases.size(); }
  bool all_finite() const { return weights.all_finite() && biases.all_finite(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Zero-filled parameters (or gradients) shaped for `spec`.
LayerParams zero_params(const LayerSpec& spec);

/// Glorot-uniform weights in [-s, s] with s = sqrt(6 / (fan_in + fan_out)),
/// zero biases.
LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng);

/// Throws DimensionError if `params` does not match `spec`.
void check_params(const LayerSpec& spec, const LayerParams& params);

/// Activation record written by layer_forward and consumed by layer_backward.
struct LayerCache {
  LayerKind kind = LayerKind::relu;
  Tensor input;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // maxpool routing, one entry per output
};

struct LayerForward {
  Tensor output;
  LayerCache cache;
};

struct LayerBackward {
  Tensor grad_input;
  LayerParams grad_params;
};

LayerForward layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& input);
LayerBackward layer_backward(const LayerSpec& spec, const LayerParams& params,
                             const LayerCache& cache, const Tensor& grad_output);

/// Parameters of a stream, one pointer per layer. Streams of a two-stream
/// pair share storage through these pointers.
using ParamView = std::span<const LayerParams* const>;

std::vector<const LayerParams*> make_view(std::span<const LayerParams> params);

struct NetworkPass {
  Tensor output;
  std::vector<LayerCache> caches;

  /// Input seen by layer `layer` (the network input for layer 0).
  const Tensor& input_of(std::size_t layer) const { return caches.at(layer).input; }
};

/// Validates that `specs` compose over `input` and returns the final shape.
Shape network_output_shape(std::span<const LayerSpec> specs, const Shape& input);

NetworkPass network_forward(std::span<const LayerSpec> specs, ParamView params, const Tensor& input);
NetworkPass network_forward(std::span<const LayerSpec> specs, std::span<const LayerParams> params,
                            const Tensor& input);

/// Extra gradient added to the gradient w.r.t. the input of `layer` while
/// back-propagating; used to feed a loss defined on an intermediate
/// representation.
struct InjectedGradient {
  std::size_t layer = 0;
  Tensor grad;
};

/// Back-propagates `grad_output` through the pass and adds parameter
/// gradients into `accumulators` (null entries are skipped). Returns the
/// gradient w.r.t. the network input.
Tensor network_backward(std::span<const LayerSpec> specs, ParamView params, const NetworkPass& pass,
                        const Tensor& grad_output, std::span<LayerParams* const> accumulators,
                        const std::optional<InjectedGradient>& injected = std::nullopt);

/// Elementwise `dst += src` over matching parameter blocks.
void add_into(LayerParams& dst, const LayerParams& src);

}  // namespace tsda
