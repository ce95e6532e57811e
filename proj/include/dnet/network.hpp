#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnet/image_io.hpp"
#include "dnet/tensor.hpp"
#include "json.hpp"

namespace dnet {

// Architecture of the gradual-residual denoiser.
//
// With skip connections every layer runs feed_channels convolutions that
// are ReLU'd and forwarded, plus one single-channel "noise estimate"
// convolution whose output is added straight to the network input. Without
// skip connections the per-layer estimates are dropped and a single final
// 3x3 convolution produces one global residual.
struct NetworkConfig {
  std::size_t depth = 20;
  std::size_t feed_channels = 63;
  bool skip_connections = true;
  std::uint64_t seed = 0;

  // Builds a config from the "kernels per layer" count used in ablations:
  // kernels = feed_channels + 1 with skip connections, feed_channels without.
  static NetworkConfig from_kernels(std::size_t depth, std::size_t kernels, bool skip, std::uint64_t seed = 0);

  void validate() const;
  std::size_t kernels_per_layer() const { return skip_connections ? feed_channels + 1 : feed_channels; }
  // Output pixel depends on input within this many pixels in each direction.
  std::size_t receptive_radius() const { return skip_connections ? depth : depth + 1; }

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
  bool operator==(const NetworkConfig&) const = default;
};

struct LayerWeights {
  ConvParams feed;
  ConvParams estimate;  // empty (0 outputs) without skip connections
  bool operator==(const LayerWeights&) const = default;
};

struct NetworkWeights {
  std::vector<LayerWeights> layers;
  std::optional<ConvParams> final;  // only without skip connections
  bool operator==(const NetworkWeights&) const = default;
};

std::size_t parameter_count(const NetworkWeights& weights);
// Closed form for a config, independent of any allocated weights.
std::size_t parameter_count(const NetworkConfig& config);

// All parameter arrays in serialization order: per layer feed weights,
// feed bias, estimate weights, estimate bias; then the final conv.
std::vector<ParamView> parameter_views(NetworkWeights& weights);
std::vector<ConstParamView> parameter_views(const NetworkWeights& weights);

// Correctly shaped, all-zero weights (also used as a gradient buffer).
NetworkWeights zero_weights(const NetworkConfig& config);
// He normal: N(0, 2/(9 c_in)), zero biases. Deterministic in config.seed.
NetworkWeights init_weights(const NetworkConfig& config);
// Throws ShapeError when weights do not match config.
void check_weights(const NetworkWeights& weights, const NetworkConfig& config);

struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> estimates;  // e_1..e_depth (empty without skip connections)
  Tensor residual;                // left fold of the estimates, or the final conv output
  Tensor output;                  // input + residual
  // a_0 (= input) .. a_{depth-1}; a_depth as well without skip connections.
  std::vector<Tensor> activations;
};

// input: (n,h,w,1) in network range.
ForwardTrace forward(const Tensor& input, const NetworkWeights& weights, const NetworkConfig& config,
                     bool keep_activations = false);

// Gradients of sum(grad_output * trace.output) with respect to all weights.
// The trace must come from forward(..., keep_activations = true).
NetworkWeights backward(const ForwardTrace& trace, const NetworkWeights& weights, const NetworkConfig& config,
                        const Tensor& grad_output);

// Renders e_l for the requested 1-based layers (batch item 0) using one
// shared symmetric scale [-m, m] -> [0, 1], m = max |e_l| over the selection.
std::vector<GrayImage> visualize_estimates(const ForwardTrace& trace, std::span<const std::size_t> layers);

}  // namespace dnet
