#include "dnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dnet/error.hpp"
#include "dnet/noise.hpp"

namespace dnet {

NetworkConfig NetworkConfig::from_kernels(std::size_t depth, std::size_t kernels, bool skip, std::uint64_t seed) {
  if (skip && kernels < 2) throw InvalidArgument("with skip connections at least 2 kernels per layer are needed");
  if (kernels < 1) throw InvalidArgument("kernels per layer must be >= 1");
  NetworkConfig cfg;
  cfg.depth = depth;
  cfg.feed_channels = skip ? kernels - 1 : kernels;
  cfg.skip_connections = skip;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void NetworkConfig::validate() const {
  if (depth < 1 || depth > 64) throw InvalidArgument("network depth must be in 1..64, got " + std::to_string(depth));
  if (feed_channels < 1) throw InvalidArgument("feed_channels must be >= 1");
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"depth", depth}, {"feed_channels", feed_channels}, {"skip_connections", skip_connections}, {"seed", seed}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.depth = j.value("depth", cfg.depth);
  cfg.feed_channels = j.value("feed_channels", cfg.feed_channels);
  cfg.skip_connections = j.value("skip_connections", cfg.skip_connections);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

namespace {

std::size_t layer_input_channels(const NetworkConfig& cfg, std::size_t layer_index) {
  return layer_index == 0 ? 1 : cfg.feed_channels;
}

std::size_t conv_param_count(std::size_t c_in, std::size_t c_out) { return 9 * c_in * c_out + c_out; }

// Feed outputs followed by the single estimate output: (3,3,c_in,F+1).
ConvParams fuse(const ConvParams& feed, const ConvParams& estimate) {
  const std::size_t ci = feed.c_in();
  const std::size_t f = feed.c_out();
  ConvParams fused(ci, f + 1);
  for (std::size_t tap = 0; tap < 9; ++tap) {
    for (std::size_t i = 0; i < ci; ++i) {
      double* dst = fused.weights.data() + (tap * ci + i) * (f + 1);
      std::memcpy(dst, feed.weights.data() + (tap * ci + i) * f, f * sizeof(double));
      dst[f] = estimate.weights.data()[tap * ci + i];
    }
  }
  std::copy(feed.bias.begin(), feed.bias.end(), fused.bias.begin());
  fused.bias[f] = estimate.bias[0];
  return fused;
}

void split(const ConvParams& fused, ConvParams& feed, ConvParams& estimate) {
  const std::size_t ci = fused.c_in();
  const std::size_t f = fused.c_out() - 1;
  for (std::size_t tap = 0; tap < 9; ++tap) {
    for (std::size_t i = 0; i < ci; ++i) {
      const double* src = fused.weights.data() + (tap * ci + i) * (f + 1);
      std::memcpy(feed.weights.data() + (tap * ci + i) * f, src, f * sizeof(double));
      estimate.weights.data()[tap * ci + i] = src[f];
    }
  }
  std::copy(fused.bias.begin(), fused.bias.begin() + static_cast<std::ptrdiff_t>(f), feed.bias.begin());
  estimate.bias[0] = fused.bias[f];
}

void he_normal(ConvParams& p, SeededRng& rng) {
  const double stddev = std::sqrt(2.0 / (9.0 * static_cast<double>(p.c_in())));
  for (double& w : p.weights.values()) w = stddev * rng.normal();
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
}

// Zeroes grad where the forward activation was not positive.
Tensor relu_mask(const Tensor& activation, const Tensor& grad) { return relu_backward(activation, grad); }

// Interleaves (n,h,w,F) and (n,h,w,1) into (n,h,w,F+1).
Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const std::size_t ca = sa.c, cb = b.shape().c;
  Tensor out(Shape{sa.n, sa.h, sa.w, ca + cb});
  const std::size_t pixels = sa.n * sa.h * sa.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::memcpy(out.data() + p * (ca + cb), a.data() + p * ca, ca * sizeof(double));
    std::memcpy(out.data() + p * (ca + cb) + ca, b.data() + p * cb, cb * sizeof(double));
  }
  return out;
}

}  // namespace

std::size_t parameter_count(const NetworkConfig& config) {
  config.validate();
  const std::size_t f = config.feed_channels;
  std::size_t total = 0;
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::size_t ci = layer_input_channels(config, l);
    total += conv_param_count(ci, f);
    if (config.skip_connections) total += conv_param_count(ci, 1);
  }
  if (!config.skip_connections) total += conv_param_count(f, 1);
  return total;
}

std::size_t parameter_count(const NetworkWeights& weights) {
  std::size_t total = 0;
  for (const auto& v : parameter_views(weights)) total += v.values.size();
  return total;
}

std::vector<ParamView> parameter_views(NetworkWeights& weights) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1);
    auto& layer = weights.layers[l];
    views.push_back({prefix + ".feed.weights", layer.feed.weights.values()});
    views.push_back({prefix + ".feed.bias", layer.feed.bias});
    if (layer.estimate.c_out() > 0) {
      views.push_back({prefix + ".estimate.weights", layer.estimate.weights.values()});
      views.push_back({prefix + ".estimate.bias", layer.estimate.bias});
    }
  }
  if (weights.final) {
    views.push_back({"final.weights", weights.final->weights.values()});
    views.push_back({"final.bias", weights.final->bias});
  }
  return views;
}

std::vector<ConstParamView> parameter_views(const NetworkWeights& weights) {
  std::vector<ConstParamView> out;
  for (auto& v : parameter_views(const_cast<NetworkWeights&>(weights))) out.push_back({v.name, v.values});
  return out;
}

NetworkWeights zero_weights(const NetworkConfig& config) {
  config.validate();
  NetworkWeights w;
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::size_t ci = layer_input_channels(config, l);
    LayerWeights layer{ConvParams(ci, config.feed_channels),
                       config.skip_connections ? ConvParams(ci, 1) : ConvParams(ci, 0)};
    w.layers.push_back(std::move(layer));
  }
  if (!config.skip_connections) w.final = ConvParams(config.feed_channels, 1);
  return w;
}

NetworkWeights init_weights(const NetworkConfig& config) {
  NetworkWeights w = zero_weights(config);
  SeededRng rng(config.seed);
  for (auto& layer : w.layers) {
    he_normal(layer.feed, rng);
    if (layer.estimate.c_out() > 0) he_normal(layer.estimate, rng);
  }
  if (w.final) he_normal(*w.final, rng);
  return w;
}

void check_weights(const NetworkWeights& weights, const NetworkConfig& config) {
  const NetworkWeights expected = zero_weights(config);
  auto same = [](const ConvParams& a, const ConvParams& b) {
    return a.weights.shape() == b.weights.shape() && a.bias.size() == b.bias.size();
  };
  bool ok = weights.layers.size() == expected.layers.size() &&
            weights.final.has_value() == expected.final.has_value();
  for (std::size_t l = 0; ok && l < expected.layers.size(); ++l) {
    ok = same(weights.layers[l].feed, expected.layers[l].feed) &&
         same(weights.layers[l].estimate, expected.layers[l].estimate);
  }
  if (ok && expected.final) ok = same(*weights.final, *expected.final);
  if (!ok) throw ShapeError("network weights do not match the configuration");
}

ForwardTrace forward(const Tensor& input, const NetworkWeights& weights, const NetworkConfig& config,
                     bool keep_activations) {
  config.validate();
  if (input.shape().c != 1) throw ShapeError("network input must have one channel, got " + input.shape().str());
  check_weights(weights, config);

  ForwardTrace trace;
  trace.input = input;
  Tensor activation = input;
  const std::size_t depth = config.depth;
  const std::size_t f = config.feed_channels;

  if (config.skip_connections) {
    for (std::size_t l = 0; l < depth; ++l) {
      const LayerWeights& layer = weights.layers[l];
      if (keep_activations) trace.activations.push_back(activation);
      if (l + 1 == depth) {
        // The last layer's feed output is never consumed.
        trace.estimates.push_back(conv2d_forward(activation, layer.estimate, Padding::Same));
      } else {
        const Tensor fused = conv2d_forward(activation, fuse(layer.feed, layer.estimate), Padding::Same);
        trace.estimates.push_back(slice_channels(fused, f, 1));
        activation = relu_forward(slice_channels(fused, 0, f));
      }
    }
    trace.residual = trace.estimates.front();
    for (std::size_t l = 1; l < depth; ++l) add_inplace(trace.residual, trace.estimates[l]);
  } else {
    for (std::size_t l = 0; l < depth; ++l) {
      if (keep_activations) trace.activations.push_back(activation);
      activation = relu_forward(conv2d_forward(activation, weights.layers[l].feed, Padding::Same));
    }
    if (keep_activations) trace.activations.push_back(activation);
    trace.residual = conv2d_forward(activation, *weights.final, Padding::Same);
  }
  trace.output = add(input, trace.residual);
  return trace;
}

NetworkWeights backward(const ForwardTrace& trace, const NetworkWeights& weights, const NetworkConfig& config,
                        const Tensor& grad_output) {
  if (grad_output.shape() != trace.output.shape()) {
    throw ShapeError("grad_output shape " + grad_output.shape().str() + " vs output " + trace.output.shape().str());
  }
  const std::size_t depth = config.depth;
  const std::size_t expected_acts = config.skip_connections ? depth : depth + 1;
  if (trace.activations.size() != expected_acts) {
    throw InvalidArgument("backward needs a trace recorded with keep_activations");
  }
  check_weights(weights, config);
  NetworkWeights grads = zero_weights(config);

  Tensor grad_act;  // gradient w.r.t. a_l, l counting from 1
  if (config.skip_connections) {
    for (std::size_t l = depth; l-- > 0;) {
      const Tensor& layer_input = trace.activations[l];
      const LayerWeights& layer = weights.layers[l];
      const bool need_input = l > 0;
      if (l + 1 == depth) {
        ConvGradients g = conv2d_backward(layer_input, layer.estimate, grad_output, Padding::Same, need_input);
        grads.layers[l].estimate = std::move(g.params);
        grad_act = std::move(g.input);
      } else {
        // Every estimate feeds the output sum directly, so its gradient is grad_output.
        const Tensor grad_feed = relu_mask(trace.activations[l + 1], grad_act);
        const Tensor grad_fused = concat_channels(grad_feed, grad_output);
        ConvGradients g = conv2d_backward(layer_input, fuse(layer.feed, layer.estimate), grad_fused,
                                          Padding::Same, need_input);
        split(g.params, grads.layers[l].feed, grads.layers[l].estimate);
        grad_act = std::move(g.input);
      }
    }
  } else {
    ConvGradients g = conv2d_backward(trace.activations[depth], *weights.final, grad_output, Padding::Same, true);
    *grads.final = std::move(g.params);
    grad_act = std::move(g.input);
    for (std::size_t l = depth; l-- > 0;) {
      const Tensor grad_pre = relu_mask(trace.activations[l + 1], grad_act);
      ConvGradients gl = conv2d_backward(trace.activations[l], weights.layers[l].feed, grad_pre, Padding::Same, l > 0);
      grads.layers[l].feed = std::move(gl.params);
      grad_act = std::move(gl.input);
    }
  }
  return grads;
}

std::vector<GrayImage> visualize_estimates(const ForwardTrace& trace, std::span<const std::size_t> layers) {
  if (trace.estimates.empty()) throw InvalidArgument("trace has no per-layer estimates (no skip connections)");
  double m = 0.0;
  for (std::size_t layer : layers) {
    if (layer < 1 || layer > trace.estimates.size()) {
      throw InvalidArgument("estimate layer " + std::to_string(layer) + " out of range 1.." +
                            std::to_string(trace.estimates.size()));
    }
    const Tensor& e = trace.estimates[layer - 1];
    const std::size_t plane = e.shape().h * e.shape().w;
    for (std::size_t i = 0; i < plane; ++i) m = std::max(m, std::fabs(e[i]));
  }
  std::vector<GrayImage> out;
  for (std::size_t layer : layers) {
    const Tensor& e = trace.estimates[layer - 1];
    GrayImage img(e.shape().h, e.shape().w, 0.5);
    if (m > 0.0) {
      for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(0.5 + 0.5 * e[i] / m, 0.0, 1.0);
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace dnet
