#pragma once

#include <algorithm>
#include <optional>

#include "dnet/network.hpp"
#include "helpers.hpp"

namespace testutil {

// Randomizes every parameter, biases included, so no gradient is trivially zero.
inline dnet::NetworkWeights random_weights(const dnet::NetworkConfig& cfg, std::uint64_t seed,
                                           double scale = 0.4) {
  dnet::NetworkWeights w = dnet::zero_weights(cfg);
  dnet::SeededRng rng(seed);
  for (auto& view : dnet::parameter_views(w)) {
    for (double& v : view.values) v = scale * rng.normal();
  }
  return w;
}

// Worst relative error between backprop and central differences over every
// parameter, or nullopt when some perturbation flips a ReLU (the loss is not
// differentiable there, so the difference quotient means nothing).
inline std::optional<double> gradient_check(const dnet::NetworkConfig& c, dnet::NetworkWeights& w,
                                            const dnet::Tensor& in, const dnet::Tensor& g) {
  const dnet::ForwardTrace base = dnet::forward(in, w, c, true);
  const dnet::NetworkWeights grads = dnet::backward(base, w, c, g);
  const auto gviews = dnet::parameter_views(grads);
  auto views = dnet::parameter_views(w);
  bool kink = false;
  auto objective = [&] {
    const dnet::ForwardTrace t = dnet::forward(in, w, c, true);
    for (std::size_t l = 1; l < t.activations.size(); ++l)
      for (std::size_t i = 0; i < t.activations[l].size(); ++i)
        if ((t.activations[l][i] > 0) != (base.activations[l][i] > 0)) kink = true;
    return dot(g, t.output);
  };
  double worst = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (std::size_t i = 0; i < views[v].values.size(); ++i) {
      const double num = central_difference(views[v].values[i], objective);
      worst = std::max(worst, relative_error(gviews[v].values[i], num));
    }
  }
  if (kink) return std::nullopt;
  return worst;
}

}  // namespace testutil
