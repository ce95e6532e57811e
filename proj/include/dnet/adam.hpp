#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dnet/tensor.hpp"
#include "json.hpp"

namespace dnet {

struct AdamConfig {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
};

// First/second moments mirror the parameter arrays one-to-one.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(std::span<const ParamView> params);
  static AdamState zeros_like(std::span<const ConstParamView> params);
};

// Bias-corrected ADAM update, in place. All gradients are checked for
// finiteness before any weight is touched; a NumericError names the
// offending parameter.
void adam_step(std::span<const ParamView> weights, std::span<const ConstParamView> grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace dnet
