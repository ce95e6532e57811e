#include "dnet/adam.hpp"

#include <cmath>

#include "dnet/error.hpp"

namespace dnet {

nlohmann::json AdamConfig::to_json() const {
  return {{"alpha", alpha}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  return c;
}

AdamState AdamState::zeros_like(std::span<const ParamView> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.values.size(), 0.0);
    s.v.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

AdamState AdamState::zeros_like(std::span<const ConstParamView> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.values.size(), 0.0);
    s.v.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const ParamView> weights, std::span<const ConstParamView> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (weights.size() != grads.size() || state.m.size() != weights.size() || state.v.size() != weights.size()) {
    throw ShapeError("adam_step: parameter, gradient and state lists differ in length");
  }
  for (std::size_t p = 0; p < weights.size(); ++p) {
    if (weights[p].values.size() != grads[p].values.size() || state.m[p].size() != weights[p].values.size() ||
        state.v[p].size() != weights[p].values.size()) {
      throw ShapeError("adam_step: size mismatch for " + weights[p].name);
    }
    for (double g : grads[p].values) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + grads[p].name);
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < weights.size(); ++p) {
    auto w = weights[p].values;
    auto g = grads[p].values;
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= cfg.alpha * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace dnet
