#pragma once

#include <filesystem>

#include "dnet/network.hpp"
#include "dnet/noise.hpp"
#include "json.hpp"

namespace dnet {

// A trained denoiser: one network per noise type and level.
struct DenoiseModel {
  NetworkConfig config;
  NetworkWeights weights;
  NoiseSpec noise;
  nlohmann::json training = nlohmann::json::object();  // free-form fingerprint
};

inline constexpr char kModelMagic[] = "DNET";
inline constexpr std::uint32_t kModelVersion = 1;

// All weight arrays in serialization order.
std::vector<double> flatten_weights(const NetworkWeights& weights);
NetworkWeights unflatten_weights(std::span<const double> values, const NetworkConfig& config);

void save_model(const DenoiseModel& model, const std::filesystem::path& path);
void save_model(const NetworkWeights& weights, const NetworkConfig& config, const NoiseSpec& noise,
                const std::filesystem::path& path, const nlohmann::json& training = nlohmann::json::object());
std::string serialize_model(const DenoiseModel& model);

// Also accepts a training checkpoint (the model section is read, the
// optimizer section is ignored).
DenoiseModel load_model(const std::filesystem::path& path);
DenoiseModel read_model(std::istream& in);

}  // namespace dnet
