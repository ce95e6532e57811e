#include "dnet/model_io.hpp"

#include <fstream>
#include <sstream>

#include "dnet/container.hpp"
#include "dnet/error.hpp"

namespace dnet {

std::vector<double> flatten_weights(const NetworkWeights& weights) {
  std::vector<double> out;
  out.reserve(parameter_count(weights));
  for (const auto& view : parameter_views(weights)) out.insert(out.end(), view.values.begin(), view.values.end());
  return out;
}

NetworkWeights unflatten_weights(std::span<const double> values, const NetworkConfig& config) {
  NetworkWeights weights = zero_weights(config);
  std::size_t offset = 0;
  for (auto& view : parameter_views(weights)) {
    if (offset + view.values.size() > values.size()) throw FormatError("too few weight values for configuration");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), view.values.size(), view.values.begin());
    offset += view.values.size();
  }
  if (offset != values.size()) throw FormatError("weight value count does not match configuration");
  return weights;
}

std::string serialize_model(const DenoiseModel& model) {
  check_weights(model.weights, model.config);
  ContainerSection section;
  section.magic = "DNET";
  section.version = kModelVersion;
  section.meta = {{"config", model.config.to_json()},
                  {"noise_spec", model.noise.to_json()},
                  {"training", model.training},
                  {"parameter_count", parameter_count(model.weights)}};
  section.values = flatten_weights(model.weights);
  std::ostringstream out(std::ios::binary);
  write_section(out, section);
  return std::move(out).str();
}

void save_model(const DenoiseModel& model, const std::filesystem::path& path) {
  write_file_atomically(path.string(), serialize_model(model));
}

void save_model(const NetworkWeights& weights, const NetworkConfig& config, const NoiseSpec& noise,
                const std::filesystem::path& path, const nlohmann::json& training) {
  save_model(DenoiseModel{config, weights, noise, training}, path);
}

DenoiseModel read_model(std::istream& in) {
  ContainerSection section = read_section(in, "DNET", kModelVersion);
  try {
    NetworkConfig config = NetworkConfig::from_json(section.meta.at("config"));
    NoiseSpec noise = NoiseSpec::from_json(section.meta.at("noise_spec"));
    NetworkWeights weights = unflatten_weights(section.values, config);
    return DenoiseModel{config, std::move(weights), noise, section.meta.value("training", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model metadata: ") + e.what());
  }
}

DenoiseModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace dnet
