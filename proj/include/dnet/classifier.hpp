#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnet/adam.hpp"
#include "dnet/image_io.hpp"
#include "dnet/noise.hpp"
#include "dnet/tensor.hpp"
#include "json.hpp"

namespace dnet {

struct TrunkLayer {
  std::size_t channels = 8;
  bool stride2 = true;  // keep every second row/column after the ReLU
  bool operator==(const TrunkLayer&) const = default;
};

// Small conv trunk, global average pooling, then fully connected layers.
// The last fc size is the number of classes.
struct ClassifierConfig {
  std::vector<TrunkLayer> trunk = {{8, true}, {16, true}, {32, true}};
  std::vector<std::size_t> fc = {64, 3};
  double keep_prob = 0.5;
  std::size_t input_side = 128;
  std::vector<std::string> class_names = {"checks", "flat", "stripes"};
  std::uint64_t seed = 0;

  // Head of 1024-1024-1024-N fully connected layers.
  static ClassifierConfig reference_head(std::vector<std::string> class_names);

  std::size_t num_classes() const { return fc.empty() ? 0 : fc.back(); }
  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
  bool operator==(const ClassifierConfig&) const = default;
};

struct DenseParams {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // row-major (in, out)
  std::vector<double> bias;
  bool operator==(const DenseParams&) const = default;
};

struct ClassifierWeights {
  std::vector<ConvParams> trunk;
  std::vector<DenseParams> fc;
  bool operator==(const ClassifierWeights&) const = default;
};

struct Prediction {
  std::size_t label = 0;
  std::string name;
  std::vector<double> probabilities;
};

// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);
// Index of the largest value; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);
// Mean categorical cross-entropy of softmax(logits) against labels.
double cross_entropy(std::span<const double> probabilities, std::size_t label);

GrayImage resize_bilinear(const GrayImage& img, std::size_t height, std::size_t width);

class Classifier {
 public:
  explicit Classifier(ClassifierConfig config);  // He-initialized, untrained
  Classifier(ClassifierConfig config, ClassifierWeights weights, bool trained);

  const ClassifierConfig& config() const { return config_; }
  const ClassifierWeights& weights() const { return weights_; }
  ClassifierWeights& mutable_weights() { return weights_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  // Downsampled, network-range input tensor for one image: (1, side, side, 1).
  Tensor prepare(const GrayImage& noisy) const;

  // Inference logits for a batch (b, side, side, 1); dropout disabled.
  std::vector<std::vector<double>> logits(const Tensor& batch) const;

  // Throws InvalidArgument when the classifier was never trained.
  Prediction classify(const GrayImage& noisy) const;

  // Forward + backward of the mean cross-entropy with dropout drawn from rng.
  // Returns the loss and writes gradients into grads (same layout as weights).
  double loss_and_gradients(const Tensor& batch, std::span<const std::size_t> labels, SeededRng& rng,
                            ClassifierWeights& grads) const;

  std::vector<ParamView> parameter_views();
  std::vector<ConstParamView> parameter_views() const;
  ClassifierWeights zero_like() const;

 private:
  ClassifierConfig config_;
  ClassifierWeights weights_;
  bool trained_ = false;
};

std::vector<ConstParamView> parameter_views(const ClassifierWeights& w);

struct ClassifierTrainConfig {
  std::size_t steps = 400;
  std::size_t batch_size = 64;
  AdamConfig adam;
  bool hflip = true;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
};

struct ClassifierTrainResult {
  Classifier classifier;
  std::vector<std::pair<std::size_t, double>> loss_log;
};

// Each sample is corrupted with spec at full resolution, then downsampled.
ClassifierTrainResult train_classifier(const LabeledCorpus& corpus, ClassifierConfig config, const NoiseSpec& spec,
                                       const ClassifierTrainConfig& train);

// Fraction of images (each corrupted once with per-image streams) classified correctly.
double classification_accuracy(const Classifier& classifier, const LabeledCorpus& corpus, const NoiseSpec& spec,
                               std::uint64_t seed);

void save_classifier(const Classifier& classifier, const NoiseSpec& spec, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace dnet
