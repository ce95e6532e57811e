#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "dnet/adam.hpp"
#include "dnet/image_io.hpp"
#include "dnet/model_io.hpp"
#include "dnet/network.hpp"
#include "dnet/noise.hpp"

namespace dnet {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t patch = 128;
  std::size_t loss_margin = 21;
  std::size_t steps = 2000;
  AdamConfig adam;
  bool hflip = true;
  std::uint64_t seed = 0;  // drives crops, flips and noise
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::size_t log_every = 10;
  // When false the wall_ms column of the loss log is written as 0 so
  // logs of identical runs are byte-identical.
  bool record_wall_time = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct PatchOrigin {
  std::size_t image = 0;
  std::size_t y = 0;
  std::size_t x = 0;
  bool flipped = false;
};

struct Batch {
  Tensor noisy;  // (b,p,p,1), network range, not clamped
  Tensor clean;  // (b,p,p,1), network range
  std::vector<PatchOrigin> origins;
};

// Draws the batch for one optimization step. Slot s of step t uses its own
// stream keyed by (cfg.seed, t, s), so batches do not depend on threading
// or on which steps were drawn before. Images smaller than the patch are
// skipped with a warning.
Batch sample_batch(const std::vector<GrayImage>& corpus, const TrainConfig& cfg, const NoiseSpec& spec,
                   std::uint64_t step);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pred, zero on the masked border
};

// Mean squared error over the center crop (margin pixels removed on each side).
LossResult masked_l2_loss(const Tensor& pred, const Tensor& target, std::size_t margin);

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path);

struct Checkpoint {
  DenoiseModel model;
  AdamState adam;
  TrainConfig train;
  std::size_t steps_done = 0;
};

// Model file followed by an "ADAM" section with the optimizer moments.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Owns the weights and optimizer state of one training run.
class Trainer {
 public:
  Trainer(std::vector<GrayImage> corpus, const NetworkConfig& net, const TrainConfig& train, const NoiseSpec& spec);
  Trainer(std::vector<GrayImage> corpus, Checkpoint ckpt);

  // One sample -> forward -> loss -> backward -> ADAM iteration; returns the batch loss.
  double step();

  // Loss of the current weights on a given batch (no update).
  double batch_loss(const Batch& batch) const;

  std::size_t steps_done() const { return steps_done_; }
  const NetworkWeights& weights() const { return weights_; }
  const NetworkConfig& network_config() const { return net_; }
  const TrainConfig& train_config() const { return train_; }
  const AdamState& adam_state() const { return adam_; }
  DenoiseModel model() const;
  Checkpoint checkpoint() const;

 private:
  std::vector<GrayImage> corpus_;
  NetworkConfig net_;
  TrainConfig train_;
  NoiseSpec spec_;
  NetworkWeights weights_;
  AdamState adam_;
  std::size_t steps_done_ = 0;

  // Pixels trimmed from each patch side before the forward pass. Outputs
  // inside the loss region never see these pixels, so the loss and its
  // gradient are unchanged while the convolutions get cheaper.
  std::size_t trim() const;
};

struct TrainOptions {
  std::optional<std::filesystem::path> log_path;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const LossRecord&)> on_log;
};

struct TrainResult {
  DenoiseModel model;
  std::vector<LossRecord> log;
};

TrainResult train(const std::vector<GrayImage>& corpus, const NetworkConfig& net, const TrainConfig& cfg,
                  const NoiseSpec& spec, const TrainOptions& options = {});

}  // namespace dnet
