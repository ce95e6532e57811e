#include "dnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/log.hpp"
#include "dnet/parallel.hpp"

namespace dnet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (patch <= 2 * loss_margin) {
    throw InvalidArgument("patch (" + std::to_string(patch) + ") must exceed twice the loss margin (" +
                          std::to_string(loss_margin) + ")");
  }
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"patch", patch},       {"loss_margin", loss_margin},
          {"steps", steps},           {"adam", adam.to_json()}, {"hflip", hflip},
          {"seed", seed},             {"checkpoint_every", checkpoint_every},
          {"log_every", log_every},   {"record_wall_time", record_wall_time}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patch = j.value("patch", c.patch);
  c.loss_margin = j.value("loss_margin", c.loss_margin);
  c.steps = j.value("steps", c.steps);
  if (j.contains("adam")) c.adam = AdamConfig::from_json(j.at("adam"));
  c.hflip = j.value("hflip", c.hflip);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.log_every = j.value("log_every", c.log_every);
  c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  c.validate();
  return c;
}

Batch sample_batch(const std::vector<GrayImage>& corpus, const TrainConfig& cfg, const NoiseSpec& spec,
                   std::uint64_t step) {
  cfg.validate();
  const std::size_t p = cfg.patch;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].height >= p && corpus[i].width >= p) {
      usable.push_back(i);
    } else if (step == 0) {
      log_warning("skipping image " + std::to_string(i) + " (" + corpus[i].id() + "): smaller than patch " +
                  std::to_string(p));
    }
  }
  if (usable.empty()) throw InvalidArgument("no corpus image is at least " + std::to_string(p) + "x" + std::to_string(p));

  Batch batch;
  const Shape shape{cfg.batch_size, p, p, 1};
  batch.noisy = Tensor(shape);
  batch.clean = Tensor(shape);
  batch.origins.resize(cfg.batch_size);
  parallel_for(cfg.batch_size, [&](std::size_t slot) {
    SeededRng rng = SeededRng::stream(cfg.seed, step, slot);
    PatchOrigin& o = batch.origins[slot];
    o.image = usable[rng.uniform_index(usable.size())];
    const GrayImage& src = corpus[o.image];
    o.y = rng.uniform_index(src.height - p + 1);
    o.x = rng.uniform_index(src.width - p + 1);
    o.flipped = cfg.hflip && rng.bernoulli(0.5);

    GrayImage clean(p, p);
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        const std::size_t sx = o.flipped ? o.x + p - 1 - x : o.x + x;
        clean.at(y, x) = src.at(o.y + y, sx);
      }
    }
    const GrayImage noisy = corrupt(clean, spec, rng);
    const std::size_t base = slot * p * p;
    for (std::size_t i = 0; i < p * p; ++i) {
      batch.clean[base + i] = clean.pixels[i] - 0.5;
      batch.noisy[base + i] = noisy.pixels[i] - 0.5;
    }
  });
  return batch;
}

LossResult masked_l2_loss(const Tensor& pred, const Tensor& target, std::size_t margin) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("loss shapes differ: " + pred.shape().str() + " vs " + target.shape().str());
  }
  const Shape& s = pred.shape();
  if (2 * margin >= s.h || 2 * margin >= s.w) {
    throw InvalidArgument("loss margin " + std::to_string(margin) + " leaves no center region in " + s.str());
  }
  const std::size_t count = s.n * (s.h - 2 * margin) * (s.w - 2 * margin) * s.c;
  LossResult r;
  r.grad = Tensor(s);
  double sum = 0.0;
  const double scale = 2.0 / static_cast<double>(count);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = margin; y < s.h - margin; ++y) {
      for (std::size_t x = margin; x < s.w - margin; ++x) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = pred.index(b, y, x, c);
          const double d = pred[i] - target[i];
          sum += d * d;
          r.grad[i] = scale * d;
        }
      }
    }
  }
  r.loss = sum / static_cast<double>(count);
  return r;
}

void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "step,loss,wall_ms\n";
  for (const auto& r : log) out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.wall_ms) << '\n';
  write_file_atomically(path.string(), out.str());
}

namespace {
constexpr std::uint32_t kAdamVersion = 1;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string bytes = serialize_model(ckpt.model);
  ContainerSection section;
  section.magic = "ADAM";
  section.version = kAdamVersion;
  section.meta = {{"steps_done", ckpt.steps_done}, {"t", ckpt.adam.t}, {"train", ckpt.train.to_json()}};
  for (const auto& m : ckpt.adam.m) section.values.insert(section.values.end(), m.begin(), m.end());
  for (const auto& v : ckpt.adam.v) section.values.insert(section.values.end(), v.begin(), v.end());
  std::ostringstream out(std::ios::binary);
  write_section(out, section);
  bytes += out.str();
  write_file_atomically(path.string(), bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Checkpoint ckpt{read_model(in), {}, {}, 0};
  ContainerSection section = read_section(in, "ADAM", kAdamVersion);
  try {
    ckpt.steps_done = section.meta.at("steps_done").get<std::size_t>();
    ckpt.train = TrainConfig::from_json(section.meta.at("train"));
    ckpt.adam.t = section.meta.at("t").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  const auto views = parameter_views(ckpt.model.weights);
  std::size_t total = 0;
  for (const auto& v : views) total += v.values.size();
  if (section.values.size() != 2 * total) throw FormatError("checkpoint optimizer state has the wrong size");
  std::size_t offset = 0;
  for (auto* moments : {&ckpt.adam.m, &ckpt.adam.v}) {
    for (const auto& v : views) {
      moments->emplace_back(section.values.begin() + static_cast<std::ptrdiff_t>(offset),
                            section.values.begin() + static_cast<std::ptrdiff_t>(offset + v.values.size()));
      offset += v.values.size();
    }
  }
  return ckpt;
}

Trainer::Trainer(std::vector<GrayImage> corpus, const NetworkConfig& net, const TrainConfig& train,
                 const NoiseSpec& spec)
    : corpus_(std::move(corpus)), net_(net), train_(train), spec_(spec), weights_(init_weights(net)) {
  train_.validate();
  adam_ = AdamState::zeros_like(std::span<const ParamView>(parameter_views(weights_)));
}

Trainer::Trainer(std::vector<GrayImage> corpus, Checkpoint ckpt)
    : corpus_(std::move(corpus)),
      net_(ckpt.model.config),
      train_(ckpt.train),
      spec_(ckpt.model.noise),
      weights_(std::move(ckpt.model.weights)),
      adam_(std::move(ckpt.adam)),
      steps_done_(ckpt.steps_done) {
  train_.validate();
}

std::size_t Trainer::trim() const {
  const std::size_t radius = net_.receptive_radius();
  return train_.loss_margin > radius ? train_.loss_margin - radius : 0;
}

double Trainer::batch_loss(const Batch& batch) const {
  const std::size_t t = trim();
  const ForwardTrace trace = forward(crop_center(batch.noisy, t), weights_, net_);
  return masked_l2_loss(trace.output, crop_center(batch.clean, t), train_.loss_margin - t).loss;
}

double Trainer::step() {
  const Batch batch = sample_batch(corpus_, train_, spec_, steps_done_);
  const std::size_t t = trim();
  const ForwardTrace trace = forward(crop_center(batch.noisy, t), weights_, net_, true);
  const LossResult loss = masked_l2_loss(trace.output, crop_center(batch.clean, t), train_.loss_margin - t);
  const NetworkWeights grads = backward(trace, weights_, net_, loss.grad);
  const auto weight_views = parameter_views(weights_);
  const auto grad_views = parameter_views(grads);
  adam_step(weight_views, grad_views, adam_, train_.adam);
  ++steps_done_;
  return loss.loss;
}

DenoiseModel Trainer::model() const {
  nlohmann::json fingerprint = {{"steps_done", steps_done_},
                                {"train", train_.to_json()},
                                {"rng", std::string(SeededRng::kAlgorithm)},
                                {"corpus_size", corpus_.size()}};
  return DenoiseModel{net_, weights_, spec_, fingerprint};
}

Checkpoint Trainer::checkpoint() const { return Checkpoint{model(), adam_, train_, steps_done_}; }

TrainResult train(const std::vector<GrayImage>& corpus, const NetworkConfig& net, const TrainConfig& cfg,
                  const NoiseSpec& spec, const TrainOptions& options) {
  cfg.validate();
  net.validate();
  std::optional<Trainer> trainer;
  if (options.resume_from) {
    Checkpoint ckpt = load_checkpoint(*options.resume_from);
    if (!(ckpt.model.noise == spec)) throw InvalidArgument("checkpoint was trained for " + ckpt.model.noise.label());
    ckpt.train.steps = cfg.steps;
    ckpt.train.log_every = cfg.log_every;
    ckpt.train.checkpoint_every = cfg.checkpoint_every;
    ckpt.train.record_wall_time = cfg.record_wall_time;
    trainer.emplace(corpus, std::move(ckpt));
  } else {
    trainer.emplace(corpus, net, cfg, spec);
  }
  const TrainConfig& tc = trainer->train_config();

  std::vector<LossRecord> log;
  const auto start = std::chrono::steady_clock::now();
  while (trainer->steps_done() < tc.steps) {
    const double loss = trainer->step();
    const std::size_t step = trainer->steps_done();
    if (!std::isfinite(loss)) throw NumericError("training loss became non-finite at step " + std::to_string(step));
    if (step % tc.log_every == 0 || step == 1 || step == tc.steps) {
      LossRecord rec{step, loss, 0.0};
      if (tc.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        rec.wall_ms = std::round(rec.wall_ms);
      }
      log.push_back(rec);
      if (options.on_log) options.on_log(rec);
      log_info("step " + std::to_string(step) + " loss " + format_double(loss));
    }
    if (options.checkpoint_path && tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) {
      save_checkpoint(trainer->checkpoint(), *options.checkpoint_path);
    }
  }
  if (options.checkpoint_path) save_checkpoint(trainer->checkpoint(), *options.checkpoint_path);
  if (options.log_path) write_loss_log(log, *options.log_path);
  return TrainResult{trainer->model(), std::move(log)};
}

}  // namespace dnet
