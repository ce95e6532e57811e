#include "dnet/classifier.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/log.hpp"
#include "dnet/parallel.hpp"

namespace dnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr std::uint32_t kClassifierVersion = 1;

Tensor subsample2(const Tensor& t) {
  const Shape& s = t.shape();
  const Shape o{s.n, (s.h + 1) / 2, (s.w + 1) / 2, s.c};
  Tensor out(o);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = 0; y < o.h; ++y) {
      for (std::size_t x = 0; x < o.w; ++x) {
        std::copy_n(t.data() + t.index(b, 2 * y, 2 * x, 0), s.c, &out.at(b, y, x, 0));
      }
    }
  }
  return out;
}

Tensor subsample2_backward(const Tensor& grad, const Shape& full) {
  Tensor out(full);
  const Shape& s = grad.shape();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        std::copy_n(grad.data() + grad.index(b, y, x, 0), s.c, &out.at(b, 2 * y, 2 * x, 0));
      }
    }
  }
  return out;
}

void he_init(ConvParams& p, SeededRng& rng) {
  const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(p.c_in())));
  for (double& w : p.weights.values()) w = sd * rng.normal();
}

void he_init(DenseParams& p, SeededRng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(p.in));
  for (double& w : p.weights) w = sd * rng.normal();
}

ClassifierWeights allocate(const ClassifierConfig& cfg) {
  ClassifierWeights w;
  std::size_t channels = 1;
  for (const auto& layer : cfg.trunk) {
    w.trunk.emplace_back(channels, layer.channels);
    channels = layer.channels;
  }
  std::size_t width = channels;
  for (std::size_t out : cfg.fc) {
    w.fc.push_back(DenseParams{width, out, std::vector<double>(width * out, 0.0), std::vector<double>(out, 0.0)});
    width = out;
  }
  return w;
}

struct ForwardCache {
  std::vector<Tensor> trunk_inputs;
  std::vector<Tensor> trunk_acts;  // post-ReLU, before subsampling
  Shape pooled_from;
  std::vector<RowMat> fc_inputs;   // h_{j-1}
  std::vector<RowMat> fc_pre;      // z_j
  std::vector<RowMat> dropout;     // scaled keep masks for hidden layers
  RowMat logits;
};

}  // namespace

ClassifierConfig ClassifierConfig::reference_head(std::vector<std::string> class_names) {
  ClassifierConfig cfg;
  cfg.fc = {1024, 1024, 1024, class_names.size()};
  cfg.class_names = std::move(class_names);
  return cfg;
}

void ClassifierConfig::validate() const {
  if (trunk.empty()) throw InvalidArgument("classifier trunk must have at least one layer");
  if (fc.empty()) throw InvalidArgument("classifier needs at least one fully connected layer");
  for (const auto& t : trunk) {
    if (t.channels == 0) throw InvalidArgument("trunk layer with zero channels");
  }
  for (std::size_t f : fc) {
    if (f == 0) throw InvalidArgument("fully connected layer of size zero");
  }
  if (class_names.size() != fc.back()) {
    throw InvalidArgument("last fc size " + std::to_string(fc.back()) + " != number of classes " +
                          std::to_string(class_names.size()));
  }
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw InvalidArgument("dropout keep probability must be in (0,1]");
  if (input_side < 2) throw InvalidArgument("classifier input side must be >= 2");
  std::vector<std::string> sorted = class_names;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InvalidArgument("duplicate class names");
}

nlohmann::json ClassifierConfig::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& l : trunk) t.push_back({{"channels", l.channels}, {"stride2", l.stride2}});
  return {{"trunk", t},          {"fc", fc},
          {"keep_prob", keep_prob}, {"input_side", input_side},
          {"class_names", class_names}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  if (j.contains("trunk")) {
    c.trunk.clear();
    for (const auto& l : j.at("trunk")) c.trunk.push_back({l.at("channels").get<std::size_t>(), l.at("stride2").get<bool>()});
  }
  c.fc = j.value("fc", c.fc);
  c.keep_prob = j.value("keep_prob", c.keep_prob);
  c.input_side = j.value("input_side", c.input_side);
  c.class_names = j.value("class_names", c.class_names);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double cross_entropy(std::span<const double> probabilities, std::size_t label) {
  return -std::log(std::max(probabilities[label], 1e-300));
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t height, std::size_t width) {
  if (img.height == 0 || img.width == 0 || height == 0 || width == 0) throw ShapeError("resize of an empty image");
  GrayImage out(height, width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1);
      const double bottom = (1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1);
      out.at(y, x) = (1 - wy) * top + wy * bottom;
    }
  }
  return out;
}

Classifier::Classifier(ClassifierConfig config) : config_(std::move(config)) {
  config_.validate();
  weights_ = allocate(config_);
  SeededRng rng(config_.seed);
  for (auto& c : weights_.trunk) he_init(c, rng);
  for (auto& d : weights_.fc) he_init(d, rng);
}

Classifier::Classifier(ClassifierConfig config, ClassifierWeights weights, bool trained)
    : config_(std::move(config)), weights_(std::move(weights)), trained_(trained) {
  config_.validate();
  const ClassifierWeights expected = allocate(config_);
  bool ok = weights_.trunk.size() == expected.trunk.size() && weights_.fc.size() == expected.fc.size();
  for (std::size_t i = 0; ok && i < expected.trunk.size(); ++i) {
    ok = weights_.trunk[i].weights.shape() == expected.trunk[i].weights.shape();
  }
  for (std::size_t i = 0; ok && i < expected.fc.size(); ++i) {
    ok = weights_.fc[i].in == expected.fc[i].in && weights_.fc[i].out == expected.fc[i].out;
  }
  if (!ok) throw ShapeError("classifier weights do not match the configuration");
}

ClassifierWeights Classifier::zero_like() const { return allocate(config_); }

std::vector<ConstParamView> parameter_views(const ClassifierWeights& w) {
  std::vector<ConstParamView> v;
  for (std::size_t i = 0; i < w.trunk.size(); ++i) {
    const std::string p = "trunk" + std::to_string(i + 1);
    v.push_back({p + ".weights", w.trunk[i].weights.values()});
    v.push_back({p + ".bias", w.trunk[i].bias});
  }
  for (std::size_t i = 0; i < w.fc.size(); ++i) {
    const std::string p = "fc" + std::to_string(i + 1);
    v.push_back({p + ".weights", w.fc[i].weights});
    v.push_back({p + ".bias", w.fc[i].bias});
  }
  return v;
}

std::vector<ConstParamView> Classifier::parameter_views() const { return dnet::parameter_views(weights_); }

std::vector<ParamView> Classifier::parameter_views() {
  std::vector<ParamView> v;
  for (const auto& c : dnet::parameter_views(std::as_const(weights_))) {
    v.push_back({c.name, {const_cast<double*>(c.values.data()), c.values.size()}});
  }
  return v;
}

Tensor Classifier::prepare(const GrayImage& noisy) const {
  return image_to_tensor(resize_bilinear(noisy, config_.input_side, config_.input_side), -0.5);
}

namespace {

// Shared forward pass; rng == nullptr means inference (no dropout).
ForwardCache run_forward(const ClassifierConfig& cfg, const ClassifierWeights& w, const Tensor& batch, SeededRng* rng) {
  const Shape& in = batch.shape();
  if (in.c != 1 || in.h != cfg.input_side || in.w != cfg.input_side) {
    throw ShapeError("classifier input must be (b," + std::to_string(cfg.input_side) + "," +
                     std::to_string(cfg.input_side) + ",1), got " + in.str());
  }
  ForwardCache cache;
  Tensor x = batch;
  for (std::size_t k = 0; k < cfg.trunk.size(); ++k) {
    cache.trunk_inputs.push_back(x);
    Tensor a = relu_forward(conv2d_forward(x, w.trunk[k], Padding::Same));
    x = cfg.trunk[k].stride2 ? subsample2(a) : a;
    cache.trunk_acts.push_back(std::move(a));
  }
  const Shape& s = x.shape();
  cache.pooled_from = s;
  RowMat h = RowMat::Zero(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(s.c));
  const double inv_area = 1.0 / static_cast<double>(s.h * s.w);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < s.h * s.w; ++p) {
      for (std::size_t c = 0; c < s.c; ++c) h(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) += x[(b * s.h * s.w + p) * s.c + c];
    }
  }
  h *= inv_area;

  for (std::size_t j = 0; j < w.fc.size(); ++j) {
    const DenseParams& d = w.fc[j];
    const ConstMap wm(d.weights.data(), static_cast<Eigen::Index>(d.in), static_cast<Eigen::Index>(d.out));
    const Eigen::Map<const Eigen::RowVectorXd> bias(d.bias.data(), static_cast<Eigen::Index>(d.out));
    cache.fc_inputs.push_back(h);
    RowMat z = h * wm;
    z.rowwise() += bias;
    cache.fc_pre.push_back(z);
    if (j + 1 == w.fc.size()) {
      cache.logits = z;
      break;
    }
    RowMat mask = RowMat::Ones(z.rows(), z.cols());
    if (rng) {
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng->bernoulli(cfg.keep_prob) ? 1.0 / cfg.keep_prob : 0.0;
      }
    }
    h = (z.array().max(0.0) * mask.array()).matrix();
    cache.dropout.push_back(std::move(mask));
  }
  return cache;
}

}  // namespace

std::vector<std::vector<double>> Classifier::logits(const Tensor& batch) const {
  const ForwardCache cache = run_forward(config_, weights_, batch, nullptr);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(cache.logits.rows()));
  for (Eigen::Index b = 0; b < cache.logits.rows(); ++b) {
    out[static_cast<std::size_t>(b)].assign(cache.logits.row(b).data(), cache.logits.row(b).data() + cache.logits.cols());
  }
  return out;
}

Prediction Classifier::classify(const GrayImage& noisy) const {
  if (!trained_) throw InvalidArgument("classifier has not been trained");
  const auto l = logits(prepare(noisy));
  Prediction p;
  p.probabilities = softmax(l.front());
  p.label = argmax(p.probabilities);
  p.name = config_.class_names[p.label];
  return p;
}

double Classifier::loss_and_gradients(const Tensor& batch, std::span<const std::size_t> labels, SeededRng& rng,
                                      ClassifierWeights& grads) const {
  const ForwardCache cache = run_forward(config_, weights_, batch, &rng);
  const auto n = static_cast<std::size_t>(cache.logits.rows());
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  const std::size_t classes = config_.num_classes();

  RowMat g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(classes));
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] >= classes) throw InvalidArgument("label out of range");
    const std::vector<double> row(cache.logits.row(static_cast<Eigen::Index>(b)).data(),
                                  cache.logits.row(static_cast<Eigen::Index>(b)).data() + classes);
    const std::vector<double> p = softmax(row);
    loss += cross_entropy(p, labels[b]);
    for (std::size_t c = 0; c < classes; ++c) {
      g(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) =
          (p[c] - (c == labels[b] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  loss /= static_cast<double>(n);

  grads = zero_like();
  for (std::size_t j = weights_.fc.size(); j-- > 0;) {
    const DenseParams& d = weights_.fc[j];
    const ConstMap wm(d.weights.data(), static_cast<Eigen::Index>(d.in), static_cast<Eigen::Index>(d.out));
    MutMap gw(grads.fc[j].weights.data(), static_cast<Eigen::Index>(d.in), static_cast<Eigen::Index>(d.out));
    gw.noalias() = cache.fc_inputs[j].transpose() * g;
    const Eigen::RowVectorXd gb = g.colwise().sum();
    std::copy(gb.data(), gb.data() + gb.size(), grads.fc[j].bias.begin());
    RowMat prev = g * wm.transpose();
    if (j > 0) {
      const RowMat& z = cache.fc_pre[j - 1];
      const RowMat& mask = cache.dropout[j - 1];
      prev = (prev.array() * (z.array() > 0.0).cast<double>() * mask.array()).matrix();
    }
    g = std::move(prev);
  }

  const Shape& s = cache.pooled_from;
  Tensor gx(s);
  const double inv_area = 1.0 / static_cast<double>(s.h * s.w);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < s.h * s.w; ++p) {
      for (std::size_t c = 0; c < s.c; ++c) {
        gx[(b * s.h * s.w + p) * s.c + c] = g(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) * inv_area;
      }
    }
  }
  for (std::size_t k = config_.trunk.size(); k-- > 0;) {
    const Tensor& act = cache.trunk_acts[k];
    const Tensor ga = config_.trunk[k].stride2 ? subsample2_backward(gx, act.shape()) : gx;
    const Tensor gz = relu_backward(act, ga);
    ConvGradients cg = conv2d_backward(cache.trunk_inputs[k], weights_.trunk[k], gz, Padding::Same, k > 0);
    grads.trunk[k] = std::move(cg.params);
    gx = std::move(cg.input);
  }
  return loss;
}

namespace {

Tensor make_sample(const Classifier& clf, const GrayImage& clean, const NoiseSpec& spec, bool flip, SeededRng& rng) {
  const GrayImage noisy = corrupt(clean, spec, rng);
  Tensor t = clf.prepare(noisy);
  return flip ? flip_horizontal(t) : t;
}

}  // namespace

ClassifierTrainResult train_classifier(const LabeledCorpus& corpus, ClassifierConfig config, const NoiseSpec& spec,
                                       const ClassifierTrainConfig& train) {
  config.class_names = corpus.class_names;
  if (config.fc.empty() || config.fc.back() != corpus.class_names.size()) {
    if (config.fc.empty()) config.fc.push_back(corpus.class_names.size());
    else config.fc.back() = corpus.class_names.size();
  }
  config.validate();
  if (corpus.class_names.empty()) throw InvalidArgument("labeled corpus has no classes");
  for (std::size_t c = 0; c < corpus.class_names.size(); ++c) {
    if (corpus.count_of(c) == 0) throw InvalidArgument("class '" + corpus.class_names[c] + "' has no examples");
  }
  if (train.batch_size < 1) throw InvalidArgument("classifier batch size must be >= 1");

  Classifier clf(config);
  auto views = clf.parameter_views();
  AdamState adam = AdamState::zeros_like(std::span<const ParamView>(views));
  std::vector<std::pair<std::size_t, double>> log;
  const std::size_t side = config.input_side;

  for (std::size_t step = 0; step < train.steps; ++step) {
    Tensor batch(Shape{train.batch_size, side, side, 1});
    std::vector<std::size_t> labels(train.batch_size);
    parallel_for(train.batch_size, [&](std::size_t slot) {
      SeededRng rng = SeededRng::stream(train.seed, step, slot);
      const LabeledImage& item = corpus.items[rng.uniform_index(corpus.items.size())];
      const bool flip = train.hflip && rng.bernoulli(0.5);
      const Tensor sample = make_sample(clf, item.image, spec, flip, rng);
      std::copy(sample.values().begin(), sample.values().end(), batch.data() + slot * side * side);
      labels[slot] = item.label;
    });
    SeededRng dropout_rng = SeededRng::stream(train.seed, step, 0xD409D07ULL);
    ClassifierWeights grads;
    const double loss = clf.loss_and_gradients(batch, labels, dropout_rng, grads);
    if (!std::isfinite(loss)) throw NumericError("classifier loss became non-finite at step " + std::to_string(step + 1));
    adam_step(views, parameter_views(grads), adam, train.adam);
    if ((step + 1) % train.log_every == 0 || step == 0 || step + 1 == train.steps) {
      log.emplace_back(step + 1, loss);
      log_info("classifier step " + std::to_string(step + 1) + " loss " + format_double(loss));
    }
  }
  clf.mark_trained();
  return {std::move(clf), std::move(log)};
}

double classification_accuracy(const Classifier& classifier, const LabeledCorpus& corpus, const NoiseSpec& spec,
                               std::uint64_t seed) {
  if (corpus.items.empty()) return 0.0;
  std::vector<int> correct(corpus.items.size(), 0);
  parallel_for(corpus.items.size(), [&](std::size_t i) {
    SeededRng rng = SeededRng::stream(seed, i, 0xACC);
    const GrayImage noisy = corrupt(corpus.items[i].image, spec, rng);
    correct[i] = classifier.classify(noisy).label == corpus.items[i].label ? 1 : 0;
  });
  std::size_t total = 0;
  for (int c : correct) total += static_cast<std::size_t>(c);
  return static_cast<double>(total) / static_cast<double>(corpus.items.size());
}

void save_classifier(const Classifier& classifier, const NoiseSpec& spec, const std::filesystem::path& path) {
  ContainerSection section;
  section.magic = "DCLS";
  section.version = kClassifierVersion;
  section.meta = {{"config", classifier.config().to_json()}, {"noise_spec", spec.to_json()}, {"trained", classifier.trained()}};
  for (const auto& v : classifier.parameter_views()) section.values.insert(section.values.end(), v.values.begin(), v.values.end());
  std::ostringstream out(std::ios::binary);
  write_section(out, section);
  write_file_atomically(path.string(), out.str());
}

Classifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open classifier file " + path.string());
  ContainerSection section = read_section(in, "DCLS", kClassifierVersion);
  ClassifierConfig cfg;
  bool trained = false;
  try {
    cfg = ClassifierConfig::from_json(section.meta.at("config"));
    trained = section.meta.value("trained", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed classifier metadata: ") + e.what());
  }
  Classifier clf(cfg);
  std::size_t offset = 0;
  for (auto& v : clf.parameter_views()) {
    if (offset + v.values.size() > section.values.size()) throw FormatError("classifier file has too few values");
    std::copy_n(section.values.begin() + static_cast<std::ptrdiff_t>(offset), v.values.size(), v.values.begin());
    offset += v.values.size();
  }
  if (offset != section.values.size()) throw FormatError("classifier file has too many values");
  if (trained) clf.mark_trained();
  return clf;
}

}  // namespace dnet
