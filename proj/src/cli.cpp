#include "dnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "dnet/classifier.hpp"
#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/evaluator.hpp"
#include "dnet/log.hpp"
#include "dnet/parallel.hpp"
#include "dnet/router.hpp"
#include "dnet/synth.hpp"
#include "dnet/trainer.hpp"

namespace dnet::cli {
namespace fs = std::filesystem;

namespace {

// Reads a flat JSON object ({"depth": 8, "no-skip": true, ...}) as CLI11
// config items for the active subcommand. Underscores in keys become dashes.
// An object-valued key names a subcommand section: {"train": {...}}.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> active;
    for (const auto* sub : app_->get_subcommands()) active.push_back(sub->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else {
        for (const auto& sub : active) items.push_back(item({sub}, key, value));
      }
    }
    return items;
  }

 private:
  const CLI::App* app_;

  static CLI::ConfigItem item(std::vector<std::string> parents, std::string key, const nlohmann::json& v) {
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = key;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    } else {
      it.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    return it;
  }
};

struct NoiseFlags {
  std::optional<double> sigma;
  std::optional<double> peak;

  void attach(CLI::App* sub) {
    auto* s = sub->add_option("--sigma", sigma, "Gaussian noise std on the 0-255 scale");
    auto* p = sub->add_option("--peak", peak, "Poisson peak (photon count at intensity 1)");
    s->excludes(p);
    p->excludes(s);
  }
  bool given() const { return sigma.has_value() || peak.has_value(); }
  NoiseSpec spec() const {
    if (sigma) return NoiseSpec::gaussian(*sigma);
    if (peak) return NoiseSpec::poisson(*peak);
    throw CLI::ValidationError("noise", "one of --sigma or --peak is required");
  }
};

struct TrainArgs {
  std::string corpus;
  std::size_t synthetic = 0;
  std::size_t synthetic_size = 96;
  std::string out;
  NoiseFlags noise;
  std::size_t depth = 20;
  std::size_t kernels = 64;
  bool no_skip = false;
  TrainConfig train;
  std::uint64_t net_seed = 0;
  std::string checkpoint;
  std::string resume;
  std::string log;
};

struct DenoiseArgs {
  std::string model, in, out;
  std::size_t pad = kDefaultImagePad;
};

struct EvalArgs {
  std::string model, corpus, out, json, baseline, profile_out;
  std::size_t synthetic = 0;
  std::size_t synthetic_size = 96;
  std::uint64_t synthetic_seed = 1000;
  NoiseFlags noise;
  std::size_t realizations = 1;
  std::uint64_t seed = 0;
  std::size_t pad = kDefaultImagePad;
};

struct ProfileArgs {
  std::string report, baseline, out;
};

struct VisualizeArgs {
  std::string model, in, out_dir;
  std::vector<std::size_t> layers;
  NoiseFlags noise;
  std::uint64_t seed = 0;
  std::size_t pad = kDefaultImagePad;
};

struct ClassifyTrainArgs {
  std::string corpus, out;
  std::size_t synthetic_per_class = 0;
  std::size_t synthetic_size = 256;
  NoiseFlags noise;
  ClassifierTrainConfig train;
  std::size_t side = 128;
  std::string trunk = "8s,16s,32s";
  std::vector<std::size_t> fc = {64};
  double keep_prob = 0.5;
  double lr = 1e-4;
};

struct RouteArgs {
  std::string registry, classifier, oracle, in, out, corpus;
  NoiseFlags noise;
  std::size_t realizations = 1;
  std::uint64_t seed = 0;
  std::size_t pad = kDefaultImagePad;
};

struct SynthArgs {
  std::string out_dir;
  std::string kind = "scenes";
  std::size_t count = 20;
  std::size_t size = 96;
  std::uint64_t seed = 0;
};

std::vector<TrunkLayer> parse_trunk(const std::string& text) {
  std::vector<TrunkLayer> layers;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    TrunkLayer l;
    l.stride2 = tok.back() == 's';
    if (l.stride2) tok.pop_back();
    try {
      l.channels = std::stoul(tok);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--trunk", "expected entries like 16s or 32");
    }
    layers.push_back(l);
  }
  if (layers.empty()) throw CLI::ValidationError("--trunk", "trunk must not be empty");
  return layers;
}

std::vector<GrayImage> corpus_or_synthetic(const std::string& dir, std::size_t synthetic, std::size_t size,
                                           std::uint64_t seed) {
  if (!dir.empty()) return load_directory(dir);
  if (synthetic > 0) return synth_scene_corpus(synthetic, size, size, seed);
  throw CLI::ValidationError("corpus", "either --corpus or --synthetic is required");
}

void write_stdout(const std::string& text) { std::cout << text << std::flush; }

int do_train(const TrainArgs& a) {
  const NoiseSpec spec = a.noise.spec();
  const NetworkConfig net = NetworkConfig::from_kernels(a.depth, a.kernels, !a.no_skip, a.net_seed);
  const auto corpus = corpus_or_synthetic(a.corpus, a.synthetic, a.synthetic_size, a.train.seed ^ 0xC0FFEEULL);
  TrainOptions options;
  if (!a.log.empty()) options.log_path = a.log;
  if (!a.resume.empty()) options.resume_from = a.resume;
  if (!a.checkpoint.empty()) {
    options.checkpoint_path = a.checkpoint;
  } else if (a.train.checkpoint_every > 0) {
    options.checkpoint_path = fs::path(a.out).replace_extension(".ckpt");
  }
  log_info("training " + std::to_string(parameter_count(net)) + " parameters for " + spec.label());
  const TrainResult result = train(corpus, net, a.train, spec, options);
  save_model(result.model, a.out);
  log_info("wrote " + a.out);
  return kOk;
}

int do_denoise(const DenoiseArgs& a) {
  const DenoiseModel model = load_model(a.model);
  const GrayImage img = load_image(a.in);
  save_image(denoise_image(img, model, a.pad), a.out);
  return kOk;
}

int do_eval(const EvalArgs& a) {
  const DenoiseModel model = load_model(a.model);
  const NoiseSpec spec = a.noise.given() ? a.noise.spec() : model.noise;
  const auto corpus = corpus_or_synthetic(a.corpus, a.synthetic, a.synthetic_size, a.synthetic_seed);
  EvalReport report = evaluate(corpus, model, spec, a.realizations, a.seed, a.pad);
  if (!a.baseline.empty()) {
    report.profile = gain_profile(report, read_baseline_csv(a.baseline));
    if (!a.profile_out.empty()) emit_profile(*report.profile, a.profile_out);
  }
  emit_report(report, a.out, ReportFormat::Csv);
  if (!a.json.empty()) emit_report(report, a.json, ReportFormat::Json);
  log_info("mean PSNR noisy " + format_double(report.mean_psnr_noisy) + " dB, denoised " +
           format_double(report.mean_psnr_denoised) + " dB over " + std::to_string(report.count) + " records");
  return kOk;
}

int do_profile(const ProfileArgs& a) {
  const EvalReport report = read_report_csv(a.report);
  const GainProfile profile = gain_profile(report, read_baseline_csv(a.baseline));
  const nlohmann::json summary = {{"images", profile.gains.size()},
                                  {"zero_crossing_fraction", profile.zero_crossing_fraction},
                                  {"win_rate", profile.win_rate}};
  if (a.out.empty()) {
    write_stdout(profile_csv(profile));
    std::cerr << summary.dump() << '\n';
  } else {
    emit_profile(profile, a.out);
    write_stdout(summary.dump() + "\n");
  }
  return kOk;
}

int do_visualize(const VisualizeArgs& a) {
  const DenoiseModel model = load_model(a.model);
  GrayImage img = load_image(a.in);
  if (a.noise.given()) {
    SeededRng rng(a.seed);
    img = corrupt(img, a.noise.spec(), rng);
  }
  if (a.pad >= std::min(img.height, img.width)) throw ShapeError("image too small for padding");
  const ForwardTrace trace = forward(pad_symmetric(to_net_range(img), a.pad), model.weights, model.config);
  ForwardTrace cropped;
  for (const auto& e : trace.estimates) cropped.estimates.push_back(crop_center(e, a.pad));
  std::vector<std::size_t> layers = a.layers;
  if (layers.empty()) {
    for (std::size_t l = 1; l <= model.config.depth; ++l) layers.push_back(l);
  }
  const auto images = visualize_estimates(cropped, layers);
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "estimate_%02zu.png", layers[i]);
    save_image(images[i], fs::path(a.out_dir) / name);
  }
  save_image(from_net_range(crop_center(trace.output, a.pad)), fs::path(a.out_dir) / "denoised.png");
  if (a.noise.given()) save_image(clamp01(img), fs::path(a.out_dir) / "noisy.png");
  return kOk;
}

int do_classify_train(const ClassifyTrainArgs& a) {
  const NoiseSpec spec = a.noise.spec();
  LabeledCorpus corpus;
  if (!a.corpus.empty()) {
    corpus = load_labeled_directory(a.corpus);
  } else if (a.synthetic_per_class > 0) {
    corpus = synth_texture_corpus(a.synthetic_per_class, a.synthetic_size, a.train.seed ^ 0x7E7ULL);
  } else {
    throw CLI::ValidationError("corpus", "either --corpus or --synthetic-per-class is required");
  }
  ClassifierConfig cfg;
  cfg.trunk = parse_trunk(a.trunk);
  cfg.fc = a.fc;
  cfg.fc.push_back(corpus.class_names.size());
  cfg.keep_prob = a.keep_prob;
  cfg.input_side = a.side;
  cfg.class_names = corpus.class_names;
  cfg.seed = a.train.seed;
  ClassifierTrainConfig tc = a.train;
  tc.adam.alpha = a.lr;
  const ClassifierTrainResult result = train_classifier(corpus, cfg, spec, tc);
  save_classifier(result.classifier, spec, a.out);
  const double acc = classification_accuracy(result.classifier, corpus, spec, a.train.seed + 1);
  log_info("training-set accuracy on fresh noise: " + format_double(acc));
  return kOk;
}

int do_route(const RouteArgs& a) {
  const NoiseSpec spec = a.noise.spec();
  const DenoiserRegistry registry = DenoiserRegistry::load(a.registry);
  std::optional<Classifier> classifier;
  std::string clf_path = a.classifier;
  if (clf_path.empty() && registry.classifier_path) clf_path = registry.classifier_path->string();
  if (!clf_path.empty()) classifier = load_classifier(clf_path);

  if (!a.corpus.empty()) {
    if (!classifier) throw CLI::ValidationError("--classifier", "paired evaluation needs a classifier");
    if (a.out.empty()) throw CLI::ValidationError("--out", "paired evaluation needs --out");
    const LabeledCorpus corpus = load_labeled_directory(a.corpus);
    const auto records = evaluate_routing(corpus, registry, *classifier, spec, a.realizations, a.seed, a.pad);
    write_file_atomically(a.out, paired_csv(records));
    return kOk;
  }
  if (a.in.empty() || a.out.empty()) throw CLI::ValidationError("--in/--out", "routing one image needs --in and --out");
  RouteSelector selector = OracleLabel{a.oracle};
  if (a.oracle.empty()) {
    if (!classifier) throw CLI::ValidationError("--classifier", "give --oracle or a classifier");
    selector = &*classifier;
  }
  const RouteResult r = route_denoise(load_image(a.in), registry, selector, spec, a.pad);
  save_image(r.image, a.out);
  nlohmann::json summary = {{"label", r.label}, {"fallback", r.fallback}};
  if (!r.probabilities.empty()) summary["probabilities"] = r.probabilities;
  write_stdout(summary.dump() + "\n");
  return kOk;
}

int do_synth(const SynthArgs& a) {
  if (a.kind == "scenes") {
    write_corpus(synth_scene_corpus(a.count, a.size, a.size, a.seed), a.out_dir);
  } else if (a.kind == "textures") {
    write_corpus(synth_texture_corpus(a.count, a.size, a.seed), a.out_dir);
  } else {
    throw CLI::ValidationError("--kind", "must be 'scenes' or 'textures'");
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Gradual-residual CNN denoiser: training, inference and evaluation", "dnet"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_config("--config", "", "JSON file with flag values (command-line flags win)");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  std::size_t threads = 0;
  bool verbose = false, quiet = false;
  app.add_option("--threads", threads, "Worker threads (0 = all cores); results do not depend on it");
  app.add_flag("-v,--verbose", verbose, "Progress messages on standard error");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train one denoiser for one noise spec");
  train_cmd->add_option("--corpus", ta.corpus, "Directory of training images (.png/.pgm)");
  train_cmd->add_option("--synthetic", ta.synthetic, "Train on N generated scenes instead of --corpus");
  train_cmd->add_option("--synthetic-size", ta.synthetic_size, "Side of generated scenes");
  train_cmd->add_option("--out", ta.out, "Output model file")->required();
  ta.noise.attach(train_cmd);
  train_cmd->add_option("--depth", ta.depth, "Number of layers");
  train_cmd->add_option("--kernels", ta.kernels, "Kernels per layer (feed channels + 1 with skip connections)");
  train_cmd->add_flag("--no-skip", ta.no_skip, "Drop per-layer estimates; one final conv makes the residual");
  train_cmd->add_option("--steps", ta.train.steps, "Optimization steps (mini-batches)");
  train_cmd->add_option("--batch", ta.train.batch_size, "Patches per mini-batch");
  train_cmd->add_option("--patch", ta.train.patch, "Patch side in pixels");
  train_cmd->add_option("--margin", ta.train.loss_margin, "Border excluded from the loss");
  train_cmd->add_option("--lr", ta.train.adam.alpha, "ADAM learning rate");
  train_cmd->add_option("--beta1", ta.train.adam.beta1, "ADAM beta1");
  train_cmd->add_option("--beta2", ta.train.adam.beta2, "ADAM beta2");
  train_cmd->add_option("--eps", ta.train.adam.eps, "ADAM epsilon");
  bool no_flip = false;
  train_cmd->add_flag("--no-flip", no_flip, "Disable random horizontal flips");
  train_cmd->add_option("--seed", ta.train.seed, "Seed for crops, flips and noise");
  train_cmd->add_option("--net-seed", ta.net_seed, "Seed for weight initialization");
  train_cmd->add_option("--checkpoint-every", ta.train.checkpoint_every, "Steps between checkpoints (0 = only at the end when --checkpoint is set)");
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Checkpoint path (default <out>.ckpt)");
  train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train_cmd->add_option("--log", ta.log, "Loss log CSV (step,loss,wall_ms)");
  train_cmd->add_option("--log-every", ta.train.log_every, "Steps between loss log rows");
  bool no_wall = false;
  train_cmd->add_flag("--no-wall-time", no_wall, "Write wall_ms as 0 for byte-reproducible logs");

  DenoiseArgs da;
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise one image");
  denoise_cmd->add_option("--model", da.model, "Model file")->required();
  denoise_cmd->add_option("--in", da.in, "Input image")->required();
  denoise_cmd->add_option("--out", da.out, "Output image (.png/.pgm)")->required();
  denoise_cmd->add_option("--pad", da.pad, "Reflection padding around the image");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Corrupt, denoise and score a corpus");
  eval_cmd->add_option("--model", ea.model, "Model file")->required();
  eval_cmd->add_option("--corpus", ea.corpus, "Directory of clean test images");
  eval_cmd->add_option("--synthetic", ea.synthetic, "Evaluate on N generated scenes instead of --corpus");
  eval_cmd->add_option("--synthetic-size", ea.synthetic_size, "Side of generated scenes");
  eval_cmd->add_option("--synthetic-seed", ea.synthetic_seed, "Seed of generated scenes");
  ea.noise.attach(eval_cmd);
  eval_cmd->add_option("--realizations", ea.realizations, "Noise realizations per image");
  eval_cmd->add_option("--seed", ea.seed, "Noise seed");
  eval_cmd->add_option("--out", ea.out, "Report CSV (image,realization,psnr_noisy,psnr_denoised)")->required();
  eval_cmd->add_option("--json", ea.json, "Also write the report as JSON");
  eval_cmd->add_option("--baseline", ea.baseline, "Baseline scores CSV (image,psnr) for a gain profile");
  eval_cmd->add_option("--profile-out", ea.profile_out, "Gain profile CSV (rank,image,gain)");
  eval_cmd->add_option("--pad", ea.pad, "Reflection padding around each image");

  ProfileArgs pa;
  auto* profile_cmd = app.add_subcommand("profile", "Gain profile of a report against baseline scores");
  profile_cmd->add_option("--report", pa.report, "Report CSV from eval")->required();
  profile_cmd->add_option("--baseline", pa.baseline, "Baseline scores CSV (image,psnr)")->required();
  profile_cmd->add_option("--out", pa.out, "Profile CSV; standard output when omitted");

  VisualizeArgs va;
  auto* vis_cmd = app.add_subcommand("visualize", "Render per-layer noise estimates");
  vis_cmd->add_option("--model", va.model, "Model file")->required();
  vis_cmd->add_option("--in", va.in, "Input image")->required();
  vis_cmd->add_option("--out-dir", va.out_dir, "Directory for estimate_XX.png")->required();
  vis_cmd->add_option("--layers", va.layers, "1-based layers to render (default: all)")->delimiter(',');
  va.noise.attach(vis_cmd);
  vis_cmd->add_option("--seed", va.seed, "Noise seed when --sigma/--peak corrupts the input first");
  vis_cmd->add_option("--pad", va.pad, "Reflection padding around the image");

  ClassifyTrainArgs ca;
  auto* cls_cmd = app.add_subcommand("classify-train", "Train the noisy-image class classifier");
  cls_cmd->add_option("--corpus", ca.corpus, "Directory with one subdirectory per class");
  cls_cmd->add_option("--synthetic-per-class", ca.synthetic_per_class, "Use N generated textures per class instead");
  cls_cmd->add_option("--synthetic-size", ca.synthetic_size, "Side of generated textures");
  cls_cmd->add_option("--out", ca.out, "Output classifier file")->required();
  ca.noise.attach(cls_cmd);
  cls_cmd->add_option("--steps", ca.train.steps, "Optimization steps");
  cls_cmd->add_option("--batch", ca.train.batch_size, "Images per mini-batch");
  cls_cmd->add_option("--lr", ca.lr, "ADAM learning rate");
  cls_cmd->add_option("--seed", ca.train.seed, "Seed for sampling, noise, dropout and init");
  cls_cmd->add_option("--side", ca.side, "Downsampled input side");
  cls_cmd->add_option("--trunk", ca.trunk, "Conv trunk, e.g. 8s,16s,32s (s = stride 2)");
  cls_cmd->add_option("--fc", ca.fc, "Hidden fully connected sizes (class layer is appended)")->delimiter(',');
  cls_cmd->add_option("--keep-prob", ca.keep_prob, "Dropout keep probability");

  RouteArgs ra;
  auto* route_cmd = app.add_subcommand("route", "Class-aware denoising through a registry");
  route_cmd->add_option("--registry", ra.registry, "Registry JSON")->required();
  route_cmd->add_option("--classifier", ra.classifier, "Classifier file (default: from the registry)");
  route_cmd->add_option("--oracle", ra.oracle, "Use this class label instead of the classifier");
  route_cmd->add_option("--in", ra.in, "Noisy input image");
  route_cmd->add_option("--out", ra.out, "Output image, or paired CSV with --corpus");
  route_cmd->add_option("--corpus", ra.corpus, "Labeled clean corpus for oracle-vs-classifier evaluation");
  ra.noise.attach(route_cmd);
  route_cmd->add_option("--realizations", ra.realizations, "Noise realizations per image (paired evaluation)");
  route_cmd->add_option("--seed", ra.seed, "Noise seed (paired evaluation)");
  route_cmd->add_option("--pad", ra.pad, "Reflection padding around each image");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Write a generated corpus");
  synth_cmd->add_option("--out-dir", sa.out_dir, "Output directory")->required();
  synth_cmd->add_option("--kind", sa.kind, "scenes or textures (textures: one subdirectory per class)");
  synth_cmd->add_option("--count", sa.count, "Images (per class for textures)");
  synth_cmd->add_option("--size", sa.size, "Image side");
  synth_cmd->add_option("--seed", sa.seed, "Generator seed");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  set_thread_count(threads);
  set_log_level(quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warning);
  ta.train.hflip = !no_flip;
  ta.train.record_wall_time = !no_wall;
  ca.train.adam.alpha = ca.lr;

  try {
    if (*train_cmd) return do_train(ta);
    if (*denoise_cmd) return do_denoise(da);
    if (*eval_cmd) return do_eval(ea);
    if (*profile_cmd) return do_profile(pa);
    if (*vis_cmd) return do_visualize(va);
    if (*cls_cmd) return do_classify_train(ca);
    if (*route_cmd) return do_route(ra);
    if (*synth_cmd) return do_synth(sa);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace dnet::cli
