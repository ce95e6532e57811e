#include "dnet/router.hpp"

#include <fstream>
#include <sstream>

#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/log.hpp"
#include "dnet/parallel.hpp"

namespace dnet {
namespace fs = std::filesystem;

DenoiserRegistry::DenoiserRegistry() : state_(std::make_shared<State>()) {}

DenoiserRegistry DenoiserRegistry::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed registry JSON: " + std::string(e.what()));
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  DenoiserRegistry reg;
  try {
    for (const auto& e : j.at("entries")) {
      reg.add(e.at("class").get<std::string>(), NoiseSpec::from_json(e.at("noise")), resolve(e.at("model").get<std::string>()));
    }
    if (j.contains("classifier")) reg.classifier_path = resolve(j.at("classifier").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed registry entry: " + std::string(e.what()));
  }
  reg.validate();
  return reg;
}

void DenoiserRegistry::save(const fs::path& path) const {
  nlohmann::json entries = nlohmann::json::array();
  {
    std::lock_guard lock(state_->mutex);
    for (const auto& [key, slot] : state_->slots) {
      if (slot.path.empty()) throw InvalidArgument("cannot save a registry entry that has no model file");
      entries.push_back({{"class", key.first}, {"noise", key.second.to_json()}, {"model", slot.path.string()}});
    }
  }
  nlohmann::json j = {{"entries", entries}};
  if (classifier_path) j["classifier"] = classifier_path->string();
  write_file_atomically(path.string(), j.dump(2) + "\n");
}

void DenoiserRegistry::add(const std::string& label, const NoiseSpec& noise, const fs::path& model_path) {
  std::lock_guard lock(state_->mutex);
  state_->slots.insert_or_assign({label, noise}, Slot{model_path, nullptr});
}

void DenoiserRegistry::add(const std::string& label, const NoiseSpec& noise, std::shared_ptr<const DenoiseModel> model) {
  std::lock_guard lock(state_->mutex);
  state_->slots.insert_or_assign({label, noise}, Slot{{}, std::move(model)});
}

void DenoiserRegistry::validate() const {
  std::lock_guard lock(state_->mutex);
  for (const auto& [key, slot] : state_->slots) {
    if (!state_->slots.contains({kAgnosticClass, key.second})) {
      throw InvalidArgument("registry lacks an agnostic model for " + key.second.label());
    }
  }
}

DenoiserRegistry::Lookup DenoiserRegistry::lookup(const std::string& label, const NoiseSpec& noise) const {
  std::lock_guard lock(state_->mutex);
  Lookup result{nullptr, label, false};
  auto it = state_->slots.find({label, noise});
  if (it == state_->slots.end()) {
    it = state_->slots.find({kAgnosticClass, noise});
    if (it == state_->slots.end()) {
      throw InvalidArgument("no model for class '" + label + "' and no agnostic fallback for " + noise.label());
    }
    if (label != kAgnosticClass) log_warning("no '" + label + "' model for " + noise.label() + "; using agnostic model");
    result.label = kAgnosticClass;
    result.fallback = label != kAgnosticClass;
  }
  Slot& slot = it->second;
  if (!slot.model) {
    auto model = std::make_shared<const DenoiseModel>(load_model(slot.path));
    if (!(model->noise == noise)) {
      throw InvalidArgument("model " + slot.path.string() + " was trained for " + model->noise.label() +
                            ", registry says " + noise.label());
    }
    slot.model = std::move(model);
    ++state_->loads;
  }
  result.model = slot.model;
  return result;
}

std::size_t DenoiserRegistry::loads() const {
  std::lock_guard lock(state_->mutex);
  return state_->loads;
}

RouteResult route_denoise(const GrayImage& noisy, const DenoiserRegistry& registry, const RouteSelector& selector,
                          const NoiseSpec& spec, std::size_t pad) {
  RouteResult result;
  std::string wanted;
  if (const auto* oracle = std::get_if<OracleLabel>(&selector)) {
    wanted = oracle->name;
  } else {
    const Classifier* clf = std::get<const Classifier*>(selector);
    if (!clf) throw InvalidArgument("route_denoise needs a classifier or an oracle label");
    Prediction p = clf->classify(noisy);
    wanted = p.name;
    result.probabilities = std::move(p.probabilities);
  }
  const auto found = registry.lookup(wanted, spec);
  result.image = denoise_image(noisy, *found.model, pad);
  result.label = found.label;
  result.fallback = found.fallback;
  return result;
}

std::vector<PairedRecord> evaluate_routing(const LabeledCorpus& corpus, const DenoiserRegistry& registry,
                                           const Classifier& classifier, const NoiseSpec& spec,
                                           std::size_t realizations, std::uint64_t seed, std::size_t pad) {
  if (realizations < 1) throw InvalidArgument("realizations must be >= 1");
  std::vector<GrayImage> images;
  for (const auto& item : corpus.items) images.push_back(item.image);
  std::vector<PairedRecord> records(corpus.items.size() * realizations);
  const auto agnostic = registry.lookup(kAgnosticClass, spec);
  parallel_for(records.size(), [&](std::size_t k) {
    const std::size_t i = k / realizations;
    const std::size_t r = k % realizations;
    const LabeledImage& item = corpus.items[i];
    const std::string id = corpus_image_id(images, i);
    SeededRng rng = realization_stream(seed, id, r);
    const GrayImage noisy = corrupt(item.image, spec, rng);
    const std::string& truth = corpus.class_names.at(item.label);
    const RouteResult oracle = route_denoise(noisy, registry, OracleLabel{truth}, spec, pad);
    const RouteResult chosen = route_denoise(noisy, registry, &classifier, spec, pad);
    const GrayImage plain = denoise_image(noisy, *agnostic.model, pad);
    records[k] = PairedRecord{id,
                              r,
                              truth,
                              classifier.config().class_names[argmax(chosen.probabilities)],
                              psnr(item.image, noisy),
                              psnr(item.image, plain),
                              psnr(item.image, oracle.image),
                              psnr(item.image, chosen.image)};
  });
  return records;
}

std::string paired_csv(const std::vector<PairedRecord>& records) {
  std::ostringstream out;
  out << "image,realization,true_class,predicted_class,psnr_noisy,psnr_agnostic,psnr_oracle,psnr_classifier\n";
  for (const auto& r : records) {
    out << r.image << ',' << r.realization << ',' << r.true_label << ',' << r.predicted_label << ','
        << format_double(r.psnr_noisy) << ',' << format_double(r.psnr_agnostic) << ','
        << format_double(r.psnr_oracle) << ',' << format_double(r.psnr_classifier) << '\n';
  }
  return out.str();
}

}  // namespace dnet
