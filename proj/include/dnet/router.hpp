#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dnet/classifier.hpp"
#include "dnet/evaluator.hpp"
#include "dnet/model_io.hpp"
#include "dnet/noise.hpp"

namespace dnet {

inline const std::string kAgnosticClass = "agnostic";

// (class | "agnostic") x NoiseSpec -> denoiser model. Models are loaded
// lazily on first use, at most once, and shared afterwards.
//
// JSON layout:
//   {"classifier": "clf.dcls",                       (optional)
//    "entries": [{"class": "face", "noise": {...}, "model": "face.dnet"},
//                {"class": "agnostic", "noise": {...}, "model": "all.dnet"}]}
// Relative paths resolve against the registry file's directory.
class DenoiserRegistry {
 public:
  DenoiserRegistry();

  static DenoiserRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void add(const std::string& label, const NoiseSpec& noise, const std::filesystem::path& model_path);
  void add(const std::string& label, const NoiseSpec& noise, std::shared_ptr<const DenoiseModel> model);

  // Every noise spec that has any entry must also have an agnostic entry.
  void validate() const;

  struct Lookup {
    std::shared_ptr<const DenoiseModel> model;
    std::string label;  // label actually used
    bool fallback = false;
  };
  // Falls back to the agnostic model (with a warning) when label has no
  // entry for noise; throws InvalidArgument when that is missing too.
  Lookup lookup(const std::string& label, const NoiseSpec& noise) const;

  std::size_t loads() const;  // number of model files read so far
  std::optional<std::filesystem::path> classifier_path;

 private:
  struct Slot {
    std::filesystem::path path;
    std::shared_ptr<const DenoiseModel> model;
  };
  struct State {
    std::mutex mutex;
    std::map<std::pair<std::string, NoiseSpec>, Slot> slots;
    std::size_t loads = 0;
  };
  std::shared_ptr<State> state_;
};

struct OracleLabel {
  std::string name;
};
using RouteSelector = std::variant<const Classifier*, OracleLabel>;

struct RouteResult {
  GrayImage image;
  std::string label;
  bool fallback = false;
  std::vector<double> probabilities;  // empty in oracle mode
};

RouteResult route_denoise(const GrayImage& noisy, const DenoiserRegistry& registry, const RouteSelector& selector,
                          const NoiseSpec& spec, std::size_t pad = kDefaultImagePad);

// One row per (image, realization): the same noisy realization is denoised
// by the agnostic model, by the true-class model and by the classifier's choice.
struct PairedRecord {
  std::string image;
  std::size_t realization = 0;
  std::string true_label;
  std::string predicted_label;
  double psnr_noisy = 0.0;
  double psnr_agnostic = 0.0;
  double psnr_oracle = 0.0;
  double psnr_classifier = 0.0;
};

std::vector<PairedRecord> evaluate_routing(const LabeledCorpus& corpus, const DenoiserRegistry& registry,
                                           const Classifier& classifier, const NoiseSpec& spec,
                                           std::size_t realizations, std::uint64_t seed,
                                           std::size_t pad = kDefaultImagePad);

std::string paired_csv(const std::vector<PairedRecord>& records);

}  // namespace dnet
