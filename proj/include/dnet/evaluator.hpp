#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnet/image_io.hpp"
#include "dnet/model_io.hpp"
#include "dnet/noise.hpp"
#include "json.hpp"

namespace dnet {

inline constexpr std::size_t kDefaultImagePad = 21;

// Pads the image by reflection, runs the network and removes the padding.
// Output is clamped to [0,1] and has the input's shape.
GrayImage denoise_image(const GrayImage& img, const DenoiseModel& model, std::size_t pad = kDefaultImagePad);

// 10 log10(1 / MSE) with MAX = 1; test is clamped to [0,1] first.
// Identical images give +infinity.
double psnr(const GrayImage& reference, const GrayImage& test);

struct EvalRecord {
  std::string image;
  std::size_t realization = 0;
  double psnr_noisy = 0.0;
  double psnr_denoised = 0.0;
  bool operator==(const EvalRecord&) const = default;
};

struct GainEntry {
  std::string image;
  double gain = 0.0;
  bool operator==(const GainEntry&) const = default;
};

struct GainProfile {
  std::vector<GainEntry> gains;  // ascending by gain, ties by image id
  double zero_crossing_fraction = 0.0;  // fraction with gain < 0
  double win_rate = 0.0;                // fraction with gain > 0
  bool operator==(const GainProfile&) const = default;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  double mean_psnr_noisy = 0.0;
  double mean_psnr_denoised = 0.0;
  std::size_t count = 0;  // number of records
  std::optional<GainProfile> profile;
  bool operator==(const EvalReport&) const = default;
};

using BaselineScores = std::map<std::string, double>;
using Denoiser = std::function<GrayImage(const GrayImage& noisy)>;

// Recomputes count and means; infinite PSNRs are left out of the means
// with a warning.
void finalize_report(EvalReport& report);

// Corrupts each image `realizations` times and denoises every realization.
// The noise stream for (image, r) is keyed by the image id and r, so any
// subset of images evaluated on its own reproduces the same records.
EvalReport evaluate(const std::vector<GrayImage>& corpus, const Denoiser& denoiser, const NoiseSpec& spec,
                    std::size_t realizations, std::uint64_t seed);
EvalReport evaluate(const std::vector<GrayImage>& corpus, const DenoiseModel& model, const NoiseSpec& spec,
                    std::size_t realizations, std::uint64_t seed, std::size_t pad = kDefaultImagePad);

// Stable id for image i of a corpus: its file stem, or image_<i>.
std::string corpus_image_id(const std::vector<GrayImage>& corpus, std::size_t i);
SeededRng realization_stream(std::uint64_t seed, const std::string& image_id, std::size_t realization);

// Per-image denoised PSNR averaged over realizations.
std::map<std::string, double> per_image_psnr(const EvalReport& report);

// gain_i = ours_i - baseline_i over every evaluated image.
GainProfile gain_profile(const EvalReport& report, const BaselineScores& baseline);

enum class ReportFormat { Csv, Json };

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
EvalReport read_report_csv(const std::filesystem::path& path);

std::string profile_csv(const GainProfile& profile);
void emit_profile(const GainProfile& profile, const std::filesystem::path& path);

// CSV with header "image,psnr".
BaselineScores read_baseline_csv(const std::filesystem::path& path);

}  // namespace dnet
