#include "dnet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/log.hpp"
#include "dnet/parallel.hpp"

namespace dnet {

GrayImage denoise_image(const GrayImage& img, const DenoiseModel& model, std::size_t pad) {
  if (img.height == 0 || img.width == 0) throw ShapeError("cannot denoise an empty image");
  if (pad >= std::min(img.height, img.width)) {
    throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " is too small for padding " + std::to_string(pad));
  }
  const Tensor padded = pad_symmetric(to_net_range(img), pad);
  const ForwardTrace trace = forward(padded, model.weights, model.config);
  GrayImage out = from_net_range(crop_center(trace.output, pad));
  out.source = img.source;
  return out;
}

double psnr(const GrayImage& reference, const GrayImage& test) {
  if (reference.height != test.height || reference.width != test.width) {
    throw ShapeError("psnr: image sizes differ");
  }
  if (reference.size() == 0) throw ShapeError("psnr of empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference.pixels[i] - std::clamp(test.pixels[i], 0.0, 1.0);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(reference.size());
  if (mse == 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

void finalize_report(EvalReport& report) {
  report.count = report.records.size();
  double noisy = 0.0, denoised = 0.0;
  std::size_t n_noisy = 0, n_denoised = 0;
  for (const auto& r : report.records) {
    if (std::isfinite(r.psnr_noisy)) {
      noisy += r.psnr_noisy;
      ++n_noisy;
    }
    if (std::isfinite(r.psnr_denoised)) {
      denoised += r.psnr_denoised;
      ++n_denoised;
    }
  }
  if (n_noisy != report.count || n_denoised != report.count) {
    log_warning("infinite PSNR values excluded from report averages");
  }
  report.mean_psnr_noisy = n_noisy ? noisy / static_cast<double>(n_noisy) : 0.0;
  report.mean_psnr_denoised = n_denoised ? denoised / static_cast<double>(n_denoised) : 0.0;
}

std::string corpus_image_id(const std::vector<GrayImage>& corpus, std::size_t i) {
  const std::string id = corpus.at(i).id();
  return id.empty() ? "image_" + std::to_string(i) : id;
}

SeededRng realization_stream(std::uint64_t seed, const std::string& image_id, std::size_t realization) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : image_id) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return SeededRng::stream(seed, h, realization);
}

EvalReport evaluate(const std::vector<GrayImage>& corpus, const Denoiser& denoiser, const NoiseSpec& spec,
                    std::size_t realizations, std::uint64_t seed) {
  if (realizations < 1) throw InvalidArgument("realizations must be >= 1");
  EvalReport report;
  report.records.resize(corpus.size() * realizations);
  parallel_for(report.records.size(), [&](std::size_t k) {
    const std::size_t i = k / realizations;
    const std::size_t r = k % realizations;
    const std::string id = corpus_image_id(corpus, i);
    SeededRng rng = realization_stream(seed, id, r);
    const GrayImage noisy = corrupt(corpus[i], spec, rng);
    const GrayImage denoised = denoiser(noisy);
    report.records[k] = EvalRecord{id, r, psnr(corpus[i], noisy), psnr(corpus[i], denoised)};
  });
  finalize_report(report);
  return report;
}

EvalReport evaluate(const std::vector<GrayImage>& corpus, const DenoiseModel& model, const NoiseSpec& spec,
                    std::size_t realizations, std::uint64_t seed, std::size_t pad) {
  return evaluate(corpus, [&](const GrayImage& noisy) { return denoise_image(noisy, model, pad); }, spec,
                  realizations, seed);
}

std::map<std::string, double> per_image_psnr(const EvalReport& report) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : report.records) {
    auto& [sum, n] = acc[r.image];
    if (std::isfinite(r.psnr_denoised)) {
      sum += r.psnr_denoised;
      ++n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [id, sn] : acc) out[id] = sn.second ? sn.first / static_cast<double>(sn.second) : INFINITY;
  return out;
}

GainProfile gain_profile(const EvalReport& report, const BaselineScores& baseline) {
  GainProfile profile;
  for (const auto& [id, ours] : per_image_psnr(report)) {
    const auto it = baseline.find(id);
    if (it == baseline.end()) throw InvalidArgument("baseline has no score for image '" + id + "'");
    profile.gains.push_back({id, ours - it->second});
  }
  std::sort(profile.gains.begin(), profile.gains.end(), [](const GainEntry& a, const GainEntry& b) {
    return a.gain != b.gain ? a.gain < b.gain : a.image < b.image;
  });
  std::size_t losses = 0, wins = 0;
  for (const auto& g : profile.gains) {
    losses += g.gain < 0.0 ? 1 : 0;
    wins += g.gain > 0.0 ? 1 : 0;
  }
  if (!profile.gains.empty()) {
    const auto n = static_cast<double>(profile.gains.size());
    profile.zero_crossing_fraction = static_cast<double>(losses) / n;
    profile.win_rate = static_cast<double>(wins) / n;
  }
  return profile;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "image,realization,psnr_noisy,psnr_denoised\n";
  for (const auto& r : report.records) {
    out << r.image << ',' << r.realization << ',' << format_double(r.psnr_noisy) << ','
        << format_double(r.psnr_denoised) << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    records.push_back({{"image", r.image},
                       {"realization", r.realization},
                       {"psnr_noisy", number_json(r.psnr_noisy)},
                       {"psnr_denoised", number_json(r.psnr_denoised)}});
  }
  nlohmann::json j = {{"records", records},
                      {"aggregate",
                       {{"mean_psnr_noisy", report.mean_psnr_noisy},
                        {"mean_psnr_denoised", report.mean_psnr_denoised},
                        {"count", report.count}}}};
  if (report.profile) {
    nlohmann::json gains = nlohmann::json::array();
    for (const auto& g : report.profile->gains) gains.push_back({{"image", g.image}, {"gain", number_json(g.gain)}});
    j["profile"] = {{"gains", gains},
                    {"zero_crossing_fraction", report.profile->zero_crossing_fraction},
                    {"win_rate", report.profile->win_rate}};
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport report;
  for (const auto& r : j.at("records")) {
    report.records.push_back({r.at("image").get<std::string>(), r.at("realization").get<std::size_t>(),
                              number_from_json(r.at("psnr_noisy")), number_from_json(r.at("psnr_denoised"))});
  }
  const auto& agg = j.at("aggregate");
  report.mean_psnr_noisy = agg.at("mean_psnr_noisy").get<double>();
  report.mean_psnr_denoised = agg.at("mean_psnr_denoised").get<double>();
  report.count = agg.at("count").get<std::size_t>();
  if (j.contains("profile")) {
    GainProfile p;
    for (const auto& g : j.at("profile").at("gains")) {
      p.gains.push_back({g.at("image").get<std::string>(), number_from_json(g.at("gain"))});
    }
    p.zero_crossing_fraction = j.at("profile").at("zero_crossing_fraction").get<double>();
    p.win_rate = j.at("profile").at("win_rate").get<double>();
    report.profile = p;
  }
  return report;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  const std::string text = format == ReportFormat::Csv ? report_csv(report) : report_json(report).dump(2) + "\n";
  write_file_atomically(path.string(), text);
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "image,realization,psnr_noisy,psnr_denoised") {
    throw InvalidArgument(path.string() + " is not a report CSV");
  }
  EvalReport report;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 4) throw InvalidArgument("malformed report row " + std::to_string(i) + " in " + path.string());
    report.records.push_back({f[0], static_cast<std::size_t>(std::stoull(f[1])), parse_double(f[2]), parse_double(f[3])});
  }
  finalize_report(report);
  return report;
}

std::string profile_csv(const GainProfile& profile) {
  std::ostringstream out;
  out << "rank,image,gain\n";
  for (std::size_t i = 0; i < profile.gains.size(); ++i) {
    out << i + 1 << ',' << profile.gains[i].image << ',' << format_double(profile.gains[i].gain) << '\n';
  }
  return out.str();
}

void emit_profile(const GainProfile& profile, const std::filesystem::path& path) {
  write_file_atomically(path.string(), profile_csv(profile));
}

BaselineScores read_baseline_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "image,psnr") throw InvalidArgument(path.string() + " lacks the 'image,psnr' header");
  BaselineScores scores;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 2) throw InvalidArgument("malformed baseline row " + std::to_string(i) + " in " + path.string());
    scores[f[0]] = parse_double(f[1]);
  }
  return scores;
}

}  // namespace dnet
