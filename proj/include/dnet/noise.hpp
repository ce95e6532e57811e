#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include "dnet/image_io.hpp"
#include "json.hpp"

namespace dnet {

// Deterministic random stream. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); all distributions are implemented
// here so that draws do not depend on the standard library vendor.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/splitmix64-streams/v1";

  explicit SeededRng(std::uint64_t seed);

  // Independent stream keyed by (seed, a, b), e.g. (seed, image, realization).
  static SeededRng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  // Uniform on [0,1) with 53 random bits.
  double uniform();
  // Standard normal (Marsaglia polar method).
  double normal();
  // Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

struct GaussianNoise {
  double sigma_255;  // standard deviation on the 0..255 intensity scale
  bool operator==(const GaussianNoise&) const = default;
};

struct PoissonNoise {
  double peak;  // expected photon count at intensity 1.0
  bool operator==(const PoissonNoise&) const = default;
};

class NoiseSpec {
 public:
  static NoiseSpec gaussian(double sigma_255);
  static NoiseSpec poisson(double peak);

  bool is_gaussian() const { return std::holds_alternative<GaussianNoise>(value_); }
  bool is_poisson() const { return std::holds_alternative<PoissonNoise>(value_); }
  double sigma_255() const;
  double peak() const;
  // "gaussian-sigma25", "poisson-peak4"
  std::string label() const;

  nlohmann::json to_json() const;
  static NoiseSpec from_json(const nlohmann::json& j);

  bool operator==(const NoiseSpec&) const = default;
  bool operator<(const NoiseSpec& other) const;

 private:
  explicit NoiseSpec(std::variant<GaussianNoise, PoissonNoise> v) : value_(v) {}
  std::variant<GaussianNoise, PoissonNoise> value_;
};

// Gaussian: y = x + n, n ~ N(0, (sigma/255)^2). Poisson: y = Poisson(peak*x)/peak.
// The result is not clamped.
GrayImage corrupt(const GrayImage& img, const NoiseSpec& spec, SeededRng& rng);

// Exact Poisson draw: sequential inversion below 30, PTRS rejection above.
std::int64_t poisson_sample(double lambda, SeededRng& rng);

struct NoiseStats {
  double mean_residual = 0.0;
  double std_residual = 0.0;
};

// Sample mean and standard deviation of noisy - clean.
NoiseStats estimate_noise_stats(const GrayImage& clean, const GrayImage& noisy);

}  // namespace dnet
