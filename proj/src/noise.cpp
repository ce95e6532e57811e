#include "dnet/noise.hpp"

#include <cmath>
#include <sstream>

#include "dnet/error.hpp"

namespace dnet {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

SeededRng SeededRng::stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ splitmix64(b + 0x85157AF5ULL));
  return SeededRng(h);
}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index over an empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

NoiseSpec NoiseSpec::gaussian(double sigma_255) {
  if (!(sigma_255 > 0.0) || sigma_255 > 255.0) {
    throw InvalidArgument("gaussian sigma must be in (0, 255], got " + std::to_string(sigma_255));
  }
  return NoiseSpec(GaussianNoise{sigma_255});
}

NoiseSpec NoiseSpec::poisson(double peak) {
  if (!(peak > 0.0) || peak > 1e6) {
    throw InvalidArgument("poisson peak must be in (0, 1e6], got " + std::to_string(peak));
  }
  return NoiseSpec(PoissonNoise{peak});
}

double NoiseSpec::sigma_255() const {
  if (!is_gaussian()) throw InvalidArgument("noise spec is not gaussian");
  return std::get<GaussianNoise>(value_).sigma_255;
}

double NoiseSpec::peak() const {
  if (!is_poisson()) throw InvalidArgument("noise spec is not poisson");
  return std::get<PoissonNoise>(value_).peak;
}

namespace {
std::string compact_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}
}  // namespace

std::string NoiseSpec::label() const {
  return is_gaussian() ? "gaussian-sigma" + compact_number(sigma_255()) : "poisson-peak" + compact_number(peak());
}

nlohmann::json NoiseSpec::to_json() const {
  if (is_gaussian()) return {{"type", "gaussian"}, {"sigma", sigma_255()}};
  return {{"type", "poisson"}, {"peak", peak()}};
}

NoiseSpec NoiseSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) throw InvalidArgument("noise spec must be an object with a 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "gaussian") return gaussian(j.at("sigma").get<double>());
  if (type == "poisson") return poisson(j.at("peak").get<double>());
  throw InvalidArgument("unknown noise type '" + type + "'");
}

bool NoiseSpec::operator<(const NoiseSpec& other) const {
  if (value_.index() != other.value_.index()) return value_.index() < other.value_.index();
  return is_gaussian() ? sigma_255() < other.sigma_255() : peak() < other.peak();
}

std::int64_t poisson_sample(double lambda, SeededRng& rng) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("poisson rate must be finite and >= 0, got " + std::to_string(lambda));
  }
  if (lambda == 0.0) return 0;
  if (lambda < 30.0) {
    const double u = rng.uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    std::int64_t k = 0;
    while (u > cdf) {
      ++k;
      p *= lambda / static_cast<double>(k);
      const double next = cdf + p;
      if (next == cdf) break;  // cdf saturated below u by rounding
      cdf = next;
    }
    return k;
  }
  // PTRS, Hormann (1993).
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::int64_t>(k);
    }
  }
}

GrayImage corrupt(const GrayImage& img, const NoiseSpec& spec, SeededRng& rng) {
  GrayImage out = img;
  if (spec.is_gaussian()) {
    const double sigma = spec.sigma_255() / 255.0;
    for (double& v : out.pixels) v += sigma * rng.normal();
  } else {
    const double peak = spec.peak();
    for (double& v : out.pixels) v = static_cast<double>(poisson_sample(peak * v, rng)) / peak;
  }
  return out;
}

NoiseStats estimate_noise_stats(const GrayImage& clean, const GrayImage& noisy) {
  if (clean.height != noisy.height || clean.width != noisy.width) {
    throw ShapeError("estimate_noise_stats: image sizes differ");
  }
  const std::size_t n = clean.size();
  if (n == 0) return {};
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += noisy.pixels[i] - clean.pixels[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = noisy.pixels[i] - clean.pixels[i] - mean;
    ss += d * d;
  }
  const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

}  // namespace dnet
