#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "dnet/noise.hpp"
#include "dnet/tensor.hpp"

namespace testutil {

inline dnet::Tensor random_tensor(dnet::Shape s, std::uint64_t seed, double scale = 1.0) {
  dnet::SeededRng rng(seed);
  dnet::Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

inline dnet::ConvParams random_conv(std::size_t c_in, std::size_t c_out, std::uint64_t seed, double scale = 0.5) {
  dnet::ConvParams p(c_in, c_out);
  dnet::SeededRng rng(seed);
  for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = scale * rng.normal();
  for (auto& b : p.bias) b = scale * rng.normal();
  return p;
}

// Central difference d f / d x[i] with step h, restoring x afterwards.
inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-3) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

inline double dot(const dnet::Tensor& a, const dnet::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("dnet_" + tag + "_" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testutil
