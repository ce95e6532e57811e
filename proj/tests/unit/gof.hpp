#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "dnet/noise.hpp"

namespace testutil {

inline double poisson_pmf(double lambda, std::int64_t k) {
  return std::exp(static_cast<double>(k) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(k) + 1.0));
}

// Pearson chi-square goodness of fit against Poisson(lambda); cells with an
// expected count below 5 are merged into the tails.
inline double poisson_gof_pvalue(double lambda, std::size_t n, std::uint64_t seed) {
  dnet::SeededRng rng(seed);
  std::map<std::int64_t, double> observed;
  for (std::size_t i = 0; i < n; ++i) observed[dnet::poisson_sample(lambda, rng)] += 1;
  const double N = static_cast<double>(n);
  std::int64_t lo = 0;
  double lower_p = poisson_pmf(lambda, 0);
  while (lower_p * N < 5) lower_p += poisson_pmf(lambda, ++lo);
  std::int64_t hi = lo + 1;
  while (true) {
    double tail = 1.0 - lower_p;
    for (std::int64_t k = lo + 1; k <= hi; ++k) tail -= poisson_pmf(lambda, k);
    if (tail * N < 5) break;
    ++hi;
  }
  // cells: (<= lo), lo+1 .. hi-1, (>= hi)
  std::vector<double> expected, counts;
  double below = 0, above = 0;
  for (const auto& [k, c] : observed) {
    if (k <= lo) below += c;
    if (k >= hi) above += c;
  }
  expected.push_back(lower_p * N);
  counts.push_back(below);
  double used = lower_p;
  for (std::int64_t k = lo + 1; k < hi; ++k) {
    const double p = poisson_pmf(lambda, k);
    used += p;
    expected.push_back(p * N);
    counts.push_back(observed.count(k) ? observed[k] : 0.0);
  }
  expected.push_back((1.0 - used) * N);
  counts.push_back(above);
  double chi2 = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    chi2 += (counts[i] - expected[i]) * (counts[i] - expected[i]) / expected[i];
  }
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

}  // namespace testutil
