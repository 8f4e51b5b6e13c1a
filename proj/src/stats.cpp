#include "mcis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcis/common.hpp"

namespace mcis {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ConfigError("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) throw ConfigError("stddev needs at least two samples");
  const double m = mean(xs);
  double ss = 0.0;
  for (const double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ConfigError("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

double bootstrap_mean_diff_quantile(std::span<const double> a,
                                    std::span<const double> b, int resamples,
                                    double q, Rng& rng) {
  if (a.empty() || b.empty()) throw ConfigError("bootstrap of empty sample");
  std::vector<double> diffs(static_cast<std::size_t>(resamples));
  for (auto& d : diffs) {
    double sa = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      sa += a[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(a.size()) - 1))];
    double sb = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      sb += b[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(b.size()) - 1))];
    d = sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size());
  }
  return quantile(std::move(diffs), q);
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("spearman_rho needs two equal samples of size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;  // a constant series has no rank order
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> moving_average(std::span<const double> xs, int window) {
  std::vector<double> out(xs.size());
  const int n = static_cast<int>(xs.size());
  const int half = window / 2;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += xs[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace mcis
