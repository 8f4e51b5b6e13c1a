#pragma once

#include <span>
#include <vector>

#include "mcis/rng.hpp"

namespace mcis {

double mean(std::span<const double> xs);
double sample_stddev(std::span<const double> xs);

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> xs, double q);

// q-quantile of the bootstrap distribution of mean(a) - mean(b), unpaired.
double bootstrap_mean_diff_quantile(std::span<const double> a,
                                    std::span<const double> b, int resamples,
                                    double q, Rng& rng);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// Centered moving average with the window clipped at the ends.
std::vector<double> moving_average(std::span<const double> xs, int window);

}  // namespace mcis
