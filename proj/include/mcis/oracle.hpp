#pragma once

#include "mcis/search.hpp"

namespace mcis {

// Exactly solvable miniature of the constrained search. One shared scalar
// parameter theta couples both policies: V*(theta) = theta,
// V_sub(theta) = c0 - theta, transitions N(theta, sigma^2), so per-step
// KL(theta0 || theta) = (theta - theta0)^2 / (2 sigma^2). The coupling is
// what makes a positive infimum possible, mirroring how shared function
// approximation couples the two policies' predictions in the neural model.
struct ToyGaussianProblem {
  double theta0 = 1.0;
  double c0 = 1.0;
  double sigma = 1.0;
};

double toy_kl(const ToyGaussianProblem& p, double theta);
double toy_constraint(const ToyGaussianProblem& p, double theta);  // V* - V_sub

// 0 when theta0 <= c0/2 (already confusing), else the boundary value
// (theta0 - c0/2)^2 / (2 sigma^2).
double analytic_K(const ToyGaussianProblem& p);

// Brute-force oracle: minimum KL over a uniform grid on
// [c0/2 - 5 sigma, theta0 + 5 sigma] restricted to feasible points.
double grid_search_K(const ToyGaussianProblem& p, int resolution);

struct ToySolveConfig {
  int iterations = 2000;
  double lr_start = 1e-2;
  double lr_end = 1e-2;
  double lambda_init = 1.0;
  double dual_step = 0.1;
  // Jitters the initial theta by uniform(-init_jitter, init_jitter) * sigma;
  // 0 keeps the canonical theta = theta0 start.
  double init_jitter = 0.0;
  std::uint64_t seed = 0;
};

struct ToySolveResult {
  double k_best = std::numeric_limits<double>::infinity();
  double theta_final = 0.0;
  std::vector<HistoryRow> history;
};

// Plain-gradient primal step on scalar theta with the shared dual
// bookkeeping; throws NumericError when |theta| exceeds 1e6.
ToySolveResult solve_toy_with_primal_dual(const ToyGaussianProblem& p,
                                          const ToySolveConfig& cfg);

}  // namespace mcis
