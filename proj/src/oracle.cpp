#include "mcis/oracle.hpp"

#include <cmath>

namespace mcis {

double toy_kl(const ToyGaussianProblem& p, double theta) {
  const double d = theta - p.theta0;
  return d * d / (2.0 * p.sigma * p.sigma);
}

double toy_constraint(const ToyGaussianProblem& p, double theta) {
  return 2.0 * theta - p.c0;
}

double analytic_K(const ToyGaussianProblem& p) {
  if (p.sigma <= 0.0) throw ConfigError("toy problem: sigma must be > 0");
  const double boundary = 0.5 * p.c0;
  if (p.theta0 <= boundary) return 0.0;
  const double d = p.theta0 - boundary;
  return d * d / (2.0 * p.sigma * p.sigma);
}

double grid_search_K(const ToyGaussianProblem& p, int resolution) {
  if (p.sigma <= 0.0) throw ConfigError("toy problem: sigma must be > 0");
  if (resolution < 1000) throw ConfigError("grid_search_K: resolution must be >= 1000");
  const double lo = 0.5 * p.c0 - 5.0 * p.sigma;
  const double hi = p.theta0 + 5.0 * p.sigma;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < resolution; ++i) {
    const double theta =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    if (toy_constraint(p, theta) > 0.0) continue;
    best = std::min(best, toy_kl(p, theta));
  }
  return best;
}

ToySolveResult solve_toy_with_primal_dual(const ToyGaussianProblem& p,
                                          const ToySolveConfig& cfg) {
  if (p.sigma <= 0.0) throw ConfigError("toy problem: sigma must be > 0");
  if (cfg.iterations < 0 || cfg.lr_start <= 0.0 || cfg.lr_end <= 0.0 ||
      cfg.lr_end > cfg.lr_start || cfg.dual_step <= 0.0)
    throw ConfigError("toy solver: bad config");

  double theta = p.theta0;
  if (cfg.init_jitter > 0.0) {
    Rng rng(derive_seed(cfg.seed, "toy-init"));
    theta += rng.uniform(-cfg.init_jitter, cfg.init_jitter) * p.sigma;
  }

  DualBookkeeping dual(cfg.lambda_init, cfg.dual_step);
  ToySolveResult result;
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const double lr =
        cfg.iterations > 1
            ? cfg.lr_start + (cfg.lr_end - cfg.lr_start) *
                                 static_cast<double>(iter - 1) /
                                 static_cast<double>(cfg.iterations - 1)
            : cfg.lr_start;
    const double v_star = theta;
    const double v_sub = p.c0 - theta;
    const HistoryRow row = dual.record(iter, toy_kl(p, theta), v_star, v_sub, lr);

    // d/dtheta [ KL + lambda * max(0, c) ], hinge inactive when c <= 0
    double grad = (theta - p.theta0) * inv_var;
    if (row.c > 0.0) grad += 2.0 * row.lambda;
    theta -= lr * grad;
    if (std::abs(theta) > 1e6)
      throw NumericError("toy solver diverged: |theta| > 1e6 at iteration " +
                         std::to_string(iter));
  }
  result.k_best = dual.k_best();
  result.theta_final = theta;
  result.history = dual.history();
  return result;
}

}  // namespace mcis
