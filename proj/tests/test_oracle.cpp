#include <doctest.h>

#include "mcis/oracle.hpp"
#include "mcis/stats.hpp"

using namespace mcis;

TEST_CASE("analytic_K: boundary solution and already-confusing cases") {
  CHECK(analytic_K({1.0, 1.0, 1.0}) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(analytic_K({2.0, 0.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(analytic_K({0.2, 1.0, 1.0}) == 0.0);
  CHECK(analytic_K({0.5, 1.0, 0.7}) == 0.0);  // exactly on the boundary
  CHECK_THROWS_AS(analytic_K({1.0, 1.0, 0.0}), ConfigError);
}

TEST_CASE("grid_search_K agrees with analytic_K and refines monotonically") {
  const ToyGaussianProblem p{1.0, 1.0, 1.0};
  CHECK(grid_search_K(p, 100'000) == doctest::Approx(analytic_K(p)).epsilon(1e-4));
  CHECK(grid_search_K({0.1, 1.0, 1.0}, 2000) == 0.0);

  // nested grids (n, 2n-1, 4n-3, ...) never increase the minimum
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ToyGaussianProblem q{rng.uniform(0, 3), rng.uniform(0, 2), rng.uniform(0.5, 2)};
    int res = 1001;
    double prev = grid_search_K(q, res);
    for (int level = 0; level < 4; ++level) {
      res = 2 * res - 1;
      const double cur = grid_search_K(q, res);
      CHECK(cur <= prev + 1e-15);
      prev = cur;
    }
    // KL-modulus bound on the grid gap
    const double lo = 0.5 * q.c0 - 5.0 * q.sigma;
    const double hi = q.theta0 + 5.0 * q.sigma;
    const double step = (hi - lo) / static_cast<double>(res - 1);
    const double bound = step * step / (2.0 * q.sigma * q.sigma) +
                         step * std::abs(q.theta0) / (q.sigma * q.sigma);
    CHECK(grid_search_K(q, res) - analytic_K(q) <= bound + 1e-12);
  }
}

TEST_CASE("toy primal-dual: canonical problem converges to the boundary") {
  const ToyGaussianProblem p{1.0, 1.0, 1.0};
  ToySolveConfig cfg;  // 2000 iterations, flat lr 1e-2
  const ToySolveResult r = solve_toy_with_primal_dual(p, cfg);
  CHECK(r.k_best == doctest::Approx(0.125).epsilon(0.04));
  CHECK(std::abs(r.k_best - 0.125) < 5e-3);
  CHECK(r.k_best >= analytic_K(p) - 1e-6);
  CHECK(r.history.size() == 2000);
}

TEST_CASE("toy primal-dual: already-confusing instance is solved at iteration 1") {
  const ToyGaussianProblem p{0.3, 1.0, 1.0};
  ToySolveConfig cfg;
  const ToySolveResult r = solve_toy_with_primal_dual(p, cfg);
  CHECK(r.history.front().feasible);
  CHECK(r.history.front().k_best == 0.0);
  CHECK(r.k_best == 0.0);
}

TEST_CASE("toy primal-dual: local search never beats the infimum (50 problems)") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const ToyGaussianProblem p{rng.uniform(0, 3), rng.uniform(0, 2), rng.uniform(0.5, 2)};
    ToySolveConfig cfg;
    cfg.lr_end = 2.5e-4;  // annealed steps resolve the boundary finely
    cfg.seed = static_cast<std::uint64_t>(trial);
    const ToySolveResult r = solve_toy_with_primal_dual(p, cfg);
    CHECK(r.k_best >= analytic_K(p) - 1e-6);
    CHECK(std::abs(r.k_best - analytic_K(p)) < 5e-3);
  }
}

TEST_CASE("toy primal-dual: dual variable stabilizes after convergence") {
  const ToyGaussianProblem p{1.0, 1.0, 1.0};
  ToySolveConfig cfg;
  cfg.iterations = 4000;
  cfg.lr_end = 5e-4;
  const ToySolveResult r = solve_toy_with_primal_dual(p, cfg);
  std::vector<double> tail;
  for (std::size_t i = r.history.size() - 100; i < r.history.size(); ++i)
    tail.push_back(r.history[i].lambda);
  CHECK(sample_stddev(tail) < 0.1 * std::abs(mean(tail)));
  // lambda never goes negative
  for (const HistoryRow& row : r.history) CHECK(row.lambda >= 0.0);
}

TEST_CASE("toy primal-dual: seeded jitter start still lands on the boundary value") {
  const ToyGaussianProblem p{1.0, 1.0, 1.0};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ToySolveConfig cfg;
    cfg.init_jitter = 0.1;
    cfg.lr_end = 2.5e-4;
    cfg.seed = seed;
    const ToySolveResult r = solve_toy_with_primal_dual(p, cfg);
    CHECK(std::abs(r.k_best - 0.125) < 5e-3);
    CHECK(std::abs(r.k_best - grid_search_K(p, 100'000)) < 1e-3);
  }
}

TEST_CASE("toy primal-dual: divergence guard") {
  ToySolveConfig cfg;
  cfg.lr_start = cfg.lr_end = 1e7;
  CHECK_THROWS_AS(solve_toy_with_primal_dual({1.0, 1.0, 0.01}, cfg), NumericError);
}
