#include <doctest.h>

#include <cmath>

#include "mcis/oracle.hpp"
#include "mcis/search.hpp"
#include "mcis/stats.hpp"
#include "test_util.hpp"

using namespace mcis;

namespace {

// d_z = 1 model with hand-set heads: reference dynamics N(0,1), decoder zero.
WorldModelParams unit_variance_toy(double mean_shift = 0.0) {
  WorldModelParams wm;
  wm.d_z = 1;
  const double raw_unit_var = std::log(std::exp(1.0 - kHeadEps) - 1.0);
  auto zero_mlp = [](int in, int h, int out) {
    Mlp m;
    m.w = {Mat::Zero(h, in), Mat::Zero(h, h), Mat::Zero(out, h)};
    m.b = {Mat::Zero(h, 1), Mat::Zero(h, 1), Mat::Zero(out, 1)};
    return m;
  };
  wm.enc = zero_mlp(4, 4, 2);
  wm.enc.b[2](1, 0) = raw_unit_var;
  wm.dyn = zero_mlp(3, 4, 2);
  wm.dyn.b[2](0, 0) = mean_shift;
  wm.dyn.b[2](1, 0) = raw_unit_var;
  wm.dec = zero_mlp(1, 4, 4);
  return wm;
}

// One small trained model shared by the search tests.
const WorldModelParams& trained_model() {
  static const WorldModelParams wm = [] {
    const MazeSpec maze = original_maze();
    const EnvConfig env;
    const Dataset data = collect_dataset(maze, env, 1001, 20, 200, 4);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.latent_dim = 8;
    cfg.hidden = 32;
    cfg.checkpoint_epochs = {150};
    cfg.seed = 7;
    return train_world_model(data, cfg).checkpoints.front();
  }();
  return wm;
}

}  // namespace

TEST_CASE("scalar helpers: lagrangian, dual step, constraint") {
  CHECK(lagrangian(0.7, -0.1, 3.0) == 0.7);
  CHECK(lagrangian(0.3, 0.2, 2.0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(lagrangian(0.4, 5.0, 0.0) == 0.4);
  CHECK_THROWS_AS(lagrangian(0.1, 0.1, -1.0), ConfigError);

  CHECK(dual_step(1.0, 0.5, 0.1) == doctest::Approx(1.05).epsilon(1e-12));
  CHECK(dual_step(0.02, -0.5, 0.1) == 0.0);
  CHECK(dual_step(0.7, 0.0, 0.1) == 0.7);

  const std::vector<double> star{10.0, 10.0};
  const std::vector<double> sub{7.0, 7.0};
  CHECK(constraint_value(star, sub) == doctest::Approx(3.0));
  CHECK(constraint_value(sub, sub) == 0.0);
  const std::vector<double> neg{-5.0};
  const std::vector<double> neg2{-2.0};
  CHECK(constraint_value(neg, neg2) == doctest::Approx(-3.0));
}

TEST_CASE("time_to_first_feasible") {
  std::vector<HistoryRow> h(5);
  for (int i = 0; i < 5; ++i) {
    h[static_cast<std::size_t>(i)].iter = i + 1;
    h[static_cast<std::size_t>(i)].feasible = false;
  }
  CHECK_FALSE(time_to_first_feasible(h).has_value());
  h[2].feasible = true;
  h[4].feasible = true;
  CHECK(time_to_first_feasible(h) == 3);
}

TEST_CASE("average_kl") {
  LatentTrajectory a, b;
  a.steps.resize(1);
  b.steps.resize(1);
  a.steps[0].kl = 0.2;
  b.steps[0].kl = 0.4;
  std::vector<LatentTrajectory> trajs{a, b};
  CHECK(average_kl(trajs) == doctest::Approx(0.3).epsilon(1e-12));
  std::vector<LatentTrajectory> swapped{b, a};
  CHECK(average_kl(swapped) == average_kl(trajs));
  a.steps[0].kl = 0.0;
  b.steps[0].kl = 0.0;
  std::vector<LatentTrajectory> zeros{a, b};
  CHECK(average_kl(zeros) == 0.0);
  CHECK_THROWS_AS(average_kl(std::vector<LatentTrajectory>{}), ConfigError);
}

TEST_CASE("rollout: identical dynamics give exactly zero KL, seeded repeatability") {
  const WorldModelParams& wm = trained_model();
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  (void)pi_sub;
  Rng reset_rng(4);
  const EnvState s0 = env_reset(maze, env, reset_rng);

  Rng r1(99), r2(99);
  const LatentTrajectory t1 = rollout(wm, wm.dyn, maze, pi_star, s0, 25, r1);
  const LatentTrajectory t2 = rollout(wm, wm.dyn, maze, pi_star, s0, 25, r2);
  CHECK(t1.steps.size() == 25);
  CHECK(t1.total_return == t2.total_return);
  for (std::size_t i = 0; i < t1.steps.size(); ++i) {
    CHECK(t1.steps[i].kl == 0.0);
    CHECK(t1.steps[i].z == t2.steps[i].z);
  }
}

TEST_CASE("rollout: unit-variance toy with shifted mean has pointwise KL 0.5") {
  const WorldModelParams ref = unit_variance_toy(0.0);
  const WorldModelParams shifted = unit_variance_toy(1.0);
  const MazeSpec maze = original_maze();
  auto [pi_star, pi_sub] = build_policy_pair(0.0);
  (void)pi_sub;
  EnvState s0;
  s0.pos = {1.5, 1.5};
  Rng rng(1);
  const LatentTrajectory t = rollout(ref, shifted.dyn, maze, pi_star, s0, 1, rng);
  CHECK(t.steps[0].kl == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("batched rollout matches per-row single rollouts") {
  const WorldModelParams& wm = trained_model();
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  (void)pi_sub;

  Mlp psi_tilde = wm.dyn;
  Rng jitter(3);
  for (auto& w : psi_tilde.w)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.02 * jitter.normal();

  const std::uint64_t seed = 4242;
  const int n = 3, horizon = 6;
  const RolloutNoise bundle = draw_rollout_noise(maze, env, n, horizon, wm.d_z, seed);

  std::vector<LatentTrajectory> singles;
  std::vector<double> returns;
  for (int r = 0; r < n; ++r) {
    Rng row_rng(derive_seed(seed, "row", static_cast<std::uint64_t>(r)));
    const EnvState s0 = EnvState::from_vec(bundle.s0.row(r).transpose());
    singles.push_back(rollout(wm, psi_tilde, maze, pi_star, s0, horizon, row_rng));
    returns.push_back(singles.back().total_return);
  }

  std::vector<Mat> grads;
  const IterationEval eval = search_lagrangian_backward(
      wm, psi_tilde, maze, pi_star, pi_star, /*lambda=*/0.0, bundle, bundle, grads);
  CHECK(eval.v_star == doctest::Approx(mean(returns)).epsilon(1e-9));
  CHECK(eval.kl_mean == doctest::Approx(average_kl(singles)).epsilon(1e-9));
}

TEST_CASE("lagrangian gradient matches finite differences under common noise") {
  Rng rng(31);
  WorldModelParams wm = make_world_model(2, 4, rng);
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);

  Mlp psi_tilde = wm.dyn;
  for (auto& w : psi_tilde.w)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.05 * rng.normal();

  const int n = 4, horizon = 2;
  RolloutNoise star_noise = draw_rollout_noise(maze, env, n, horizon, wm.d_z, 11);
  RolloutNoise sub_noise = draw_rollout_noise(maze, env, n, horizon, wm.d_z, 12);
  sub_noise.s0 = star_noise.s0;
  const double lambda = 1.3;

  // the hinge must not sit on its kink for the FD probe to be meaningful
  const double c0 =
      search_lagrangian(wm, psi_tilde, maze, pi_star, pi_sub, 0.0, star_noise, sub_noise);
  (void)c0;

  std::vector<Mat> grads;
  search_lagrangian_backward(wm, psi_tilde, maze, pi_star, pi_sub, lambda, star_noise,
                             sub_noise, grads);

  std::vector<double> flat = mcis::test::flatten(psi_tilde);
  auto f = [&](const std::vector<double>& x) {
    const Mlp m = mcis::test::unflatten(psi_tilde, x);
    return search_lagrangian(wm, m, maze, pi_star, pi_sub, lambda, star_noise, sub_noise);
  };
  const auto fd = mcis::test::central_differences(f, flat);
  const auto ad = mcis::test::flatten_grads(grads);
  CHECK(mcis::test::relative_error(ad, fd) < 1e-3);
}

TEST_CASE("search: bookkeeping invariants on a short run") {
  const WorldModelParams& wm = trained_model();
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);

  SearchConfig cfg;
  cfg.iterations = 40;
  cfg.samples = 8;
  cfg.horizon = 20;
  cfg.snapshot_interval = 10;
  cfg.seed = 5;
  const SearchResult result = search(wm, maze, env, pi_star, pi_sub, cfg);

  REQUIRE(result.history.size() == 40);
  // psi~ starts at psi: zero objective, infeasible start under the premise
  CHECK(result.history.front().kl_mean == 0.0);
  CHECK(result.history.front().c > 0.0);

  double running = std::numeric_limits<double>::infinity();
  double min_feasible = std::numeric_limits<double>::infinity();
  for (const HistoryRow& row : result.history) {
    CHECK(row.lambda >= 0.0);
    if (row.feasible) min_feasible = std::min(min_feasible, row.kl_mean);
    running = std::min(running, row.feasible ? row.kl_mean : running);
    CHECK(row.k_best == running);
  }
  CHECK(result.k_best == min_feasible);

  CHECK(result.snapshots.size() == 4);  // iterations 0, 10, 20, 30
  CHECK(result.snapshots.front().iteration == 0);
  // the iteration-0 snapshot is the unperturbed reference
  for (std::size_t l = 0; l < wm.dyn.w.size(); ++l)
    CHECK((result.snapshots.front().psi.w[l] - wm.dyn.w[l]).cwiseAbs().maxCoeff() == 0.0);

  if (result.best) {
    CHECK(result.certification.evaluated);
    CHECK(std::isfinite(result.k_best));
  }
}

TEST_CASE("search: zero iterations yield an infinite K and no history") {
  const WorldModelParams ref = unit_variance_toy(0.0);
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  SearchConfig cfg;
  cfg.iterations = 0;
  const SearchResult result = search(ref, maze, env, pi_star, pi_sub, cfg);
  CHECK(std::isinf(result.k_best));
  CHECK(result.history.empty());
  CHECK(result.snapshots.empty());
}

TEST_CASE("search: already-confused reference is feasible at iteration 1") {
  const WorldModelParams& wm = trained_model();
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);

  SearchConfig cfg;
  cfg.iterations = 3;
  cfg.samples = 8;
  cfg.horizon = 20;
  cfg.seed = 6;
  // swapping the policies makes the reference already confused; the premise
  // check would reject it, which is exactly what cmd_search surfaces
  CHECK_THROWS_AS(search(wm, maze, env, pi_sub, pi_star, cfg), ConfigError);

  cfg.check_premise = false;
  const SearchResult result = search(wm, maze, env, pi_sub, pi_star, cfg);
  CHECK(result.history.front().feasible);
  CHECK(result.history.front().k_best == 0.0);  // KL(psi || psi) = 0
  CHECK(result.k_best <= result.history.front().kl_mean);
  CHECK(result.t_first_feasible == 1);
}

TEST_CASE("certify_snapshot accepts the reference on a feasible configuration") {
  const WorldModelParams& wm = trained_model();
  const MazeSpec maze = original_maze();
  const EnvConfig env;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  // evaluating with swapped roles: "feasible" by construction, KL = 0
  const CertificationReport report =
      certify_snapshot(wm, wm.dyn, maze, env, pi_sub, pi_star, 64, 20, 0.0, 77);
  CHECK(report.evaluated);
  CHECK(report.pass);
  CHECK(report.kl_reeval == 0.0);
  CHECK(report.c_mean < 0.0);
}
