#include "mcis/search.hpp"

#include <algorithm>
#include <cmath>

#include "mcis/stats.hpp"

namespace mcis {

void validate_search_config(const SearchConfig& cfg) {
  if (cfg.iterations < 0 || cfg.samples < 1 || cfg.horizon < 1)
    throw ConfigError("search: iterations/samples/horizon out of range");
  if (cfg.lr_start <= 0.0 || cfg.lr_end <= 0.0 || cfg.lr_end > cfg.lr_start)
    throw ConfigError("search: need 0 < lr_end <= lr_start");
  if (cfg.grad_clip <= 0.0 || cfg.lambda_init < 0.0 || cfg.dual_step <= 0.0)
    throw ConfigError("search: grad_clip/lambda/dual_step out of range");
  if (cfg.snapshot_interval < 1) throw ConfigError("search: snapshot_interval < 1");
  if (cfg.premise_factor < 1) throw ConfigError("search: premise_factor < 1");
}

DualBookkeeping::DualBookkeeping(double lambda_init, double dual_step)
    : lambda_(lambda_init), eta_(dual_step) {
  if (lambda_init < 0.0 || dual_step <= 0.0)
    throw ConfigError("dual bookkeeping: lambda_init >= 0 and dual_step > 0 required");
}

HistoryRow DualBookkeeping::record(int iter, double kl_mean, double v_star,
                                   double v_sub, double lr) {
  HistoryRow row;
  row.iter = iter;
  row.kl_mean = kl_mean;
  row.v_star = v_star;
  row.v_sub = v_sub;
  row.c = v_star - v_sub;
  row.lambda = lambda_;
  row.feasible = row.c <= 0.0;
  row.lr = lr;
  improved_last_ = row.feasible && kl_mean < k_best_;
  if (improved_last_) k_best_ = kl_mean;
  row.k_best = k_best_;
  lambda_ = dual_step(lambda_, row.c, eta_);
  history_.push_back(row);
  return row;
}

double lagrangian(double kl_mean, double c, double lambda) {
  if (lambda < 0.0) throw ConfigError("lagrangian: lambda must be >= 0");
  return kl_mean + lambda * std::max(0.0, c);
}

double dual_step(double lambda, double c, double eta) {
  return std::max(0.0, lambda + eta * c);
}

double constraint_value(std::span<const double> star_returns,
                        std::span<const double> sub_returns) {
  if (star_returns.size() != sub_returns.size() || star_returns.empty())
    throw ConfigError("constraint_value: equal nonempty sample counts required");
  return mean(star_returns) - mean(sub_returns);
}

std::optional<int> time_to_first_feasible(std::span<const HistoryRow> history) {
  for (const HistoryRow& row : history)
    if (row.feasible) return row.iter;
  return std::nullopt;
}

double scheduled_lr(const SearchConfig& cfg, int iter) {
  if (cfg.iterations <= 1) return cfg.lr_start;
  const double frac = static_cast<double>(iter - 1) / static_cast<double>(cfg.iterations - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

LatentTrajectory rollout(const WorldModelParams& ref, const Mlp& psi_tilde,
                         const MazeSpec& maze, const Policy& policy,
                         const EnvState& s0, int horizon, Rng& rng) {
  if (psi_tilde.in_dim() != ref.dyn.in_dim() || psi_tilde.out_dim() != ref.dyn.out_dim())
    throw ConfigError("rollout: psi~ not shape-congruent with the reference dynamics");
  LatentTrajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(horizon));

  Vec z = encode(ref, s0.as_vec(), EncodeMode::kDeterministic).first;
  EnvState s_hat = s0;
  WaypointCursor cursor;
  for (int t = 0; t < horizon; ++t) {
    const Vec2 a = policy_action(policy, cursor, s_hat, rng);
    const DiagGaussian p_ref = dynamics_step(ref.dyn, z, a);
    const DiagGaussian p_tilde = dynamics_step(psi_tilde, z, a);
    const double kl = kl_diag_gaussian(p_ref, p_tilde);

    Vec noise(ref.d_z);
    for (int i = 0; i < ref.d_z; ++i) noise[i] = rng.normal();
    const Vec z_next = reparameterized_sample(p_tilde, noise);
    if (!z_next.allFinite())
      throw NumericError("rollout: non-finite latent at step " + std::to_string(t));
    const Vec4 delta = decode_one(ref.dec, z_next);
    const Vec4 s_next = s_hat.as_vec() + delta;

    LatentStep step;
    step.z = z_next;
    step.s_hat = s_next;
    step.a = a;
    step.kl = kl;
    step.r = manhattan_reward(maze, {s_next[0], s_next[1]});
    traj.total_return += step.r;
    traj.steps.push_back(std::move(step));

    z = z_next;
    s_hat = EnvState::from_vec(s_next);
  }
  return traj;
}

double average_kl(std::span<const LatentTrajectory> trajectories) {
  if (trajectories.empty()) throw ConfigError("average_kl: no trajectories");
  const std::size_t horizon = trajectories.front().steps.size();
  double sum = 0.0;
  for (const LatentTrajectory& traj : trajectories) {
    if (traj.steps.size() != horizon)
      throw ConfigError("average_kl: trajectories of unequal length");
    for (const LatentStep& step : traj.steps) sum += step.kl;
  }
  return sum / (static_cast<double>(trajectories.size()) * static_cast<double>(horizon));
}

RolloutNoise draw_rollout_noise(const MazeSpec& maze, const EnvConfig& env, int n,
                                int horizon, int d_z, std::uint64_t seed) {
  RolloutNoise noise;
  noise.s0.resize(n, 4);
  Rng s0_rng(derive_seed(seed, "s0"));
  for (int r = 0; r < n; ++r)
    noise.s0.row(r) = env_reset(maze, env, s0_rng).as_vec().transpose();

  noise.policy_noise.assign(static_cast<std::size_t>(horizon), Mat(n, 2));
  noise.latent_noise.assign(static_cast<std::size_t>(horizon), Mat(n, d_z));
  for (int r = 0; r < n; ++r) {
    Rng row_rng(derive_seed(seed, "row", static_cast<std::uint64_t>(r)));
    for (int t = 0; t < horizon; ++t) {
      auto& pol = noise.policy_noise[static_cast<std::size_t>(t)];
      pol(r, 0) = row_rng.normal();
      pol(r, 1) = row_rng.normal();
      auto& lat = noise.latent_noise[static_cast<std::size_t>(t)];
      for (int i = 0; i < d_z; ++i) lat(r, i) = row_rng.normal();
    }
  }
  return noise;
}

namespace {

struct BatchedRollout {
  Value kl_total;  // (1,1): sum of pointwise KL over all (row, step)
  Value returns;   // (n,1)
};

// One differentiable rollout of a waypoint policy for the whole batch. The
// waypoint progression reads decoded positions as plain values (a discrete
// choice); the continuous action law stays on the tape.
BatchedRollout build_batched_rollout(Tape& tape, const WorldModelParams& ref,
                                     const MlpNodes& psi_ref, const MlpNodes& psi_tilde,
                                     const MlpNodes& dec, const MazeSpec& maze,
                                     const Policy& policy, const RolloutNoise& noise,
                                     int horizon) {
  if (policy.kind != Policy::Kind::kWaypoint)
    throw ConfigError("batched rollout supports waypoint policies only");
  const auto n = noise.s0.rows();
  const int d_z = ref.d_z;

  Value s_hat = tape.constant(noise.s0);
  Value z = tape.constant(encode_mean(ref, noise.s0));
  std::vector<WaypointCursor> cursors(static_cast<std::size_t>(n));

  Mat goal(n, 2);
  goal.rowwise() = maze.goal_center().transpose();
  const Value goal_const = tape.constant(goal);

  Value kl_total = tape.constant(Mat::Zero(1, 1));
  Value returns = tape.constant(Mat::Zero(n, 1));

  for (int t = 0; t < horizon; ++t) {
    const Mat& sv = tape.value(s_hat);
    Mat targets(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
      cursors[static_cast<std::size_t>(r)].advance(policy.path, policy.ctrl,
                                                   {sv(r, 0), sv(r, 1)});
      const Cell w = policy.path.cells[cursors[static_cast<std::size_t>(r)].index()];
      targets.row(r) = Vec2{w.x + 0.5, w.y + 0.5}.transpose();
    }
    const Value pos = tape.slice_cols(s_hat, 0, 2);
    const Value vel = tape.slice_cols(s_hat, 2, 2);
    const Value pull = tape.scale(tape.sub(tape.constant(targets), pos), policy.ctrl.kp);
    const Value damp = tape.scale(vel, policy.ctrl.kd);
    const Value base = tape.clamp(tape.sub(pull, damp), -1.0, 1.0);
    const Value eps = tape.constant(
        policy.sigma * noise.policy_noise[static_cast<std::size_t>(t)]);
    const Value action = tape.clamp(tape.add(base, eps), -1.0, 1.0);

    const Value dyn_input = tape.concat_cols(z, action);
    const GaussianValues p_ref =
        gaussian_head_split(tape, mlp_forward(tape, psi_ref, dyn_input));
    const GaussianValues p_tilde =
        gaussian_head_split(tape, mlp_forward(tape, psi_tilde, dyn_input));
    kl_total = tape.add(kl_total,
                        tape.sum(kl_diag_gaussian_rows(tape, p_ref, p_tilde)));

    z = reparameterized_sample(tape, p_tilde,
                               noise.latent_noise[static_cast<std::size_t>(t)]);
    s_hat = tape.add(s_hat, mlp_forward(tape, dec, z));

    const Value dist = tape.row_sum(
        tape.abs(tape.sub(tape.slice_cols(s_hat, 0, 2), goal_const)));
    returns = tape.sub(returns, dist);
  }
  (void)d_z;
  return {kl_total, returns};
}

struct LagrangianGraph {
  Tape tape;
  MlpNodes psi_tilde_nodes;
  Value kl_mean, v_star, v_sub, loss;
};

void build_lagrangian(LagrangianGraph& g, const WorldModelParams& ref,
                      const Mlp& psi_tilde, const MazeSpec& maze,
                      const Policy& pi_star, const Policy& pi_sub, double lambda,
                      const RolloutNoise& star_noise, const RolloutNoise& sub_noise,
                      bool trainable) {
  if (lambda < 0.0) throw ConfigError("lagrangian: lambda must be >= 0");
  Tape& tape = g.tape;
  const MlpNodes psi_ref = mlp_on_tape(tape, ref.dyn, false);
  g.psi_tilde_nodes = mlp_on_tape(tape, psi_tilde, trainable);
  const MlpNodes dec = mlp_on_tape(tape, ref.dec, false);

  const int horizon = static_cast<int>(star_noise.policy_noise.size());
  const BatchedRollout star = build_batched_rollout(
      tape, ref, psi_ref, g.psi_tilde_nodes, dec, maze, pi_star, star_noise, horizon);
  const BatchedRollout sub = build_batched_rollout(
      tape, ref, psi_ref, g.psi_tilde_nodes, dec, maze, pi_sub, sub_noise, horizon);

  const double nt = static_cast<double>(star_noise.s0.rows()) * horizon;
  // objective: trajectory-averaged KL along pi*; the pi_sub rollout enters
  // through the value constraint only
  g.kl_mean = tape.scale(star.kl_total, 1.0 / nt);
  g.v_star = tape.mean_all(star.returns);
  g.v_sub = tape.mean_all(sub.returns);
  const Value hinge = tape.relu(tape.sub(g.v_star, g.v_sub));
  g.loss = tape.add(g.kl_mean, tape.scale(hinge, lambda));
}

std::vector<Mat> dyn_grads(const LagrangianGraph& g) {
  std::vector<Mat> grads;
  for (std::size_t i = 0; i < g.psi_tilde_nodes.w.size(); ++i) {
    grads.push_back(g.tape.adjoint(g.psi_tilde_nodes.w[i]));
    grads.push_back(g.tape.adjoint(g.psi_tilde_nodes.b[i]));
  }
  return grads;
}

}  // namespace

double search_lagrangian(const WorldModelParams& ref, const Mlp& psi_tilde,
                         const MazeSpec& maze, const Policy& pi_star,
                         const Policy& pi_sub, double lambda,
                         const RolloutNoise& star_noise, const RolloutNoise& sub_noise) {
  LagrangianGraph g;
  build_lagrangian(g, ref, psi_tilde, maze, pi_star, pi_sub, lambda, star_noise,
                   sub_noise, /*trainable=*/false);
  return g.tape.value(g.loss)(0, 0);
}

IterationEval search_lagrangian_backward(const WorldModelParams& ref,
                                         const Mlp& psi_tilde, const MazeSpec& maze,
                                         const Policy& pi_star, const Policy& pi_sub,
                                         double lambda, const RolloutNoise& star_noise,
                                         const RolloutNoise& sub_noise,
                                         std::vector<Mat>& grads) {
  LagrangianGraph g;
  build_lagrangian(g, ref, psi_tilde, maze, pi_star, pi_sub, lambda, star_noise,
                   sub_noise, /*trainable=*/true);
  g.tape.backward(g.loss);
  grads = dyn_grads(g);
  return {g.tape.value(g.kl_mean)(0, 0), g.tape.value(g.v_star)(0, 0),
          g.tape.value(g.v_sub)(0, 0), g.tape.value(g.loss)(0, 0)};
}

CertificationReport certify_snapshot(const WorldModelParams& ref, const Mlp& psi_tilde,
                                     const MazeSpec& maze, const EnvConfig& env,
                                     const Policy& pi_star, const Policy& pi_sub,
                                     int rollouts, int horizon, double kl_recorded,
                                     std::uint64_t seed) {
  std::vector<LatentTrajectory> star_trajs;
  std::vector<double> star_returns, sub_returns;
  star_trajs.reserve(static_cast<std::size_t>(rollouts));
  Rng s0_rng(derive_seed(seed, "cert-s0"));
  for (int r = 0; r < rollouts; ++r) {
    const EnvState s0 = env_reset(maze, env, s0_rng);
    Rng star_rng(derive_seed(seed, "cert-star", static_cast<std::uint64_t>(r)));
    Rng sub_rng(derive_seed(seed, "cert-sub", static_cast<std::uint64_t>(r)));
    LatentTrajectory ts = rollout(ref, psi_tilde, maze, pi_star, s0, horizon, star_rng);
    LatentTrajectory tb = rollout(ref, psi_tilde, maze, pi_sub, s0, horizon, sub_rng);
    star_returns.push_back(ts.total_return);
    sub_returns.push_back(tb.total_return);
    star_trajs.push_back(std::move(ts));
  }
  CertificationReport report;
  report.evaluated = true;
  report.kl_recorded = kl_recorded;
  report.kl_reeval = average_kl(star_trajs);
  report.c_mean = constraint_value(star_returns, sub_returns);
  Rng boot(derive_seed(seed, "cert-boot"));
  report.c_q05 = bootstrap_mean_diff_quantile(star_returns, sub_returns, 2000, 0.05, boot);
  Rng boot95(derive_seed(seed, "cert-boot"));
  report.c_q95 = bootstrap_mean_diff_quantile(star_returns, sub_returns, 2000, 0.95, boot95);
  // feasibility is re-certified unless the data rejects c <= 0 at the
  // one-sided 95% level; the KL must reproduce within 20%
  const bool c_ok = report.c_q05 <= 0.0;
  const bool kl_ok =
      std::abs(report.kl_reeval - kl_recorded) <= 0.2 * kl_recorded + 1e-9;
  report.pass = c_ok && kl_ok;
  return report;
}

SearchResult search(const WorldModelParams& ref, const MazeSpec& maze,
                    const EnvConfig& env, const Policy& pi_star, const Policy& pi_sub,
                    const SearchConfig& cfg,
                    const std::function<void(const HistoryRow&)>& on_row) {
  validate_search_config(cfg);
  validate_world_model(ref);

  SearchResult result;
  result.psi_final = ref.dyn;
  if (cfg.iterations == 0) return result;

  if (cfg.check_premise) {
    const int n = cfg.premise_factor * cfg.samples;
    std::vector<double> star_returns, sub_returns;
    Rng s0_rng(derive_seed(cfg.seed, "premise-s0"));
    for (int r = 0; r < n; ++r) {
      const EnvState s0 = env_reset(maze, env, s0_rng);
      Rng star_rng(derive_seed(cfg.seed, "premise-star", static_cast<std::uint64_t>(r)));
      Rng sub_rng(derive_seed(cfg.seed, "premise-sub", static_cast<std::uint64_t>(r)));
      star_returns.push_back(
          rollout(ref, ref.dyn, maze, pi_star, s0, cfg.horizon, star_rng).total_return);
      sub_returns.push_back(
          rollout(ref, ref.dyn, maze, pi_sub, s0, cfg.horizon, sub_rng).total_return);
    }
    if (constraint_value(star_returns, sub_returns) <= 0.0)
      throw ConfigError("policies not ordered under reference model");
  }

  Mlp psi_tilde = ref.dyn;
  std::vector<Mat*> params;
  std::vector<const Mat*> cparams;
  for (std::size_t i = 0; i < psi_tilde.w.size(); ++i) {
    params.push_back(&psi_tilde.w[i]);
    params.push_back(&psi_tilde.b[i]);
  }
  for (Mat* p : params) cparams.push_back(p);
  Adam opt(cparams);

  DualBookkeeping dual(cfg.lambda_init, cfg.dual_step);
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    if ((iter - 1) % cfg.snapshot_interval == 0)
      result.snapshots.push_back({static_cast<std::uint64_t>(iter - 1), psi_tilde});

    const std::uint64_t iter_seed =
        derive_seed(cfg.seed, "search-iter", static_cast<std::uint64_t>(iter));
    RolloutNoise star_noise = draw_rollout_noise(maze, env, cfg.samples, cfg.horizon,
                                                 ref.d_z, derive_seed(iter_seed, "star"));
    RolloutNoise sub_noise = draw_rollout_noise(maze, env, cfg.samples, cfg.horizon,
                                                ref.d_z, derive_seed(iter_seed, "sub"));
    sub_noise.s0 = star_noise.s0;  // both policies start from the same states

    const double lr = scheduled_lr(cfg, iter);
    std::vector<Mat> grads;
    IterationEval eval;
    try {
      eval = search_lagrangian_backward(ref, psi_tilde, maze, pi_star, pi_sub,
                                        dual.lambda(), star_noise, sub_noise, grads);
    } catch (const NumericError& e) {
      result.history = dual.history();
      throw NumericError("search aborted at iteration " + std::to_string(iter) + ": " +
                         e.what());
    }

    const HistoryRow row = dual.record(iter, eval.kl_mean, eval.v_star, eval.v_sub, lr);
    if (on_row) on_row(row);
    if (dual.improved_last())
      result.best = DynSnapshot{static_cast<std::uint64_t>(iter), psi_tilde};

    clip_grad_norm(grads, cfg.grad_clip);
    opt.step(params, grads, lr);
  }

  result.history = dual.history();
  result.k_best = dual.k_best();
  result.lambda_final = dual.lambda();
  result.t_first_feasible = time_to_first_feasible(result.history);
  result.psi_final = psi_tilde;
  if (result.best) {
    result.certification = certify_snapshot(
        ref, result.best->psi, maze, env, pi_star, pi_sub,
        cfg.premise_factor * cfg.samples, cfg.horizon, result.k_best,
        derive_seed(cfg.seed, "certify"));
  }
  return result;
}

}  // namespace mcis
