#include "mcis/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace mcis {

double g_dyn_logvar_init = -1.0;  // probe hook
WorldModelParams make_world_model(int d_z, int hidden, Rng& rng) {
  if (d_z < 1 || hidden < 1) throw ConfigError("world model dims must be >= 1");
  WorldModelParams wm;
  wm.d_z = d_z;
  wm.enc = make_mlp({4, hidden, hidden, 2 * d_z}, rng);
  wm.dyn = make_mlp({d_z + 2, hidden, hidden, 2 * d_z}, rng);
  wm.dec = make_mlp({d_z, hidden, hidden, 4}, rng);
  // start both heads sharp (softplus(-2) ~ 0.13 std); wide initial
  // posteriors blur sub-cell position detail in the latent and the
  // reconstruction term then cannot recover the wall boundary
  wm.enc.b.back().bottomRows(d_z).setConstant(-2.0);
  wm.dyn.b.back().bottomRows(d_z).setConstant(g_dyn_logvar_init);
  return wm;
}

void validate_world_model(const WorldModelParams& wm) {
  validate_mlp(wm.enc);
  validate_mlp(wm.dyn);
  validate_mlp(wm.dec);
  if (wm.enc.in_dim() != 4 || wm.enc.out_dim() != 2 * wm.d_z)
    throw ConfigError("encoder shape inconsistent with d_z");
  if (wm.dyn.in_dim() != wm.d_z + 2 || wm.dyn.out_dim() != 2 * wm.d_z)
    throw ConfigError("dynamics shape inconsistent with d_z");
  if (wm.dec.in_dim() != wm.d_z || wm.dec.out_dim() != 4)
    throw ConfigError("decoder shape inconsistent with d_z");
}

namespace {

// Fixed affine conditioning of encoder inputs: positions centered on the
// 5x5 world, velocities scaled by the cap. Constants are compile-time (not
// data-dependent), so checkpoints stay self-contained.
constexpr double kPosCenter = 2.5;
constexpr double kPosScale = 1.0;
constexpr double kVelScale = 1.5;

Mat normalize_states(const Mat& states) {
  Mat out = states;
  out.col(0).array() = (out.col(0).array() - kPosCenter) / kPosScale;
  out.col(1).array() = (out.col(1).array() - kPosCenter) / kPosScale;
  out.col(2).array() /= kVelScale;
  out.col(3).array() /= kVelScale;
  return out;
}

}  // namespace

GaussianMats encode_dist(const WorldModelParams& wm, const Mat& states) {
  return gaussian_head_split(mlp_forward(wm.enc, normalize_states(states)));
}

Mat encode_mean(const WorldModelParams& wm, const Mat& states) {
  return encode_dist(wm, states).mean;
}

std::pair<Vec, DiagGaussian> encode(const WorldModelParams& wm, const Vec4& s,
                                    EncodeMode mode, Rng* rng) {
  const Vec4 sn{(s[0] - kPosCenter) / kPosScale, (s[1] - kPosCenter) / kPosScale,
                s[2] / kVelScale, s[3] / kVelScale};
  const Vec raw = mlp_forward(wm.enc, Vec(sn));
  DiagGaussian q = gaussian_head(raw.head(wm.d_z), raw.tail(wm.d_z));
  if (mode == EncodeMode::kDeterministic) return {q.mean, q};
  if (rng == nullptr) throw ConfigError("stochastic encode needs an rng");
  Vec noise(wm.d_z);
  for (int i = 0; i < wm.d_z; ++i) noise[i] = rng->normal();
  return {reparameterized_sample(q, noise), q};
}

GaussianMats dynamics_dist(const Mlp& dyn, const Mat& z, const Mat& a) {
  if (z.rows() != a.rows()) throw ConfigError("dynamics_dist: batch mismatch");
  Mat input(z.rows(), z.cols() + a.cols());
  input << z, a;
  return gaussian_head_split(mlp_forward(dyn, input));
}

DiagGaussian dynamics_step(const Mlp& dyn, const Vec& z, const Vec2& a) {
  Vec input(z.size() + 2);
  input << z, a;
  const Vec raw = mlp_forward(dyn, input);
  const auto d = raw.size() / 2;
  return gaussian_head(raw.head(d), raw.tail(d));
}

Mat decode(const Mlp& dec, const Mat& z) { return mlp_forward(dec, z); }

Vec4 decode_one(const Mlp& dec, const Vec& z) {
  return Vec4(mlp_forward(dec, z));
}

void validate_train_config(const TrainConfig& cfg, std::int64_t dataset_size) {
  if (dataset_size < 1) throw ConfigError("train: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("train: bad sizes");
  for (const int e : cfg.checkpoint_epochs)
    if (e < 1 || e > cfg.epochs)
      throw ConfigError("train: checkpoint epoch " + std::to_string(e) +
                        " outside [1, epochs]");
}

TrainNoise draw_train_noise(int n, int d_z, int chain_steps, Rng& rng) {
  TrainNoise noise;
  noise.enc.resize(n, d_z);
  for (Eigen::Index i = 0; i < noise.enc.size(); ++i) noise.enc.data()[i] = rng.normal();
  noise.dyn.assign(static_cast<std::size_t>(chain_steps), Mat(n, d_z));
  for (auto& m : noise.dyn)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return noise;
}

std::vector<std::int64_t> chain_window_starts(const Dataset& data, int chain_steps) {
  if (chain_steps < 1) throw ConfigError("chain_steps must be >= 1");
  std::vector<std::int64_t> starts;
  const std::int64_t n = data.size();
  for (std::int64_t i = 0; i + chain_steps <= n; ++i) {
    bool ok = true;
    for (int k = 0; k + 1 < chain_steps; ++k) {
      const std::int64_t r = i + k;
      if (((data.s.row(r) + data.delta.row(r)) - data.s.row(r + 1)).cwiseAbs().maxCoeff() != 0.0) {
        ok = false;
        break;
      }
    }
    if (ok) starts.push_back(i);
  }
  if (starts.empty()) throw ConfigError("dataset has no window of chain_steps consecutive transitions");
  return starts;
}

TrainBatch make_train_windows(const Dataset& data,
                              std::span<const std::int64_t> starts, int chain_steps) {
  TrainBatch batch;
  const auto b = static_cast<std::int64_t>(starts.size());
  batch.s0.resize(b, 4);
  batch.a.assign(static_cast<std::size_t>(chain_steps), Mat(b, 2));
  batch.delta.assign(static_cast<std::size_t>(chain_steps), Mat(b, 4));
  for (std::int64_t r = 0; r < b; ++r) {
    const std::int64_t i = starts[static_cast<std::size_t>(r)];
    batch.s0.row(r) = data.s.row(i);
    for (int k = 0; k < chain_steps; ++k) {
      batch.a[static_cast<std::size_t>(k)].row(r) = data.a.row(i + k);
      batch.delta[static_cast<std::size_t>(k)].row(r) = data.delta.row(i + k);
    }
  }
  return batch;
}

namespace {

struct LossGraph {
  Tape tape;
  Value loss, recon, kl;
  MlpNodes enc, dyn, dec;
};

void build_loss(LossGraph& g, const WorldModelParams& wm, const TrainBatch& batch,
                double kl_weight, double latent_jitter, const TrainNoise& noise,
                bool trainable) {
  Tape& tape = g.tape;
  g.enc = mlp_on_tape(tape, wm.enc, trainable);
  g.dyn = mlp_on_tape(tape, wm.dyn, trainable);
  g.dec = mlp_on_tape(tape, wm.dec, trainable);

  const Value s0 = tape.constant(normalize_states(batch.s0));
  const GaussianValues q = gaussian_head_split(tape, mlp_forward(tape, g.enc, s0));
  // The window starts from the posterior mean (matching the deterministic
  // frozen-encoder rollout convention; a learned-variance sample here blurs
  // the dynamics input below the wall-face resolution) plus a small fixed
  // jitter, then chains through the dynamics exactly as rollouts do. Each
  // chained step is reparameterized so the variance head receives signal.
  Value z = latent_jitter > 0.0
                ? tape.add(q.mean, tape.constant(latent_jitter * noise.enc))
                : q.mean;
  Value recon_sum;
  for (int k = 0; k < batch.steps(); ++k) {
    const Value a = tape.constant(batch.a[static_cast<std::size_t>(k)]);
    const GaussianValues p =
        gaussian_head_split(tape, mlp_forward(tape, g.dyn, tape.concat_cols(z, a)));
    z = reparameterized_sample(tape, p, noise.dyn[static_cast<std::size_t>(k)]);
    const Value delta_hat = mlp_forward(tape, g.dec, z);
    const Value err =
        tape.sub(delta_hat, tape.constant(batch.delta[static_cast<std::size_t>(k)]));
    const Value step_recon = tape.mean_all(tape.row_sum(tape.square(err)));
    recon_sum = k == 0 ? step_recon : tape.add(recon_sum, step_recon);
  }
  g.recon = tape.scale(recon_sum, 1.0 / batch.steps());
  g.kl = tape.mean_all(kl_to_standard_normal_rows(tape, q));
  g.loss = tape.add(g.recon, tape.scale(g.kl, kl_weight));
}

std::vector<Mat> collect_grads(const LossGraph& g, Tape& tape,
                               const WorldModelParams& wm) {
  // order must match world_model_param_views(): sorted tensor names
  std::vector<std::pair<std::string, Value>> named;
  auto add = [&](const char* prefix, const MlpNodes& nodes) {
    for (std::size_t i = 0; i < nodes.w.size(); ++i) {
      named.emplace_back(std::string(prefix) + ".w" + std::to_string(i + 1), nodes.w[i]);
      named.emplace_back(std::string(prefix) + ".b" + std::to_string(i + 1), nodes.b[i]);
    }
  };
  add("enc", g.enc);
  add("dyn", g.dyn);
  add("dec", g.dec);
  std::sort(named.begin(), named.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Mat> grads;
  grads.reserve(named.size());
  for (const auto& [name, v] : named) grads.push_back(tape.adjoint(v));
  (void)wm;
  return grads;
}

}  // namespace

double train_loss(const WorldModelParams& wm, const TrainBatch& batch,
                  double kl_weight, double latent_jitter, const TrainNoise& noise) {
  LossGraph g;
  build_loss(g, wm, batch, kl_weight, latent_jitter, noise, /*trainable=*/false);
  return g.tape.value(g.loss)(0, 0);
}

LossParts train_loss_backward(const WorldModelParams& wm, const TrainBatch& batch,
                              double kl_weight, double latent_jitter,
                              const TrainNoise& noise, std::vector<Mat>& grads) {
  LossGraph g;
  build_loss(g, wm, batch, kl_weight, latent_jitter, noise, /*trainable=*/true);
  g.tape.backward(g.loss);
  grads = collect_grads(g, g.tape, wm);
  return {g.tape.value(g.loss)(0, 0), g.tape.value(g.recon)(0, 0),
          g.tape.value(g.kl)(0, 0)};
}

std::vector<std::pair<std::string, const Mat*>> world_model_param_views(
    const WorldModelParams& wm) {
  std::vector<std::pair<std::string, const Mat*>> views;
  auto add = [&](const char* prefix, const Mlp& m) {
    for (std::size_t i = 0; i < m.w.size(); ++i) {
      views.emplace_back(std::string(prefix) + ".w" + std::to_string(i + 1), &m.w[i]);
      views.emplace_back(std::string(prefix) + ".b" + std::to_string(i + 1), &m.b[i]);
    }
  };
  add("enc", wm.enc);
  add("dyn", wm.dyn);
  add("dec", wm.dec);
  std::sort(views.begin(), views.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return views;
}

std::vector<std::pair<std::string, Mat*>> world_model_param_views(WorldModelParams& wm) {
  std::vector<std::pair<std::string, Mat*>> views;
  for (const auto& [name, p] : world_model_param_views(std::as_const(wm)))
    views.emplace_back(name, const_cast<Mat*>(p));
  return views;
}

TrainResult train_world_model(const Dataset& data, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  validate_train_config(cfg, data.size());
  Rng init_rng(derive_seed(cfg.seed, "wm-init"));
  WorldModelParams wm = make_world_model(cfg.latent_dim, cfg.hidden, init_rng);

  auto views = world_model_param_views(wm);
  std::vector<Mat*> params;
  std::vector<const Mat*> cparams;
  for (auto& [name, p] : views) {
    params.push_back(p);
    cparams.push_back(p);
  }
  Adam opt(cparams);

  const std::vector<std::int64_t> starts = chain_window_starts(data, cfg.chain_steps);
  std::vector<std::int64_t> order = starts;
  const auto n = static_cast<std::int64_t>(order.size());

  TrainResult result;
  Rng shuffle_rng(derive_seed(cfg.seed, "wm-shuffle"));
  Rng noise_rng(derive_seed(cfg.seed, "wm-noise"));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr =
        (cfg.lr_end > 0.0 && cfg.epochs > 1)
            ? cfg.lr + (cfg.lr_end - cfg.lr) * static_cast<double>(epoch - 1) /
                           static_cast<double>(cfg.epochs - 1)
            : cfg.lr;
    // Fisher-Yates with our own stream
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i)));
      std::swap(order[i], order[j]);
    }
    double sum_loss = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    int batches = 0;
    for (std::int64_t begin = 0; begin < n; begin += cfg.batch_size) {
      const auto size = std::min<std::int64_t>(cfg.batch_size, n - begin);
      const TrainBatch batch = make_train_windows(
          data, std::span<const std::int64_t>(order).subspan(
                    static_cast<std::size_t>(begin), static_cast<std::size_t>(size)),
          cfg.chain_steps);
      const TrainNoise noise = draw_train_noise(static_cast<int>(size), cfg.latent_dim,
                                                cfg.chain_steps, noise_rng);
      std::vector<Mat> grads;
      LossParts parts;
      try {
        parts = train_loss_backward(wm, batch, cfg.kl_weight, cfg.latent_jitter, noise, grads);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ": " + e.what());
      }
      if (!std::isfinite(parts.loss))
        throw NumericError("training loss non-finite at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      opt.step(params, grads, lr);
      sum_loss += parts.loss * static_cast<double>(size);
      sum_recon += parts.recon * static_cast<double>(size);
      sum_kl += parts.kl * static_cast<double>(size);
      ++batches;
    }
    EpochStats stats{epoch, sum_loss / static_cast<double>(n),
                     sum_recon / static_cast<double>(n), sum_kl / static_cast<double>(n)};
    result.log.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (std::find(cfg.checkpoint_epochs.begin(), cfg.checkpoint_epochs.end(), epoch) !=
        cfg.checkpoint_epochs.end()) {
      result.checkpoint_epochs.push_back(epoch);
      result.checkpoints.push_back(wm);
    }
  }
  return result;
}

Checkpoint world_model_to_checkpoint(const WorldModelParams& wm) {
  Checkpoint ck;
  ck.version = 1;
  ck.d_z = wm.d_z;
  for (const auto& [name, p] : world_model_param_views(wm)) {
    NamedTensor t;
    t.name = name;
    t.data = *p;
    t.rank = (p->cols() == 1 && name.find(".b") != std::string::npos) ? 1 : 2;
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

namespace {

Mlp mlp_from_tensors(const Checkpoint& ck, const std::string& prefix) {
  Mlp m;
  for (int layer = 1;; ++layer) {
    const std::string wname = prefix + ".w" + std::to_string(layer);
    const auto it = std::find_if(ck.tensors.begin(), ck.tensors.end(),
                                 [&](const NamedTensor& t) { return t.name == wname; });
    if (it == ck.tensors.end()) break;
    m.w.push_back(it->data);
    m.b.push_back(ck.find(prefix + ".b" + std::to_string(layer)).data);
  }
  if (m.w.empty()) throw IoError("checkpoint lacks tensors for " + prefix);
  validate_mlp(m);
  return m;
}

}  // namespace

WorldModelParams world_model_from_checkpoint(const Checkpoint& ck) {
  WorldModelParams wm;
  wm.d_z = ck.d_z;
  wm.enc = mlp_from_tensors(ck, "enc");
  wm.dyn = mlp_from_tensors(ck, "dyn");
  wm.dec = mlp_from_tensors(ck, "dec");
  validate_world_model(wm);
  return wm;
}

Checkpoint dynamics_to_checkpoint(const Mlp& dyn, int d_z, std::uint64_t iteration) {
  Checkpoint ck;
  ck.version = 2;
  ck.d_z = d_z;
  ck.iteration = iteration;
  for (std::size_t i = 0; i < dyn.w.size(); ++i) {
    ck.tensors.push_back({"dyn.w" + std::to_string(i + 1), dyn.w[i], 2});
    ck.tensors.push_back({"dyn.b" + std::to_string(i + 1), dyn.b[i], 1});
  }
  return ck;
}

Mlp dynamics_from_checkpoint(const Checkpoint& ck) {
  return mlp_from_tensors(ck, "dyn");
}

}  // namespace mcis
