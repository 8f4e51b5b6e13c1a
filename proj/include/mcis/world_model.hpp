#pragma once

#include <functional>
#include <span>

#include "mcis/checkpoint.hpp"
#include "mcis/maze.hpp"
#include "mcis/nn.hpp"

namespace mcis {

// VAE world model: encoder 4 -> h -> h -> 2*d_z (Gaussian head), latent
// dynamics d_z+2 -> h -> h -> 2*d_z (Gaussian head), decoder d_z -> h -> h -> 4
// predicting state differences.
struct WorldModelParams {
  Mlp enc;
  Mlp dyn;
  Mlp dec;
  int d_z = 32;
};

WorldModelParams make_world_model(int d_z, int hidden, Rng& rng);
void validate_world_model(const WorldModelParams& wm);

enum class EncodeMode { kStochastic, kDeterministic };

// Batched posterior over latents for a batch of states (n,4).
GaussianMats encode_dist(const WorldModelParams& wm, const Mat& states);
// Deterministic encode: the posterior mean (frozen-encoder convention).
Mat encode_mean(const WorldModelParams& wm, const Mat& states);
// Single-state encode; stochastic mode draws d_z standard normals from rng.
std::pair<Vec, DiagGaussian> encode(const WorldModelParams& wm, const Vec4& s,
                                    EncodeMode mode, Rng* rng = nullptr);

// p(z' | z, a) through a given dynamics net (the reference psi or a
// perturbed psi-tilde of identical shape).
GaussianMats dynamics_dist(const Mlp& dyn, const Mat& z, const Mat& a);
DiagGaussian dynamics_step(const Mlp& dyn, const Vec& z, const Vec2& a);

Mat decode(const Mlp& dec, const Mat& z);
Vec4 decode_one(const Mlp& dec, const Vec& z);

struct TrainConfig {
  int epochs = 500;
  int batch_size = 256;
  double lr = 1e-3;
  // Optional linear decay to lr_end over the epochs; 0 keeps the flat rate.
  // Small models on small datasets keep bouncing at a flat 1e-3, which
  // wobbles the rollout value landscape between late checkpoints.
  double lr_end = 0.0;
  double kl_weight = 0.01;
  // Latent rollouts feed the dynamics its own outputs, so training must
  // cover that input distribution: each window chains chain_steps
  // transitions through the dynamics (decoding every step against its
  // delta), and the start code gets a small fixed jitter.
  int chain_steps = 3;
  double latent_jitter = 0.05;
  std::vector<int> checkpoint_epochs = {100, 200, 300, 400, 500};
  int latent_dim = 32;
  int hidden = 64;
  std::uint64_t seed = 1;
};
void validate_train_config(const TrainConfig& cfg, std::int64_t dataset_size);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  std::vector<int> checkpoint_epochs;
  std::vector<WorldModelParams> checkpoints;
  std::vector<EpochStats> log;
};

// A batch of windows of chain_steps consecutive transitions.
struct TrainBatch {
  Mat s0;                  // (B,4) window start states
  std::vector<Mat> a;      // chain_steps x (B,2)
  std::vector<Mat> delta;  // chain_steps x (B,4)
  int steps() const { return static_cast<int>(a.size()); }
};

// Window starts whose chain_steps transitions are consecutive within one
// trajectory, detected by s[i+1] == s[i] + delta[i] (exact).
std::vector<std::int64_t> chain_window_starts(const Dataset& data, int chain_steps);
TrainBatch make_train_windows(const Dataset& data,
                              std::span<const std::int64_t> starts, int chain_steps);

// Noise for the jittered start code and each chained dynamics sample;
// fixing it makes the loss a deterministic function of the parameters.
struct TrainNoise {
  Mat enc;               // (B, d_z)
  std::vector<Mat> dyn;  // chain_steps x (B, d_z)
};
TrainNoise draw_train_noise(int n, int d_z, int chain_steps, Rng& rng);

// loss = mean ||dec(z') - delta||^2 + kl_weight * mean KL(q(z|s0) || N(0,I)),
// where the reconstruction averages over all chained steps of each window
// and z' advances by reparameterized dynamics samples.
double train_loss(const WorldModelParams& wm, const TrainBatch& batch,
                  double kl_weight, double latent_jitter, const TrainNoise& noise);

struct LossParts {
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// Same loss with gradients for every parameter array, ordered as
// world_model_param_views() lists them.
LossParts train_loss_backward(const WorldModelParams& wm, const TrainBatch& batch,
                              double kl_weight, double latent_jitter,
                              const TrainNoise& noise, std::vector<Mat>& grads);

// Canonically named parameter views ("dec.b1" ... "enc.w3", sorted), shared
// by the optimizer and the checkpoint writer.
std::vector<std::pair<std::string, const Mat*>> world_model_param_views(
    const WorldModelParams& wm);
std::vector<std::pair<std::string, Mat*>> world_model_param_views(WorldModelParams& wm);

// Adam on all of (enc, dyn, dec); shuffled minibatches without replacement;
// checkpoints captured at the configured epochs. Aborts with a NumericError
// naming epoch and batch when the loss stops being finite.
TrainResult train_world_model(const Dataset& data, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

Checkpoint world_model_to_checkpoint(const WorldModelParams& wm);
WorldModelParams world_model_from_checkpoint(const Checkpoint& ck);

// Canonical name list for the dynamics net alone (snapshot files).
Checkpoint dynamics_to_checkpoint(const Mlp& dyn, int d_z, std::uint64_t iteration);
Mlp dynamics_from_checkpoint(const Checkpoint& ck);

}  // namespace mcis
