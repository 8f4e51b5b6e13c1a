#pragma once

#include <span>
#include <string>
#include <vector>

#include "mcis/rng.hpp"
#include "mcis/tape.hpp"

namespace mcis {

// Induced by the (softplus(x) + 1e-8)^2 variance parameterization.
inline constexpr double kVarianceFloor = 1e-16;
inline constexpr double kHeadEps = 1e-8;

// Fully connected net, tanh on hidden layers, identity output.
// w[i] is (out, in); b[i] is (out, 1); adjacent layers must compose.
struct Mlp {
  std::vector<Mat> w;
  std::vector<Mat> b;

  int in_dim() const { return static_cast<int>(w.front().cols()); }
  int out_dim() const { return static_cast<int>(w.back().rows()); }
  std::size_t layer_count() const { return w.size(); }
};

// Glorot-uniform weights, zero biases; draw order is fixed (layer, row, col).
Mlp make_mlp(const std::vector<int>& dims, Rng& rng);
void validate_mlp(const Mlp& m);

Vec mlp_forward(const Mlp& m, const Vec& x);
Mat mlp_forward(const Mlp& m, const Mat& x);  // rows = batch

// Tape-side mirror of an Mlp: parameter nodes, trainable or frozen.
struct MlpNodes {
  std::vector<Value> w;
  std::vector<Value> b;
};
MlpNodes mlp_on_tape(Tape& tape, const Mlp& m, bool trainable);
Value mlp_forward(Tape& tape, const MlpNodes& m, Value x);

// Diagonal Gaussian; variance is strictly positive (>= kVarianceFloor).
struct DiagGaussian {
  Vec mean;
  Vec var;
};

// var_i = (softplus(raw_logvar_i) + 1e-8)^2
DiagGaussian gaussian_head(const Vec& raw_mean, const Vec& raw_logvar);

// Batched head over a (n, 2d) matrix laid out as [mean | raw_logvar].
struct GaussianMats {
  Mat mean;
  Mat var;
};
GaussianMats gaussian_head_split(const Mat& raw);

struct GaussianValues {
  Value mean;
  Value var;
};
GaussianValues gaussian_head_split(Tape& tape, Value raw);

Vec reparameterized_sample(const DiagGaussian& g, const Vec& noise);
Value reparameterized_sample(Tape& tape, const GaussianValues& g, const Mat& noise);

double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q);
double kl_to_standard_normal(const DiagGaussian& q);

// Per-row KL between two batched diagonal Gaussians -> (n, 1).
Value kl_diag_gaussian_rows(Tape& tape, const GaussianValues& p,
                            const GaussianValues& q);
Value kl_to_standard_normal_rows(Tape& tape, const GaussianValues& q);

// --- gradients -------------------------------------------------------------

double global_grad_norm(std::span<const Mat> grads);

// Scales all arrays by max_norm/norm when the global L2 norm exceeds
// max_norm; identity otherwise.
void clip_grad_norm(std::vector<Mat>& grads, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction over a fixed list of parameter arrays.
// The caller passes arrays in the same order every step.
class Adam {
 public:
  Adam(std::span<const Mat* const> params, AdamConfig cfg = {});
  void step(std::span<Mat* const> params, std::span<const Mat> grads, double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace mcis
