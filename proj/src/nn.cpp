#include "mcis/nn.hpp"

#include <cmath>
#include <string>

namespace mcis {

Mlp make_mlp(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least two dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
    m.w.push_back(std::move(w));
    m.b.push_back(Mat::Zero(fan_out, 1));
  }
  return m;
}

void validate_mlp(const Mlp& m) {
  if (m.w.empty() || m.w.size() != m.b.size())
    throw ConfigError("mlp: empty or mismatched layer lists");
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    if (m.b[i].rows() != m.w[i].rows() || m.b[i].cols() != 1)
      throw ConfigError("mlp: bias shape mismatch at layer " + std::to_string(i));
    if (i + 1 < m.w.size() && m.w[i + 1].cols() != m.w[i].rows())
      throw ConfigError("mlp: layers " + std::to_string(i) + " and " +
                        std::to_string(i + 1) + " do not compose");
    if (!m.w[i].allFinite() || !m.b[i].allFinite())
      throw NumericError("mlp: non-finite parameter at layer " + std::to_string(i));
  }
}

Mat mlp_forward(const Mlp& m, const Mat& x) {
  if (x.cols() != m.in_dim())
    throw ConfigError("mlp_forward: input width " + std::to_string(x.cols()) +
                      " != " + std::to_string(m.in_dim()));
  Mat h = x;
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    Mat z = h * m.w[i].transpose();
    z.rowwise() += m.b[i].col(0).transpose();
    if (i + 1 < m.w.size())
      h = z.array().tanh();
    else
      h = std::move(z);
  }
  return h;
}

Vec mlp_forward(const Mlp& m, const Vec& x) {
  Mat row = mlp_forward(m, Mat(x.transpose()));
  return row.row(0).transpose();
}

MlpNodes mlp_on_tape(Tape& tape, const Mlp& m, bool trainable) {
  MlpNodes nodes;
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    nodes.w.push_back(trainable ? tape.leaf(m.w[i]) : tape.constant(m.w[i]));
    nodes.b.push_back(trainable ? tape.leaf(m.b[i]) : tape.constant(m.b[i]));
  }
  return nodes;
}

Value mlp_forward(Tape& tape, const MlpNodes& m, Value x) {
  Value h = x;
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    h = tape.linear(h, m.w[i], m.b[i]);
    if (i + 1 < m.w.size()) h = tape.tanh(h);
  }
  return h;
}

DiagGaussian gaussian_head(const Vec& raw_mean, const Vec& raw_logvar) {
  if (raw_mean.size() != raw_logvar.size())
    throw ConfigError("gaussian_head: mean/logvar length mismatch");
  if (!raw_mean.allFinite() || !raw_logvar.allFinite())
    throw NumericError("gaussian_head: non-finite input");
  DiagGaussian g;
  g.mean = raw_mean;
  g.var = raw_logvar.unaryExpr([](double x) {
    const double s = stable_softplus(x) + kHeadEps;
    return s * s;
  });
  return g;
}

GaussianMats gaussian_head_split(const Mat& raw) {
  if (raw.cols() % 2 != 0)
    throw ConfigError("gaussian_head_split: odd head width");
  const int d = static_cast<int>(raw.cols()) / 2;
  GaussianMats g;
  g.mean = raw.leftCols(d);
  g.var = raw.rightCols(d).unaryExpr([](double x) {
    const double s = stable_softplus(x) + kHeadEps;
    return s * s;
  });
  return g;
}

GaussianValues gaussian_head_split(Tape& tape, Value raw) {
  const int width = static_cast<int>(tape.value(raw).cols());
  if (width % 2 != 0) throw ConfigError("gaussian_head_split: odd head width");
  const int d = width / 2;
  GaussianValues g;
  g.mean = tape.slice_cols(raw, 0, d);
  Value sp = tape.add_const(tape.softplus(tape.slice_cols(raw, d, d)), kHeadEps);
  g.var = tape.square(sp);
  return g;
}

Vec reparameterized_sample(const DiagGaussian& g, const Vec& noise) {
  if (noise.size() != g.mean.size())
    throw ConfigError("reparameterized_sample: noise length mismatch");
  return g.mean + g.var.cwiseSqrt().cwiseProduct(noise);
}

Value reparameterized_sample(Tape& tape, const GaussianValues& g, const Mat& noise) {
  Value sd = tape.sqrt(g.var);
  return tape.add(g.mean, tape.mul(sd, tape.constant(noise)));
}

double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.mean.size() != q.mean.size() || p.var.size() != q.var.size() ||
      p.mean.size() != p.var.size())
    throw ConfigError("kl_diag_gaussian: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
    const double dm = p.mean[i] - q.mean[i];
    kl += std::log(q.var[i] / p.var[i]) + (p.var[i] + dm * dm) / q.var[i] - 1.0;
  }
  return 0.5 * kl;
}

double kl_to_standard_normal(const DiagGaussian& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.mean.size(); ++i)
    kl += -std::log(q.var[i]) + q.var[i] + q.mean[i] * q.mean[i] - 1.0;
  return 0.5 * kl;
}

Value kl_diag_gaussian_rows(Tape& tape, const GaussianValues& p,
                            const GaussianValues& q) {
  Value log_ratio = tape.sub(tape.log(q.var), tape.log(p.var));
  Value dm2 = tape.square(tape.sub(p.mean, q.mean));
  Value frac = tape.div(tape.add(p.var, dm2), q.var);
  Value inner = tape.add_const(tape.add(log_ratio, frac), -1.0);
  return tape.scale(tape.row_sum(inner), 0.5);
}

Value kl_to_standard_normal_rows(Tape& tape, const GaussianValues& q) {
  Value inner = tape.add_const(
      tape.add(tape.sub(q.var, tape.log(q.var)), tape.square(q.mean)), -1.0);
  return tape.scale(tape.row_sum(inner), 0.5);
}

double global_grad_norm(std::span<const Mat> grads) {
  double ss = 0.0;
  for (const Mat& g : grads) ss += g.squaredNorm();
  return std::sqrt(ss);
}

void clip_grad_norm(std::vector<Mat>& grads, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_grad_norm: max_norm must be > 0");
  const double norm = global_grad_norm(grads);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Mat& g : grads) g *= s;
}

Adam::Adam(std::span<const Mat* const> params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Mat* p : params) {
    m_.push_back(Mat::Zero(p->rows(), p->cols()));
    v_.push_back(Mat::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(std::span<Mat* const> params, std::span<const Mat> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ConfigError("adam: parameter/gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols())
      throw ConfigError("adam: shape mismatch at array " + std::to_string(i));
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
    const Mat m_hat = m_[i] / c1;
    const Mat v_hat = v_[i] / c2;
    params[i]->array() -= lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
  }
}

}  // namespace mcis
