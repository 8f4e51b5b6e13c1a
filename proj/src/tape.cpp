#include "mcis/tape.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mcis {

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kLinear: return "linear";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
    case Op::kTanh: return "tanh";
    case Op::kSoftplus: return "softplus";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kClamp: return "clamp";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kSum: return "sum";
    case Op::kMeanAll: return "mean_all";
    case Op::kRowSum: return "row_sum";
  }
  return "?";
}

Value Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(Value a, Value b, const char* what) const {
  const Mat& ma = node(a).val;
  const Mat& mb = node(b).val;
  if (ma.rows() != mb.rows() || ma.cols() != mb.cols())
    throw ConfigError(std::string(what) + ": shape mismatch (" +
                      std::to_string(ma.rows()) + "x" + std::to_string(ma.cols()) +
                      " vs " + std::to_string(mb.rows()) + "x" +
                      std::to_string(mb.cols()) + ")");
}

Value Tape::leaf(const Mat& m) {
  Node n;
  n.op = Op::kLeaf;
  n.val = m;
  n.needs_grad = true;
  return push(std::move(n));
}

Value Tape::constant(Mat m) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(m);
  return push(std::move(n));
}

Value Tape::linear(Value x, Value w, Value b) {
  const Mat& mx = node(x).val;
  const Mat& mw = node(w).val;
  const Mat& mb = node(b).val;
  if (mx.cols() != mw.cols())
    throw ConfigError("linear: input width " + std::to_string(mx.cols()) +
                      " does not match weight fan-in " + std::to_string(mw.cols()));
  if (mb.rows() != mw.rows() || mb.cols() != 1)
    throw ConfigError("linear: bias shape does not match weight fan-out");
  Node n;
  n.op = Op::kLinear;
  n.a = x.idx;
  n.b = w.idx;
  n.c = b.idx;
  n.val.noalias() = mx * mw.transpose();
  n.val.rowwise() += mb.col(0).transpose();
  n.needs_grad = any_grad(x) || any_grad(w) || any_grad(b);
  return push(std::move(n));
}

Value Tape::add(Value a, Value b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.idx;
  n.b = b.idx;
  n.val = node(a).val + node(b).val;
  n.needs_grad = any_grad(a) || any_grad(b);
  return push(std::move(n));
}

Value Tape::sub(Value a, Value b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.idx;
  n.b = b.idx;
  n.val = node(a).val - node(b).val;
  n.needs_grad = any_grad(a) || any_grad(b);
  return push(std::move(n));
}

Value Tape::mul(Value a, Value b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.idx;
  n.b = b.idx;
  n.val = node(a).val.cwiseProduct(node(b).val);
  n.needs_grad = any_grad(a) || any_grad(b);
  return push(std::move(n));
}

Value Tape::div(Value a, Value b) {
  check_same_shape(a, b, "div");
  Node n;
  n.op = Op::kDiv;
  n.a = a.idx;
  n.b = b.idx;
  n.val = node(a).val.cwiseQuotient(node(b).val);
  n.needs_grad = any_grad(a) || any_grad(b);
  return push(std::move(n));
}

Value Tape::scale(Value a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a.idx;
  n.s0 = s;
  n.val = node(a).val * s;
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::add_const(Value a, double s) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a.idx;
  n.s0 = s;
  n.val = node(a).val.array() + s;
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::tanh(Value a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.idx;
  n.val = node(a).val.array().tanh();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::softplus(Value a) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.idx;
  n.val = node(a).val.unaryExpr([](double x) { return stable_softplus(x); });
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::square(Value a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a.idx;
  n.val = node(a).val.array().square();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::sqrt(Value a) {
  Node n;
  n.op = Op::kSqrt;
  n.a = a.idx;
  n.val = node(a).val.array().sqrt();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::log(Value a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.idx;
  n.val = node(a).val.array().log();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::abs(Value a) {
  Node n;
  n.op = Op::kAbs;
  n.a = a.idx;
  n.val = node(a).val.array().abs();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::clamp(Value a, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = a.idx;
  n.s0 = lo;
  n.s1 = hi;
  n.val = node(a).val.array().max(lo).min(hi);
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::relu(Value a) {
  return clamp(a, 0.0, std::numeric_limits<double>::infinity());
}

Value Tape::concat_cols(Value a, Value b) {
  const Mat& ma = node(a).val;
  const Mat& mb = node(b).val;
  if (ma.rows() != mb.rows()) throw ConfigError("concat_cols: row mismatch");
  Node n;
  n.op = Op::kConcatCols;
  n.a = a.idx;
  n.b = b.idx;
  n.i0 = static_cast<int>(ma.cols());
  n.val.resize(ma.rows(), ma.cols() + mb.cols());
  n.val << ma, mb;
  n.needs_grad = any_grad(a) || any_grad(b);
  return push(std::move(n));
}

Value Tape::slice_cols(Value a, int first, int count) {
  const Mat& ma = node(a).val;
  if (first < 0 || count <= 0 || first + count > ma.cols())
    throw ConfigError("slice_cols: range out of bounds");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.idx;
  n.i0 = first;
  n.i1 = count;
  n.val = ma.middleCols(first, count);
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::sum(Value a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.idx;
  n.val = Mat::Constant(1, 1, node(a).val.sum());
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::mean_all(Value a) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = a.idx;
  n.val = Mat::Constant(1, 1, node(a).val.mean());
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Value Tape::row_sum(Value a) {
  Node n;
  n.op = Op::kRowSum;
  n.a = a.idx;
  n.val = node(a).val.rowwise().sum();
  n.needs_grad = any_grad(a);
  return push(std::move(n));
}

Mat Tape::adjoint(Value v) const {
  const Node& n = node(v);
  if (n.adj.size() == 0) return Mat::Zero(n.val.rows(), n.val.cols());
  return n.adj;
}

void Tape::accumulate(int idx, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(idx)];
  if (!n.needs_grad) return;
  if (n.adj.size() == 0)
    n.adj = g;
  else
    n.adj += g;
}

void Tape::backward(Value scalar) {
  Node& root = node(scalar);
  if (root.val.rows() != 1 || root.val.cols() != 1)
    throw ConfigError("backward: loss must be a 1x1 scalar node");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].val.allFinite())
      throw NumericError("backward: non-finite value at node " + std::to_string(i) +
                         " (op " + op_name(nodes_[i].op) + ")");
  }
  if (!root.needs_grad) return;
  root.adj = Mat::Constant(1, 1, 1.0);

  for (int i = scalar.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.adj.size() == 0) continue;
    const Mat& g = n.adj;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kLinear: {
        const Node& x = nodes_[static_cast<std::size_t>(n.a)];
        const Node& w = nodes_[static_cast<std::size_t>(n.b)];
        if (x.needs_grad) accumulate(n.a, g * w.val);
        if (w.needs_grad) accumulate(n.b, g.transpose() * x.val);
        if (nodes_[static_cast<std::size_t>(n.c)].needs_grad)
          accumulate(n.c, g.colwise().sum().transpose());
        break;
      }
      case Op::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::kSub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::kMul:
        accumulate(n.a, g.cwiseProduct(nodes_[static_cast<std::size_t>(n.b)].val));
        accumulate(n.b, g.cwiseProduct(nodes_[static_cast<std::size_t>(n.a)].val));
        break;
      case Op::kDiv: {
        const Mat& bv = nodes_[static_cast<std::size_t>(n.b)].val;
        accumulate(n.a, g.cwiseQuotient(bv));
        accumulate(n.b, -g.cwiseProduct(n.val).cwiseQuotient(bv));
        break;
      }
      case Op::kScale:
        accumulate(n.a, g * n.s0);
        break;
      case Op::kAddConst:
        accumulate(n.a, g);
        break;
      case Op::kTanh:
        accumulate(n.a, g.cwiseProduct((1.0 - n.val.array().square()).matrix()));
        break;
      case Op::kSoftplus: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].val;
        accumulate(n.a, g.cwiseProduct(av.unaryExpr(
                            [](double x) { return stable_sigmoid(x); })));
        break;
      }
      case Op::kSquare:
        accumulate(n.a, 2.0 * g.cwiseProduct(nodes_[static_cast<std::size_t>(n.a)].val));
        break;
      case Op::kSqrt:
        accumulate(n.a, (0.5 * g.array() / n.val.array()).matrix());
        break;
      case Op::kLog:
        accumulate(n.a, g.cwiseQuotient(nodes_[static_cast<std::size_t>(n.a)].val));
        break;
      case Op::kAbs: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].val;
        accumulate(n.a, g.cwiseProduct(av.unaryExpr([](double x) {
          return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        })));
        break;
      }
      case Op::kClamp: {
        // subgradient: 1 strictly inside the band, 0 on/after the bounds
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].val;
        const double lo = n.s0, hi = n.s1;
        Mat mask = av.unaryExpr(
            [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
        accumulate(n.a, g.cwiseProduct(mask));
        break;
      }
      case Op::kConcatCols: {
        const int ca = n.i0;
        accumulate(n.a, g.leftCols(ca));
        accumulate(n.b, g.rightCols(g.cols() - ca));
        break;
      }
      case Op::kSliceCols: {
        const Node& src = nodes_[static_cast<std::size_t>(n.a)];
        Mat full = Mat::Zero(src.val.rows(), src.val.cols());
        full.middleCols(n.i0, n.i1) = g;
        accumulate(n.a, full);
        break;
      }
      case Op::kSum: {
        const Node& src = nodes_[static_cast<std::size_t>(n.a)];
        accumulate(n.a, Mat::Constant(src.val.rows(), src.val.cols(), g(0, 0)));
        break;
      }
      case Op::kMeanAll: {
        const Node& src = nodes_[static_cast<std::size_t>(n.a)];
        const double denom = static_cast<double>(src.val.size());
        accumulate(n.a, Mat::Constant(src.val.rows(), src.val.cols(), g(0, 0) / denom));
        break;
      }
      case Op::kRowSum: {
        const Node& src = nodes_[static_cast<std::size_t>(n.a)];
        accumulate(n.a, g.col(0).replicate(1, src.val.cols()));
        break;
      }
    }
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace mcis
