#pragma once

#include <Eigen/Core>
#include <vector>

#include "mcis/common.hpp"

namespace mcis {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Handle to a node on a Tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode autodiff over matrix-valued nodes. Convention: rows index the
// batch, columns the feature dimension. A tape is recorded for one scalar
// loss, swept once by backward(), and then cleared; adjoints accumulate on
// every node that (transitively) depends on a leaf.
class Tape {
 public:
  // Trainable input; its adjoint is read back after backward().
  Value leaf(const Mat& m);
  // Input without gradient tracking (data, noise, frozen parameters).
  Value constant(Mat m);

  // y = x w^T + 1 b^T with x:(n,in), w:(out,in), b:(out,1)
  Value linear(Value x, Value w, Value b);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);  // elementwise
  Value div(Value a, Value b);  // elementwise
  Value scale(Value a, double s);
  Value add_const(Value a, double s);
  Value tanh(Value a);
  Value softplus(Value a);
  Value square(Value a);
  Value sqrt(Value a);
  Value log(Value a);
  Value abs(Value a);
  Value clamp(Value a, double lo, double hi);
  Value relu(Value a);

  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, int first, int count);
  Value sum(Value a);       // -> (1,1)
  Value mean_all(Value a);  // -> (1,1)
  Value row_sum(Value a);   // (n,m) -> (n,1)

  const Mat& value(Value v) const { return node(v).val; }
  // Adjoint of a node after backward(); zero matrix if it never received one.
  Mat adjoint(Value v) const;

  // Seeds d(scalar)/d(scalar) = 1 and sweeps the graph in reverse. Throws
  // NumericError naming the first node whose forward value is non-finite.
  void backward(Value scalar);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf,
    kConst,
    kLinear,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kScale,
    kAddConst,
    kTanh,
    kSoftplus,
    kSquare,
    kSqrt,
    kLog,
    kAbs,
    kClamp,
    kConcatCols,
    kSliceCols,
    kSum,
    kMeanAll,
    kRowSum,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;  // inputs
    double s0 = 0.0, s1 = 0.0;   // scalar payload (scale, clamp bounds, ...)
    int i0 = 0, i1 = 0;          // slice payload
    Mat val;
    Mat adj;  // lazily sized on first contribution
    bool needs_grad = false;
  };

  static const char* op_name(Op op);
  Node& node(Value v) { return nodes_.at(static_cast<std::size_t>(v.idx)); }
  const Node& node(Value v) const {
    return nodes_.at(static_cast<std::size_t>(v.idx));
  }
  Value push(Node n);
  bool any_grad(Value a) const { return node(a).needs_grad; }
  void accumulate(int idx, const Mat& g);
  void check_same_shape(Value a, Value b, const char* what) const;

  std::vector<Node> nodes_;
};

// Numerically stable scalar helpers shared with the plain (non-tape) paths.
double stable_softplus(double x);
double stable_sigmoid(double x);

}  // namespace mcis
