#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adlab/tensor.hpp"

namespace adlab::ad {

using NodeId = int;
using NamedTensors = std::map<std::string, Tensor>;

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConst,
  kAdd,
  kSub,
  kMul,        // Hadamard
  kMatMul,
  kTranspose,
  kSumAll,
  kMeanAll,
  kSumAxis0,   // matrix -> column sums (length cols)
  kSumAxis1,   // matrix -> row sums (length rows)
  kMeanAxis0,
  kMeanAxis1,
  kExp,
  kLog,
  kNeg,
  kRecip,
  kRelu,       // max(x, 0); subgradient 0 at exactly 0
  kSigmoid,
  kBroadcast,  // scalar -> given shape
  kReshape,
  kConcat,     // rank-1 ++ rank-1
  kCholesky,   // SPD -> lower L (input treated as symmetric; jitter policy)
  kTriSolve,   // op(L) X = B, aux flag selects L^T
  kCholSolve,  // X = A^{-1} B, adjoint backward (input treated as symmetric)
  kStopGrad,
  kReduceMax,  // -> scalar, subgradient to first argmax
  kStepPos,    // 1[x > 0], zero backward
  kScale,      // x * aux
  kAddConst,   // x + aux
};

const char* op_name(Op op);

struct Node {
  Op op;
  NodeId a = -1, b = -1;
  Shape shape;          // output shape
  double aux = 0.0;     // kScale / kAddConst payload
  bool flag = false;    // kTriSolve transpose
  std::string name;     // kInput / kParam
};

struct GradCheckEntry {
  std::string param;
  std::int64_t index;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> worst;  // a few highest-error entries
};

// Reverse-mode tape over Tensor values. Nodes are appended in topological
// order by construction; forward() caches every intermediate so backward()
// is a single reverse sweep. A graph instance is single-threaded; values are
// immutable after forward, so finished graphs may be read from any thread.
class Graph {
 public:
  NodeId input(const std::string& name, Shape shape);
  NodeId param(const std::string& name, Tensor value);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_axis(NodeId a, int axis);
  NodeId mean_axis(NodeId a, int axis);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId neg(NodeId a);
  NodeId recip(NodeId a);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId broadcast(NodeId scalar, Shape shape);
  NodeId reshape(NodeId a, Shape shape);
  NodeId concat(NodeId a, NodeId b);
  NodeId cholesky(NodeId a);
  NodeId tri_solve(NodeId l, NodeId b, bool transpose_l);
  NodeId chol_solve(NodeId a, NodeId b);
  NodeId stop_grad(NodeId a);
  NodeId reduce_max(NodeId a);
  NodeId step_pos(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);

  // Conveniences built from primitives.
  NodeId div(NodeId a, NodeId b) { return mul(a, recip(b)); }
  NodeId dot(NodeId a, NodeId b) { return sum(mul(a, b)); }
  // Numerically stable softmax(x / temp) for a rank-1 node.
  NodeId softmax(NodeId x, double temp);
  // Unbiased sample variance of a rank-1 node (divisor n-1).
  NodeId variance(NodeId x, bool unbiased = true);

  // Mutable access so optimizers can update parameters between evaluations.
  Tensor& param_value(const std::string& name);
  const std::vector<std::string>& param_names() const { return param_order_; }

  // Evaluates the graph up to `output`, binding named inputs, and returns the
  // output value. Caches all intermediates. Throws on shape mismatch,
  // non-finite intermediates (reporting the node id) or Cholesky failure.
  const Tensor& forward(NodeId output, const NamedTensors& inputs = {});

  // d(output)/d(param) for every parameter node; requires a scalar output and
  // a prior forward() on this exact graph (appending nodes invalidates it).
  NamedTensors backward(NodeId output);

  const Tensor& value(NodeId id) const;
  const Shape& shape_of(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).shape; }
  size_t size() const { return nodes_.size(); }

  // Central-finite-difference comparison against backward() for the given
  // parameters (all, when empty). Relative error denominator is floored at
  // 1e-8. Report-only: never throws on mismatch.
  GradCheckReport grad_check(NodeId output, const std::vector<std::string>& params,
                             double step, double tolerance,
                             const NamedTensors& inputs = {});

 private:
  NodeId push(Node n);
  NodeId unary(Op op, NodeId a);
  NodeId binary_same(Op op, NodeId a, NodeId b);
  void eval_node(NodeId id);
  void accumulate(NodeId id, const Tensor& g);
  void backprop_node(NodeId id);
  const Tensor& val(NodeId id) const { return values_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<Tensor> chol_cache_;  // factor for kCholSolve nodes
  std::map<std::string, NodeId> params_;
  std::vector<std::string> param_order_;
  std::map<std::string, NodeId> inputs_;
  NodeId last_forward_output_ = -1;
  size_t forward_size_ = 0;  // node count at last forward; guards mutation
};

}  // namespace adlab::ad
