#include "adlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adlab/linalg.hpp"

namespace adlab::ad {

namespace {

[[noreturn]] void fail_node(NodeId id, Op op, const std::string& what) {
  throw std::invalid_argument("graph node " + std::to_string(id) + " (" +
                              std::string(op_name(op)) + "): " + what);
}

Tensor tril_mask(const Tensor& m) {
  Tensor out = m;
  for (std::int64_t i = 0; i < m.rows(); ++i)
    for (std::int64_t j = i + 1; j < m.cols(); ++j) out.at(i, j) = 0.0;
  return out;
}

Tensor symmetrize(const Tensor& m) {
  Tensor out = m;
  for (std::int64_t i = 0; i < m.rows(); ++i)
    for (std::int64_t j = 0; j < m.cols(); ++j) out.at(i, j) = 0.5 * (m.at(i, j) + m.at(j, i));
  return out;
}

Tensor as_matrix(const Tensor& t) {
  if (t.rank() == 2) return t;
  Tensor m = t;
  m.shape = {t.numel(), 1};
  return m;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kSumAll: return "sum";
    case Op::kMeanAll: return "mean";
    case Op::kSumAxis0: return "sum_axis0";
    case Op::kSumAxis1: return "sum_axis1";
    case Op::kMeanAxis0: return "mean_axis0";
    case Op::kMeanAxis1: return "mean_axis1";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kNeg: return "neg";
    case Op::kRecip: return "recip";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kBroadcast: return "broadcast";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concat";
    case Op::kCholesky: return "cholesky";
    case Op::kTriSolve: return "tri_solve";
    case Op::kCholSolve: return "chol_solve";
    case Op::kStopGrad: return "stop_grad";
    case Op::kReduceMax: return "reduce_max";
    case Op::kStepPos: return "step_pos";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  values_.emplace_back();
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(const std::string& name, Shape shape) {
  if (inputs_.count(name)) throw std::invalid_argument("duplicate input name: " + name);
  Node n{Op::kInput};
  n.shape = std::move(shape);
  n.name = name;
  NodeId id = push(std::move(n));
  inputs_[name] = id;
  return id;
}

NodeId Graph::param(const std::string& name, Tensor value) {
  if (params_.count(name)) throw std::invalid_argument("duplicate param name: " + name);
  Node n{Op::kParam};
  n.shape = value.shape;
  n.name = name;
  NodeId id = push(std::move(n));
  params_[name] = id;
  param_order_.push_back(name);
  values_[static_cast<size_t>(id)] = std::move(value);
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n{Op::kConst};
  n.shape = value.shape;
  NodeId id = push(std::move(n));
  values_[static_cast<size_t>(id)] = std::move(value);
  return id;
}

NodeId Graph::binary_same(Op op, NodeId a, NodeId b) {
  const Node& na = nodes_.at(static_cast<size_t>(a));
  const Node& nb = nodes_.at(static_cast<size_t>(b));
  if (na.shape != nb.shape)
    fail_node(static_cast<NodeId>(nodes_.size()), op,
              "shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node n{op};
  n.a = a;
  n.b = b;
  n.shape = na.shape;
  return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId a) {
  Node n{op};
  n.a = a;
  n.shape = nodes_.at(static_cast<size_t>(a)).shape;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary_same(Op::kAdd, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary_same(Op::kSub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary_same(Op::kMul, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Shape& sa = nodes_[static_cast<size_t>(a)].shape;
  const Shape& sb = nodes_[static_cast<size_t>(b)].shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    fail_node(static_cast<NodeId>(nodes_.size()), Op::kMatMul,
              "incompatible " + shape_str(sa) + " x " + shape_str(sb));
  Node n{Op::kMatMul};
  n.a = a;
  n.b = b;
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Shape& s = nodes_[static_cast<size_t>(a)].shape;
  if (s.size() != 2) fail_node(a, Op::kTranspose, "rank-2 required");
  Node n{Op::kTranspose};
  n.a = a;
  n.shape = {s[1], s[0]};
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  Node n{Op::kSumAll};
  n.a = a;
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  Node n{Op::kMeanAll};
  n.a = a;
  return push(std::move(n));
}

NodeId Graph::sum_axis(NodeId a, int axis) {
  const Shape& s = nodes_[static_cast<size_t>(a)].shape;
  if (s.size() != 2) fail_node(a, Op::kSumAxis0, "rank-2 required");
  Node n{axis == 0 ? Op::kSumAxis0 : Op::kSumAxis1};
  n.a = a;
  n.shape = {axis == 0 ? s[1] : s[0]};
  return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId a, int axis) {
  const Shape& s = nodes_[static_cast<size_t>(a)].shape;
  if (s.size() != 2) fail_node(a, Op::kMeanAxis0, "rank-2 required");
  Node n{axis == 0 ? Op::kMeanAxis0 : Op::kMeanAxis1};
  n.a = a;
  n.shape = {axis == 0 ? s[1] : s[0]};
  return push(std::move(n));
}

NodeId Graph::exp(NodeId a) { return unary(Op::kExp, a); }
NodeId Graph::log(NodeId a) { return unary(Op::kLog, a); }
NodeId Graph::neg(NodeId a) { return unary(Op::kNeg, a); }
NodeId Graph::recip(NodeId a) { return unary(Op::kRecip, a); }
NodeId Graph::relu(NodeId a) { return unary(Op::kRelu, a); }
NodeId Graph::sigmoid(NodeId a) { return unary(Op::kSigmoid, a); }
NodeId Graph::stop_grad(NodeId a) { return unary(Op::kStopGrad, a); }
NodeId Graph::step_pos(NodeId a) { return unary(Op::kStepPos, a); }

NodeId Graph::broadcast(NodeId scalar, Shape shape) {
  if (shape_numel(nodes_[static_cast<size_t>(scalar)].shape) != 1)
    fail_node(scalar, Op::kBroadcast, "scalar input required");
  Node n{Op::kBroadcast};
  n.a = scalar;
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
  if (shape_numel(nodes_[static_cast<size_t>(a)].shape) != shape_numel(shape))
    fail_node(a, Op::kReshape, "element count mismatch");
  Node n{Op::kReshape};
  n.a = a;
  n.shape = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b) {
  const Shape& sa = nodes_[static_cast<size_t>(a)].shape;
  const Shape& sb = nodes_[static_cast<size_t>(b)].shape;
  if (sa.size() != 1 || sb.size() != 1) fail_node(a, Op::kConcat, "rank-1 operands required");
  Node n{Op::kConcat};
  n.a = a;
  n.b = b;
  n.shape = {sa[0] + sb[0]};
  return push(std::move(n));
}

NodeId Graph::cholesky(NodeId a) {
  const Shape& s = nodes_[static_cast<size_t>(a)].shape;
  if (s.size() != 2 || s[0] != s[1]) fail_node(a, Op::kCholesky, "square matrix required");
  Node n{Op::kCholesky};
  n.a = a;
  n.shape = s;
  return push(std::move(n));
}

NodeId Graph::tri_solve(NodeId l, NodeId b, bool transpose_l) {
  const Shape& sl = nodes_[static_cast<size_t>(l)].shape;
  const Shape& sb = nodes_[static_cast<size_t>(b)].shape;
  if (sl.size() != 2 || sl[0] != sl[1] || sb.empty() || sb[0] != sl[0])
    fail_node(l, Op::kTriSolve, "shape mismatch " + shape_str(sl) + " \\ " + shape_str(sb));
  Node n{Op::kTriSolve};
  n.a = l;
  n.b = b;
  n.shape = sb;
  n.flag = transpose_l;
  return push(std::move(n));
}

NodeId Graph::chol_solve(NodeId a, NodeId b) {
  const Shape& sa = nodes_[static_cast<size_t>(a)].shape;
  const Shape& sb = nodes_[static_cast<size_t>(b)].shape;
  if (sa.size() != 2 || sa[0] != sa[1] || sb.empty() || sb[0] != sa[0])
    fail_node(a, Op::kCholSolve, "shape mismatch " + shape_str(sa) + " \\ " + shape_str(sb));
  Node n{Op::kCholSolve};
  n.a = a;
  n.b = b;
  n.shape = sb;
  return push(std::move(n));
}

NodeId Graph::reduce_max(NodeId a) {
  Node n{Op::kReduceMax};
  n.a = a;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  NodeId id = unary(Op::kScale, a);
  nodes_[static_cast<size_t>(id)].aux = c;
  return id;
}

NodeId Graph::add_const(NodeId a, double c) {
  NodeId id = unary(Op::kAddConst, a);
  nodes_[static_cast<size_t>(id)].aux = c;
  return id;
}

NodeId Graph::softmax(NodeId x, double temp) {
  const Shape s = nodes_[static_cast<size_t>(x)].shape;  // copy: pushes reallocate
  NodeId m = stop_grad(reduce_max(x));
  NodeId shifted = sub(x, broadcast(m, s));
  NodeId e = exp(scale(shifted, 1.0 / temp));
  NodeId total = sum(e);
  return mul(e, broadcast(recip(total), s));
}

NodeId Graph::variance(NodeId x, bool unbiased) {
  const Shape s = nodes_[static_cast<size_t>(x)].shape;
  const auto n = static_cast<double>(shape_numel(s));
  NodeId m = mean(x);
  NodeId d = sub(x, broadcast(m, s));
  NodeId ss = sum(mul(d, d));
  return scale(ss, 1.0 / (unbiased ? n - 1.0 : n));
}

Tensor& Graph::param_value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown param: " + name);
  return values_[static_cast<size_t>(it->second)];
}

const Tensor& Graph::value(NodeId id) const {
  return values_.at(static_cast<size_t>(id));
}

void Graph::eval_node(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  Tensor& out = values_[static_cast<size_t>(id)];
  const Tensor* A = n.a >= 0 ? &values_[static_cast<size_t>(n.a)] : nullptr;
  const Tensor* B = n.b >= 0 ? &values_[static_cast<size_t>(n.b)] : nullptr;
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConst:
      break;  // already bound
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      out = *A;
      const size_t m = out.data.size();
      if (n.op == Op::kAdd)
        for (size_t i = 0; i < m; ++i) out.data[i] += B->data[i];
      else if (n.op == Op::kSub)
        for (size_t i = 0; i < m; ++i) out.data[i] -= B->data[i];
      else
        for (size_t i = 0; i < m; ++i) out.data[i] *= B->data[i];
      break;
    }
    case Op::kMatMul:
      out = linalg::matmul(*A, *B);
      break;
    case Op::kTranspose:
      out = linalg::transpose(*A);
      break;
    case Op::kSumAll:
    case Op::kMeanAll: {
      double s = 0;
      for (double v : A->data) s += v;
      if (n.op == Op::kMeanAll) s /= static_cast<double>(A->numel());
      out = Tensor::scalar(s);
      break;
    }
    case Op::kSumAxis0:
    case Op::kMeanAxis0: {
      out = Tensor::zeros({A->cols()});
      for (std::int64_t i = 0; i < A->rows(); ++i)
        for (std::int64_t j = 0; j < A->cols(); ++j) out.at(j) += A->at(i, j);
      if (n.op == Op::kMeanAxis0)
        for (auto& v : out.data) v /= static_cast<double>(A->rows());
      break;
    }
    case Op::kSumAxis1:
    case Op::kMeanAxis1: {
      out = Tensor::zeros({A->rows()});
      for (std::int64_t i = 0; i < A->rows(); ++i)
        for (std::int64_t j = 0; j < A->cols(); ++j) out.at(i) += A->at(i, j);
      if (n.op == Op::kMeanAxis1)
        for (auto& v : out.data) v /= static_cast<double>(A->cols());
      break;
    }
    case Op::kExp: {
      out = *A;
      for (auto& v : out.data) v = std::exp(v);
      break;
    }
    case Op::kLog: {
      out = *A;
      for (auto& v : out.data) v = std::log(v);
      break;
    }
    case Op::kNeg: {
      out = *A;
      for (auto& v : out.data) v = -v;
      break;
    }
    case Op::kRecip: {
      out = *A;
      for (auto& v : out.data) v = 1.0 / v;
      break;
    }
    case Op::kRelu: {
      out = *A;
      for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
      break;
    }
    case Op::kSigmoid: {
      out = *A;
      for (auto& v : out.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                            : std::exp(v) / (1.0 + std::exp(v));
      break;
    }
    case Op::kBroadcast:
      out = Tensor::full(n.shape, A->data[0]);
      break;
    case Op::kReshape:
      out = *A;
      out.shape = n.shape;
      break;
    case Op::kConcat: {
      out = Tensor::zeros(n.shape);
      std::copy(A->data.begin(), A->data.end(), out.data.begin());
      std::copy(B->data.begin(), B->data.end(), out.data.begin() + A->data.size());
      break;
    }
    case Op::kCholesky:
      out = linalg::cholesky_spd(symmetrize(*A)).L;
      break;
    case Op::kTriSolve:
      out = linalg::solve_triangular(*A, *B, n.flag);
      break;
    case Op::kCholSolve: {
      linalg::CholFactor f = linalg::cholesky_spd(symmetrize(*A));
      Tensor t = linalg::solve_triangular(f.L, *B, false);
      out = linalg::solve_triangular(f.L, t, true);
      chol_cache_[static_cast<size_t>(id)] = std::move(f.L);
      break;
    }
    case Op::kStopGrad:
      out = *A;
      break;
    case Op::kReduceMax: {
      double best = A->data[0];
      for (double v : A->data) best = std::max(best, v);
      out = Tensor::scalar(best);
      break;
    }
    case Op::kStepPos: {
      out = *A;
      for (auto& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
      break;
    }
    case Op::kScale: {
      out = *A;
      for (auto& v : out.data) v *= n.aux;
      break;
    }
    case Op::kAddConst: {
      out = *A;
      for (auto& v : out.data) v += n.aux;
      break;
    }
  }
  if (!out.all_finite())
    throw std::runtime_error("graph node " + std::to_string(id) + " (" +
                             std::string(op_name(n.op)) + "): non-finite value");
}

const Tensor& Graph::forward(NodeId output, const NamedTensors& inputs) {
  if (output < 0 || static_cast<size_t>(output) >= nodes_.size())
    throw std::invalid_argument("forward: bad output node");
  chol_cache_.assign(nodes_.size(), Tensor());
  for (size_t i = 0; i <= static_cast<size_t>(output); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::kInput) {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) throw std::invalid_argument("forward: input not bound: " + n.name);
      if (it->second.shape != n.shape)
        throw std::invalid_argument("forward: input " + n.name + " shape " +
                                    shape_str(it->second.shape) + " != declared " +
                                    shape_str(n.shape));
      values_[i] = it->second;
    }
    eval_node(static_cast<NodeId>(i));
  }
  last_forward_output_ = output;
  forward_size_ = nodes_.size();
  return values_[static_cast<size_t>(output)];
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  Tensor& acc = grads_[static_cast<size_t>(id)];
  if (acc.data.empty()) {
    acc = g;
    return;
  }
  for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

void Graph::backprop_node(NodeId id) {
  const Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.data.empty()) return;  // node not on any path to the output
  const Tensor* A = n.a >= 0 ? &values_[static_cast<size_t>(n.a)] : nullptr;
  const Tensor* B = n.b >= 0 ? &values_[static_cast<size_t>(n.b)] : nullptr;
  const Tensor& Y = values_[static_cast<size_t>(id)];
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConst:
    case Op::kStopGrad:  // treated as constant in the backward pass
      break;
    case Op::kAdd:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::kSub: {
      accumulate(n.a, g);
      Tensor gb = g;
      for (auto& v : gb.data) v = -v;
      accumulate(n.b, gb);
      break;
    }
    case Op::kMul: {
      Tensor ga = g, gb = g;
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] *= B->data[i];
        gb.data[i] *= A->data[i];
      }
      accumulate(n.a, ga);
      accumulate(n.b, gb);
      break;
    }
    case Op::kMatMul:
      accumulate(n.a, linalg::matmul(g, linalg::transpose(*B)));
      accumulate(n.b, linalg::matmul(linalg::transpose(*A), g));
      break;
    case Op::kTranspose:
      accumulate(n.a, linalg::transpose(g));
      break;
    case Op::kSumAll:
      accumulate(n.a, Tensor::full(A->shape, g.data[0]));
      break;
    case Op::kMeanAll:
      accumulate(n.a, Tensor::full(A->shape, g.data[0] / static_cast<double>(A->numel())));
      break;
    case Op::kSumAxis0:
    case Op::kMeanAxis0: {
      const double inv = n.op == Op::kMeanAxis0 ? 1.0 / static_cast<double>(A->rows()) : 1.0;
      Tensor ga = Tensor::zeros(A->shape);
      for (std::int64_t i = 0; i < A->rows(); ++i)
        for (std::int64_t j = 0; j < A->cols(); ++j) ga.at(i, j) = g.at(j) * inv;
      accumulate(n.a, ga);
      break;
    }
    case Op::kSumAxis1:
    case Op::kMeanAxis1: {
      const double inv = n.op == Op::kMeanAxis1 ? 1.0 / static_cast<double>(A->cols()) : 1.0;
      Tensor ga = Tensor::zeros(A->shape);
      for (std::int64_t i = 0; i < A->rows(); ++i)
        for (std::int64_t j = 0; j < A->cols(); ++j) ga.at(i, j) = g.at(i) * inv;
      accumulate(n.a, ga);
      break;
    }
    case Op::kExp: {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= Y.data[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::kLog: {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= A->data[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::kNeg: {
      Tensor ga = g;
      for (auto& v : ga.data) v = -v;
      accumulate(n.a, ga);
      break;
    }
    case Op::kRecip: {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= -Y.data[i] * Y.data[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::kRelu: {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= A->data[i] > 0.0 ? 1.0 : 0.0;
      accumulate(n.a, ga);
      break;
    }
    case Op::kSigmoid: {
      Tensor ga = g;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= Y.data[i] * (1.0 - Y.data[i]);
      accumulate(n.a, ga);
      break;
    }
    case Op::kBroadcast: {
      double s = 0;
      for (double v : g.data) s += v;
      accumulate(n.a, Tensor::scalar(s));
      break;
    }
    case Op::kReshape: {
      Tensor ga = g;
      ga.shape = A->shape;
      accumulate(n.a, ga);
      break;
    }
    case Op::kConcat: {
      Tensor ga(A->shape, std::vector<double>(g.data.begin(),
                                              g.data.begin() + A->data.size()));
      Tensor gb(B->shape, std::vector<double>(g.data.begin() + A->data.size(), g.data.end()));
      accumulate(n.a, ga);
      accumulate(n.b, gb);
      break;
    }
    case Op::kCholesky: {
      // Standard symmetrized rule: Abar = sym(L^-T Phi(L^T Lbar) L^-1) with
      // Phi = lower triangle, halved diagonal.
      const Tensor& L = Y;
      Tensor lbar = tril_mask(g);
      Tensor p = linalg::matmul(linalg::transpose(L), lbar);
      p = tril_mask(p);
      for (std::int64_t i = 0; i < p.rows(); ++i) p.at(i, i) *= 0.5;
      Tensor t1 = linalg::solve_triangular(L, p, true);
      Tensor st = linalg::solve_triangular(L, linalg::transpose(t1), true);
      Tensor s = linalg::transpose(st);
      accumulate(n.a, symmetrize(s));
      break;
    }
    case Op::kTriSolve: {
      const Tensor& L = *A;
      Tensor gm = as_matrix(g);
      Tensor xm = as_matrix(Y);
      if (!n.flag) {
        // X = L^{-1} B: Bbar = L^{-T} g, Lbar = -(L^{-T} g) X^T
        Tensor w = linalg::solve_triangular(L, gm, true);
        Tensor lbar = linalg::matmul(w, linalg::transpose(xm));
        for (auto& v : lbar.data) v = -v;
        w.shape = B->shape;
        accumulate(n.b, w);
        accumulate(n.a, tril_mask(lbar));
      } else {
        // X = L^{-T} B: Bbar = L^{-1} g, Lbar = -X (L^{-1} g)^T
        Tensor w = linalg::solve_triangular(L, gm, false);
        Tensor lbar = linalg::matmul(xm, linalg::transpose(w));
        for (auto& v : lbar.data) v = -v;
        w.shape = B->shape;
        accumulate(n.b, w);
        accumulate(n.a, tril_mask(lbar));
      }
      break;
    }
    case Op::kCholSolve: {
      // Adjoint identity: Bbar = A^{-1} g, Abar = -(A^{-1} g) X^T.
      const Tensor& L = chol_cache_[static_cast<size_t>(id)];
      Tensor gm = as_matrix(g);
      Tensor w = linalg::solve_triangular(L, gm, false);
      w = linalg::solve_triangular(L, w, true);
      Tensor abar = linalg::matmul(w, linalg::transpose(as_matrix(Y)));
      for (auto& v : abar.data) v = -v;
      w.shape = B->shape;
      accumulate(n.b, w);
      accumulate(n.a, abar);
      break;
    }
    case Op::kReduceMax: {
      size_t best = 0;
      for (size_t i = 1; i < A->data.size(); ++i)
        if (A->data[i] > A->data[best]) best = i;
      Tensor ga = Tensor::zeros(A->shape);
      ga.data[best] = g.data[0];
      accumulate(n.a, ga);
      break;
    }
    case Op::kStepPos:
      break;  // locally constant
    case Op::kScale: {
      Tensor ga = g;
      for (auto& v : ga.data) v *= n.aux;
      accumulate(n.a, ga);
      break;
    }
    case Op::kAddConst:
      accumulate(n.a, g);
      break;
  }
}

NamedTensors Graph::backward(NodeId output) {
  if (last_forward_output_ != output)
    throw std::invalid_argument("backward: forward(output) must run first");
  if (forward_size_ != nodes_.size())
    throw std::invalid_argument("backward: graph mutated since forward");
  if (values_[static_cast<size_t>(output)].numel() != 1)
    throw std::invalid_argument("backward: output node is not scalar");
  grads_.assign(nodes_.size(), Tensor());
  grads_[static_cast<size_t>(output)] = Tensor::full(values_[static_cast<size_t>(output)].shape, 1.0);
  for (NodeId id = output; id >= 0; --id) backprop_node(id);
  NamedTensors out;
  for (const auto& name : param_order_) {
    NodeId pid = params_.at(name);
    Tensor& g = grads_[static_cast<size_t>(pid)];
    out[name] = g.data.empty() ? Tensor::zeros(nodes_[static_cast<size_t>(pid)].shape)
                               : std::move(g);
  }
  return out;
}

GradCheckReport Graph::grad_check(NodeId output, const std::vector<std::string>& params,
                                  double step, double tolerance, const NamedTensors& inputs) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
  std::vector<std::string> names = params.empty() ? param_order_ : params;
  forward(output, inputs);
  NamedTensors analytic = backward(output);
  GradCheckReport report;
  std::vector<GradCheckEntry> entries;
  for (const auto& name : names) {
    Tensor& p = param_value(name);
    const Tensor& ga = analytic.at(name);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double saved = p.at(i);
      p.at(i) = saved + step;
      const double up = forward(output, inputs).value();
      p.at(i) = saved - step;
      const double dn = forward(output, inputs).value();
      p.at(i) = saved;
      const double numeric = (up - dn) / (2.0 * step);
      const double denom = std::max({1e-8, std::abs(numeric), std::abs(ga.at(i))});
      const double rel = std::abs(ga.at(i) - numeric) / denom;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      entries.push_back({name, i, ga.at(i), numeric, rel});
    }
  }
  forward(output, inputs);  // restore cached state
  std::sort(entries.begin(), entries.end(),
            [](const GradCheckEntry& x, const GradCheckEntry& y) { return x.rel_err > y.rel_err; });
  if (entries.size() > 8) entries.resize(8);
  report.worst = std::move(entries);
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace adlab::ad
