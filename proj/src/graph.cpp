#include "hmrk/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "hmrk/error.hpp"
#include "hmrk/random.hpp"

namespace hmrk::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kSeriesThreshold = 1e-2;  // squared angle below which the series is used
constexpr int kSeriesTerms = 8;

// C (m x n) (+)= op(A) op(B), where op(A) is m x k and op(B) is k x n.
void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n <= 512) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = accumulate ? c[i * n + j] : 0.0;
        for (std::size_t l = 0; l < k; ++l) {
          const double av = trans_a ? a[l * m + i] : a[i * k + l];
          const double bv = trans_b ? b[j * k + l] : b[l * n + j];
          acc += av * bv;
        }
        c[i * n + j] = acc;
      }
    }
    return;
  }
  MutMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  if (!accumulate) cm.setZero();
  if (!trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, mi, ki) * ConstMap(b, ki, ni);
  } else if (trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, ki, mi).transpose() * ConstMap(b, ki, ni);
  } else if (!trans_a && trans_b) {
    cm.noalias() += ConstMap(a, mi, ki) * ConstMap(b, ni, ki).transpose();
  } else {
    cm.noalias() += ConstMap(a, ki, mi).transpose() * ConstMap(b, ni, ki).transpose();
  }
}

template <class F>
void for_each_pair(const BroadcastPlan& plan, std::size_t n, F&& f) {
  using K = BroadcastPlan::Kind;
  switch (plan.kind) {
    case K::kSame:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    case K::kRightTiled:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i % plan.period);
      return;
    case K::kLeftTiled:
      for (std::size_t i = 0; i < n; ++i) f(i, i % plan.period, i);
      return;
    case K::kRightRepeated:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i / plan.period);
      return;
    case K::kLeftRepeated:
      for (std::size_t i = 0; i < n; ++i) f(i, i / plan.period, i);
      return;
    case K::kGeneral: {
      const std::size_t r = plan.out.size();
      std::vector<std::size_t> idx(r, 0);
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = r; d-- > 0;) {
          ++idx[d];
          ia += plan.stride_a[d];
          ib += plan.stride_b[d];
          if (idx[d] < plan.out[d]) break;
          ia -= plan.stride_a[d] * idx[d];
          ib -= plan.stride_b[d] * idx[d];
          idx[d] = 0;
        }
      }
      return;
    }
  }
}

Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// Same rank, equal to `big` on a prefix and 1 afterwards; returns the
// repeated block size, or 0 when the pattern does not apply.
std::size_t repeated_block(const Shape& small, const Shape& big) {
  if (small.size() != big.size()) return 0;
  std::size_t j = 0;
  while (j < small.size() && small[j] == big[j]) ++j;
  for (std::size_t d = j; d < small.size(); ++d) {
    if (small[d] != 1) return 0;
  }
  std::size_t block = 1;
  for (std::size_t d = j; d < big.size(); ++d) block *= big[d];
  return block;
}

BroadcastPlan make_plan(const Shape& a, const Shape& b, bool& ok) {
  BroadcastPlan plan;
  ok = true;
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  plan.out.resize(r);
  for (std::size_t d = 0; d < r; ++d) {
    if (pa[d] == pb[d] || pb[d] == 1) {
      plan.out[d] = pa[d];
    } else if (pa[d] == 1) {
      plan.out[d] = pb[d];
    } else {
      ok = false;
      return plan;
    }
  }
  using K = BroadcastPlan::Kind;
  if (a == b) {
    plan.kind = K::kSame;
    return plan;
  }
  if (a == plan.out && is_suffix(strip_leading_ones(b), plan.out)) {
    plan.kind = K::kRightTiled;
    plan.period = numel(b);
    return plan;
  }
  if (b == plan.out && is_suffix(strip_leading_ones(a), plan.out)) {
    plan.kind = K::kLeftTiled;
    plan.period = numel(a);
    return plan;
  }
  if (a == plan.out) {
    if (std::size_t block = repeated_block(b, plan.out); block > 0) {
      plan.kind = K::kRightRepeated;
      plan.period = block;
      return plan;
    }
  }
  if (b == plan.out) {
    if (std::size_t block = repeated_block(a, plan.out); block > 0) {
      plan.kind = K::kLeftRepeated;
      plan.period = block;
      return plan;
    }
  }
  plan.kind = K::kGeneral;
  plan.stride_a.assign(r, 0);
  plan.stride_b.assign(r, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t d = r; d-- > 0;) {
    plan.stride_a[d] = pa[d] == 1 ? 0 : sa;
    plan.stride_b[d] = pb[d] == 1 ? 0 : sb;
    sa *= pa[d];
    sb *= pb[d];
  }
  return plan;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    fail(ErrorKind::kShapeMismatch, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t d = from; d < to; ++d) n *= s[d];
  return n;
}

Graph& owner(Var v) {
  if (v.graph == nullptr) fail(ErrorKind::kInvalidArgument, "unbound graph variable");
  return *v.graph;
}

Graph& common_owner(Var a, Var b) {
  if (a.graph != b.graph) fail(ErrorKind::kInvalidArgument, "variables belong to different graphs");
  return owner(a);
}

Var binary(Op op, Var a, Var b) {
  Graph& g = common_owner(a, b);
  bool ok = false;
  BroadcastPlan plan = make_plan(a.shape(), b.shape(), ok);
  if (!ok) g.shape_error(op, "cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  Shape out = plan.out;
  Var v = g.add_node(op, {a.id, b.id}, out);
  g.set_plan(v, std::move(plan));
  return v;
}

Var unary(Op op, Var a) {
  Graph& g = owner(a);
  return g.add_node(op, {a.id}, a.shape());
}

double series(double s, bool derivative, int offset) {
  // offset 1 -> terms 1/(2k+1)!, offset 2 -> 1/(2k+2)!
  double sum = 0.0;
  double fact = 1.0;
  for (int i = 2; i <= offset; ++i) fact *= i;  // (offset)!
  double power = 1.0;                           // s^k (or s^(k-1) for derivative)
  for (int k = 0; k < kSeriesTerms; ++k) {
    if (k > 0) {
      fact *= static_cast<double>((2 * k + offset - 1) * (2 * k + offset));
    }
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    if (!derivative) {
      sum += sign * power / fact;
      power *= s;
    } else if (k > 0) {
      sum += sign * static_cast<double>(k) * power / fact;
      power *= s;
    }
  }
  return sum;
}

}  // namespace

double rodrigues_a_value(double s) {
  if (s < kSeriesThreshold) return series(s, false, 1);
  const double r = std::sqrt(s);
  return std::sin(r) / r;
}

double rodrigues_b_value(double s) {
  if (s < kSeriesThreshold) return series(s, false, 2);
  const double h = std::sin(0.5 * std::sqrt(s));
  return 2.0 * h * h / s;
}

double rodrigues_a_deriv(double s) {
  if (s < kSeriesThreshold) return series(s, true, 1);
  const double r = std::sqrt(s);
  return (std::cos(r) - std::sin(r) / r) / (2.0 * s);
}

double rodrigues_b_deriv(double s) {
  if (s < kSeriesThreshold) return series(s, true, 2);
  return (0.5 * rodrigues_a_value(s) - rodrigues_b_value(s)) / s;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConst: return "const";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kRodriguesA: return "rodrigues_a";
    case Op::kRodriguesB: return "rodrigues_b";
    case Op::kConcat: return "concat";
    case Op::kReshape: return "reshape";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kSumAxis: return "sum_axis";
    case Op::kMean: return "mean";
    case Op::kDropout: return "dropout";
  }
  return "?";
}

const Shape& Var::shape() const { return owner(*this).shape_of(id); }

// --- construction ---------------------------------------------------------

Var Graph::add_node(Op op, std::vector<std::uint32_t> inputs, Shape shape) {
  Node n;
  n.op = op;
  n.in = std::move(inputs);
  n.shape = std::move(shape);
  for (auto i : n.in) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  if (op != Op::kInput && op != Op::kParam && op != Op::kConst) n.value = Tensor(n.shape);
  nodes_.push_back(std::move(n));
  grad_live_.push_back(0);
  evaluated_ = false;
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::set_attrs(Var v, int axis, std::size_t start, std::size_t length, double scalar) {
  Node& n = nodes_.at(v.id);
  n.axis = axis;
  n.start = start;
  n.length = length;
  n.scalar = scalar;
}

void Graph::set_plan(Var v, BroadcastPlan plan) { nodes_.at(v.id).plan = std::move(plan); }

void Graph::shape_error(Op op, const std::string& detail) const {
  fail(ErrorKind::kShapeMismatch,
       "node #" + std::to_string(nodes_.size()) + " (" + op_name(op) + "): " + detail);
}

Var Graph::input(const std::string& name, Shape shape, bool requires_grad) {
  if (inputs_.count(name)) fail(ErrorKind::kInvalidArgument, "duplicate graph input '" + name + "'");
  Var v = add_node(Op::kInput, {}, std::move(shape));
  Node& n = nodes_[v.id];
  n.name = name;
  n.requires_grad = requires_grad;
  n.needs_grad = requires_grad;
  inputs_[name] = v.id;
  return v;
}

Var Graph::param(const std::string& name, Shape shape) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (nodes_[it->second].shape != shape) {
      shape_error(Op::kParam, "parameter '" + name + "' redeclared with shape " + shape_str(shape));
    }
    return Var{this, it->second};
  }
  Var v = add_node(Op::kParam, {}, std::move(shape));
  Node& n = nodes_[v.id];
  n.name = name;
  n.requires_grad = true;
  n.needs_grad = true;
  params_[name] = v.id;
  return v;
}

Var Graph::constant(Tensor value) {
  Shape s = value.shape();
  Var v = add_node(Op::kConst, {}, std::move(s));
  nodes_[v.id].value = std::move(value);
  return v;
}

void Graph::mark_output(const std::string& name, Var v) { outputs_[name] = v.id; }

Var Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) fail(ErrorKind::kInvalidArgument, "unknown graph output '" + name + "'");
  return Var{const_cast<Graph*>(this), it->second};
}

std::vector<std::string> Graph::param_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : params_) names.push_back(name);
  return names;
}

std::vector<std::string> Graph::input_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : inputs_) names.push_back(name);
  return names;
}

std::vector<bool> Graph::kink_pattern() const {
  std::vector<bool> out;
  for (const Node& n : nodes_) {
    if (n.op != Op::kRelu && n.op != Op::kAbs) continue;
    const Tensor& x = val(n.in[0]);
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back(x[i] > 0.0);
  }
  return out;
}

const Tensor& Graph::value(Var v) const {
  if (!evaluated_) fail(ErrorKind::kState, "graph value requested before evaluation");
  return val(v.id);
}

// --- forward --------------------------------------------------------------

TensorMap Graph::evaluate(const TensorMap& inputs, const ParamStore& params, const EvalOptions& options) {
  std::map<std::string, const Tensor*> bound;
  for (const auto& [name, t] : inputs) bound[name] = &t;
  run(bound, params, options);
  TensorMap out;
  for (const auto& [name, id] : outputs_) out[name] = val(id);
  // Input bindings point into the caller's map, which may not outlive this call.
  for (auto& n : nodes_) {
    if (n.op == Op::kInput) {
      n.value = *n.bound;
      n.bound = nullptr;
    }
  }
  return out;
}

void Graph::run(const std::map<std::string, const Tensor*>& inputs, const ParamStore& params,
                const EvalOptions& options) {
  for (auto& [name, id] : inputs_) {
    auto it = inputs.find(name);
    if (it == inputs.end()) fail(ErrorKind::kInvalidArgument, "graph input '" + name + "' is not bound");
    Node& n = nodes_[id];
    if (it->second->shape() != n.shape) {
      fail(ErrorKind::kShapeMismatch, "node #" + std::to_string(id) + " (input '" + name + "'): expected " +
                                          shape_str(n.shape) + ", got " + shape_str(it->second->shape()));
    }
    n.bound = it->second;
  }
  for (auto& [name, id] : params_) {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorKind::kInvalidArgument, "parameter '" + name + "' missing from store");
    Node& n = nodes_[id];
    if (it->second.shape() != n.shape) {
      fail(ErrorKind::kShapeMismatch, "node #" + std::to_string(id) + " (param '" + name + "'): expected " +
                                          shape_str(n.shape) + ", got " + shape_str(it->second.shape()));
    }
    n.bound = &it->second;
  }
  for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
    forward(id, options);
    const Node& n = nodes_[id];
    if (options.check_finite && !n.bound && n.op != Op::kConst && !n.value.all_finite()) {
      fail(ErrorKind::kNonFinite, "non-finite value produced by node #" + std::to_string(id) + " (" +
                                      op_name(n.op) + ")");
    }
  }
  evaluated_ = true;
}

void Graph::forward(std::uint32_t id, const EvalOptions& options) {
  Node& n = nodes_[id];
  if (n.op == Op::kInput || n.op == Op::kParam || n.op == Op::kConst) return;
  double* out = n.value.ptr();
  const std::size_t size = n.value.size();
  auto in = [&](std::size_t k) -> const Tensor& { return val(n.in[k]); };

  switch (n.op) {
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.shape()[a.rank() - 2], k = a.shape().back(), nn = b.shape().back();
      if (n.axis == 1) {
        gemm(a.ptr(), false, b.ptr(), false, out, numel(a.shape()) / k, k, nn, false);
      } else if (n.axis == 2) {
        const std::size_t batch = numel(b.shape()) / (k * nn);
        for (std::size_t i = 0; i < batch; ++i) {
          gemm(a.ptr(), false, b.ptr() + i * k * nn, false, out + i * m * nn, m, k, nn, false);
        }
      } else {
        const std::size_t batch = numel(a.shape()) / (m * k);
        for (std::size_t i = 0; i < batch; ++i) {
          gemm(a.ptr() + i * m * k, false, b.ptr() + i * k * nn, false, out + i * m * nn, m, k, nn, false);
        }
      }
      break;
    }
    case Op::kTranspose: {
      const Tensor& a = in(0);
      const std::size_t r = a.shape()[a.rank() - 2], c = a.shape().back();
      const std::size_t batch = a.size() / (r * c);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* src = a.ptr() + bi * r * c;
        double* dst = out + bi * r * c;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
      }
      break;
    }
    case Op::kAdd: {
      const double* a = in(0).ptr();
      const double* b = in(1).ptr();
      for_each_pair(n.plan, size, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = a[ia] + b[ib]; });
      break;
    }
    case Op::kSub: {
      const double* a = in(0).ptr();
      const double* b = in(1).ptr();
      for_each_pair(n.plan, size, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = a[ia] - b[ib]; });
      break;
    }
    case Op::kMul: {
      const double* a = in(0).ptr();
      const double* b = in(1).ptr();
      for_each_pair(n.plan, size, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = a[ia] * b[ib]; });
      break;
    }
    case Op::kScale: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = n.scalar * a[i];
      break;
    }
    case Op::kRelu: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case Op::kSigmoid: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
      break;
    }
    case Op::kAbs: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = std::fabs(a[i]);
      break;
    }
    case Op::kSquare: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * a[i];
      break;
    }
    case Op::kSqrt: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = std::sqrt(a[i]);
      break;
    }
    case Op::kRodriguesA: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = rodrigues_a_value(a[i]);
      break;
    }
    case Op::kRodriguesB: {
      const double* a = in(0).ptr();
      for (std::size_t i = 0; i < size; ++i) out[i] = rodrigues_b_value(a[i]);
      break;
    }
    case Op::kConcat: {
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(n.shape, 0, axis);
      const std::size_t inner = prod(n.shape, axis + 1, n.shape.size());
      const std::size_t row = n.shape[axis] * inner;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const Tensor& t = in(k);
        const std::size_t chunk = t.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(t.ptr() + o * chunk, chunk, out + o * row + offset);
        }
        offset += chunk;
      }
      break;
    }
    case Op::kReshape: {
      std::copy_n(in(0).ptr(), size, out);
      break;
    }
    case Op::kSlice: {
      const Tensor& a = in(0);
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(a.shape(), 0, axis);
      const std::size_t inner = prod(a.shape(), axis + 1, a.rank());
      const std::size_t src_row = a.shape()[axis] * inner;
      const std::size_t chunk = n.length * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.ptr() + o * src_row + n.start * inner, chunk, out + o * chunk);
      }
      break;
    }
    case Op::kSum:
    case Op::kMean: {
      const Tensor& a = in(0);
      double acc = 0.0;
      for (double v : a.data()) acc += v;
      out[0] = n.op == Op::kMean ? acc / static_cast<double>(a.size()) : acc;
      break;
    }
    case Op::kSumAxis: {
      const Tensor& a = in(0);
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(a.shape(), 0, axis);
      const std::size_t len = a.shape()[axis];
      const std::size_t inner = prod(a.shape(), axis + 1, a.rank());
      std::fill(out, out + size, 0.0);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l) {
          const double* src = a.ptr() + (o * len + l) * inner;
          double* dst = out + o * inner;
          for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
        }
      break;
    }
    case Op::kDropout: {
      const double* a = in(0).ptr();
      if (!options.training || n.scalar <= 0.0) {
        n.mask.clear();
        std::copy_n(a, size, out);
        break;
      }
      const double keep = 1.0 - n.scalar;
      SplitMix64 rng(options.dropout_seed ^ (0x9E3779B97F4A7C15ULL * (id + 1)));
      n.mask.resize(size);
      for (std::size_t i = 0; i < size; ++i) {
        n.mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        out[i] = a[i] * n.mask[i];
      }
      break;
    }
    default:
      break;
  }
}

// --- backward -------------------------------------------------------------

Tensor& Graph::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!grad_live_[id]) {
    if (n.grad.shape() != n.shape || n.grad.size() != numel(n.shape)) n.grad = Tensor(n.shape);
    else n.grad.fill(0.0);
    grad_live_[id] = 1;
  }
  return n.grad;
}

Gradients Graph::backpropagate(const TensorMap& seeds) {
  std::vector<std::pair<std::uint32_t, const Tensor*>> list;
  for (const auto& [name, t] : seeds) {
    auto it = outputs_.find(name);
    if (it == outputs_.end()) fail(ErrorKind::kInvalidArgument, "seed for unknown output '" + name + "'");
    list.emplace_back(it->second, &t);
  }
  return sweep(list);
}

Gradients Graph::backpropagate(Var scalar_output) {
  const Tensor one(nodes_.at(scalar_output.id).shape, 1.0);
  if (one.size() != 1) fail(ErrorKind::kShapeMismatch, "backpropagate(Var) needs a single-element output");
  return sweep({{scalar_output.id, &one}});
}

Gradients Graph::sweep(const std::vector<std::pair<std::uint32_t, const Tensor*>>& seeds) {
  if (!evaluated_) fail(ErrorKind::kState, "backpropagate called before evaluate");
  std::fill(grad_live_.begin(), grad_live_.end(), 0);
  for (const auto& [id, t] : seeds) {
    if (t->shape() != nodes_[id].shape) {
      fail(ErrorKind::kShapeMismatch, "seed gradient for node #" + std::to_string(id) + " has shape " +
                                          shape_str(t->shape()) + ", expected " + shape_str(nodes_[id].shape));
    }
    Tensor& g = grad_slot(id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*t)[i];
  }
  for (std::uint32_t id = static_cast<std::uint32_t>(nodes_.size()); id-- > 0;) {
    if (grad_live_[id] && nodes_[id].needs_grad) backward(id);
  }
  return collect_gradients();
}

Gradients Graph::collect_gradients() const {
  Gradients out;
  for (const auto& [name, id] : params_) {
    out.params[name] = grad_live_[id] ? nodes_[id].grad : Tensor(nodes_[id].shape);
  }
  for (const auto& [name, id] : inputs_) {
    if (!nodes_[id].requires_grad) continue;
    out.inputs[name] = grad_live_[id] ? nodes_[id].grad : Tensor(nodes_[id].shape);
  }
  return out;
}

void Graph::backward(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.in.empty()) return;
  const double* g = n.grad.ptr();
  const std::size_t size = n.grad.size();
  auto wants = [&](std::size_t k) { return nodes_[n.in[k]].needs_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return val(n.in[k]); };

  switch (n.op) {
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.shape()[a.rank() - 2], k = a.shape().back(), nn = b.shape().back();
      double* ga = wants(0) ? grad_slot(n.in[0]).ptr() : nullptr;
      double* gb = wants(1) ? grad_slot(n.in[1]).ptr() : nullptr;
      if (n.axis == 1) {
        const std::size_t rows = numel(a.shape()) / k;
        if (ga) gemm(g, false, b.ptr(), true, ga, rows, nn, k, true);
        if (gb) gemm(a.ptr(), true, g, false, gb, k, rows, nn, true);
      } else if (n.axis == 2) {
        const std::size_t batch = numel(b.shape()) / (k * nn);
        for (std::size_t i = 0; i < batch; ++i) {
          if (ga) gemm(g + i * m * nn, false, b.ptr() + i * k * nn, true, ga, m, nn, k, true);
          if (gb) gemm(a.ptr(), true, g + i * m * nn, false, gb + i * k * nn, k, m, nn, true);
        }
      } else {
        const std::size_t batch = numel(a.shape()) / (m * k);
        for (std::size_t i = 0; i < batch; ++i) {
          if (ga) gemm(g + i * m * nn, false, b.ptr() + i * k * nn, true, ga + i * m * k, m, nn, k, true);
          if (gb) gemm(a.ptr() + i * m * k, true, g + i * m * nn, false, gb + i * k * nn, k, m, nn, true);
        }
      }
      break;
    }
    case Op::kTranspose: {
      if (!wants(0)) break;
      double* ga = grad_slot(n.in[0]).ptr();
      const Shape& as = in(0).shape();
      const std::size_t r = as[as.size() - 2], c = as.back();
      const std::size_t batch = size / (r * c);
      for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[bi * r * c + i * c + j] += g[bi * r * c + j * r + i];
      break;
    }
    case Op::kAdd:
    case Op::kSub: {
      const double sign = n.op == Op::kSub ? -1.0 : 1.0;
      double* ga = wants(0) ? grad_slot(n.in[0]).ptr() : nullptr;
      double* gb = wants(1) ? grad_slot(n.in[1]).ptr() : nullptr;
      for_each_pair(n.plan, size, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        if (ga) ga[ia] += g[o];
        if (gb) gb[ib] += sign * g[o];
      });
      break;
    }
    case Op::kMul: {
      const double* a = in(0).ptr();
      const double* b = in(1).ptr();
      double* ga = wants(0) ? grad_slot(n.in[0]).ptr() : nullptr;
      double* gb = wants(1) ? grad_slot(n.in[1]).ptr() : nullptr;
      for_each_pair(n.plan, size, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        if (ga) ga[ia] += g[o] * b[ib];
        if (gb) gb[ib] += g[o] * a[ia];
      });
      break;
    }
    case Op::kConcat: {
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(n.shape, 0, axis);
      const std::size_t inner = prod(n.shape, axis + 1, n.shape.size());
      const std::size_t row = n.shape[axis] * inner;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const std::size_t chunk = nodes_[n.in[k]].shape[axis] * inner;
        if (wants(k)) {
          double* gk = grad_slot(n.in[k]).ptr();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < chunk; ++j) gk[o * chunk + j] += g[o * row + offset + j];
        }
        offset += chunk;
      }
      break;
    }
    case Op::kSlice: {
      if (!wants(0)) break;
      const Shape& as = in(0).shape();
      double* ga = grad_slot(n.in[0]).ptr();
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(as, 0, axis);
      const std::size_t inner = prod(as, axis + 1, as.size());
      const std::size_t src_row = as[axis] * inner;
      const std::size_t chunk = n.length * inner;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < chunk; ++j) ga[o * src_row + n.start * inner + j] += g[o * chunk + j];
      break;
    }
    case Op::kSumAxis: {
      if (!wants(0)) break;
      const Shape& as = in(0).shape();
      double* ga = grad_slot(n.in[0]).ptr();
      const std::size_t axis = static_cast<std::size_t>(n.axis);
      const std::size_t outer = prod(as, 0, axis);
      const std::size_t len = as[axis];
      const std::size_t inner = prod(as, axis + 1, as.size());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t j = 0; j < inner; ++j) ga[(o * len + l) * inner + j] += g[o * inner + j];
      break;
    }
    default: {
      // Elementwise unary ops and reductions to a scalar.
      if (!wants(0)) break;
      const Tensor& at = in(0);
      const double* a = at.ptr();
      double* ga = grad_slot(n.in[0]).ptr();
      const std::size_t na = at.size();
      const double* y = n.value.ptr();
      switch (n.op) {
        case Op::kScale:
          for (std::size_t i = 0; i < na; ++i) ga[i] += n.scalar * g[i];
          break;
        case Op::kRelu:
          for (std::size_t i = 0; i < na; ++i) ga[i] += a[i] > 0.0 ? g[i] : 0.0;
          break;
        case Op::kSigmoid:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case Op::kAbs:
          for (std::size_t i = 0; i < na; ++i) ga[i] += a[i] > 0.0 ? g[i] : (a[i] < 0.0 ? -g[i] : 0.0);
          break;
        case Op::kSquare:
          for (std::size_t i = 0; i < na; ++i) ga[i] += 2.0 * a[i] * g[i];
          break;
        case Op::kSqrt:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i] * 0.5 / y[i];
          break;
        case Op::kRodriguesA:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i] * rodrigues_a_deriv(a[i]);
          break;
        case Op::kRodriguesB:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i] * rodrigues_b_deriv(a[i]);
          break;
        case Op::kReshape:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
          break;
        case Op::kSum:
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[0];
          break;
        case Op::kMean: {
          const double w = g[0] / static_cast<double>(na);
          for (std::size_t i = 0; i < na; ++i) ga[i] += w;
          break;
        }
        case Op::kDropout:
          if (n.mask.empty()) {
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
          } else {
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i] * n.mask[i];
          }
          break;
        default:
          break;
      }
    }
  }
}

// --- free builders --------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = common_owner(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) g.shape_error(Op::kMatMul, "operands must have rank >= 2");
  const std::size_t m = as[as.size() - 2], k = as.back(), k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) {
    g.shape_error(Op::kMatMul, "inner dimensions differ: " + shape_str(as) + " x " + shape_str(bs));
  }
  int mode = 0;
  Shape out;
  if (bs.size() == 2) {
    mode = 1;
    out.assign(as.begin(), as.end() - 2);
  } else if (as.size() == 2) {
    mode = 2;
    out.assign(bs.begin(), bs.end() - 2);
  } else {
    if (!std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2)) {
      g.shape_error(Op::kMatMul, "batch dimensions differ: " + shape_str(as) + " x " + shape_str(bs));
    }
    out.assign(as.begin(), as.end() - 2);
  }
  out.push_back(m);
  out.push_back(n);
  Var v = g.add_node(Op::kMatMul, {a.id, b.id}, out);
  g.set_attrs(v, mode, 0, 0, 0.0);
  return v;
}

Var transpose(Var a) {
  Graph& g = owner(a);
  Shape s = a.shape();
  if (s.size() < 2) g.shape_error(Op::kTranspose, "rank must be >= 2");
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  return g.add_node(Op::kTranspose, {a.id}, s);
}

Var operator+(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var operator-(Var a, Var b) { return binary(Op::kSub, a, b); }
Var operator*(Var a, Var b) { return binary(Op::kMul, a, b); }

Var scale(Var a, double factor) {
  Var v = unary(Op::kScale, a);
  owner(a).set_attrs(v, 0, 0, 0, factor);
  return v;
}

Var operator-(Var a) { return scale(a, -1.0); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var abs(Var a) { return unary(Op::kAbs, a); }
Var square(Var a) { return unary(Op::kSquare, a); }
Var sqrt(Var a) { return unary(Op::kSqrt, a); }
Var rodrigues_a(Var s) { return unary(Op::kRodriguesA, s); }
Var rodrigues_b(Var s) { return unary(Op::kRodriguesB, s); }

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) fail(ErrorKind::kInvalidArgument, "concat of zero tensors");
  Graph& g = owner(parts[0]);
  const Shape& first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out = first;
  out[ax] = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    if (p.graph != &g) fail(ErrorKind::kInvalidArgument, "variables belong to different graphs");
    const Shape& s = p.shape();
    if (s.size() != first.size()) g.shape_error(Op::kConcat, "rank mismatch " + shape_str(s) + " vs " + shape_str(first));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != first[d]) {
        g.shape_error(Op::kConcat, "shape mismatch " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    out[ax] += s[ax];
    ids.push_back(p.id);
  }
  Var v = g.add_node(Op::kConcat, std::move(ids), out);
  g.set_attrs(v, static_cast<int>(ax), 0, 0, 0.0);
  return v;
}

Var reshape(Var a, Shape shape) {
  Graph& g = owner(a);
  if (numel(shape) != numel(a.shape())) {
    g.shape_error(Op::kReshape, "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return g.add_node(Op::kReshape, {a.id}, std::move(shape));
}

Var slice(Var a, int axis, std::size_t start, std::size_t length) {
  Graph& g = owner(a);
  const std::size_t ax = normalize_axis(axis, a.shape().size());
  if (start + length > a.shape()[ax] || length == 0) {
    g.shape_error(Op::kSlice, "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                  ") outside axis of size " + std::to_string(a.shape()[ax]));
  }
  Shape out = a.shape();
  out[ax] = length;
  Var v = g.add_node(Op::kSlice, {a.id}, out);
  g.set_attrs(v, static_cast<int>(ax), start, length, 0.0);
  return v;
}

Var sum(Var a) { return owner(a).add_node(Op::kSum, {a.id}, Shape{}); }
Var mean(Var a) { return owner(a).add_node(Op::kMean, {a.id}, Shape{}); }

Var sum_axis(Var a, int axis, bool keepdim) {
  Graph& g = owner(a);
  const std::size_t ax = normalize_axis(axis, a.shape().size());
  Shape out = a.shape();
  if (keepdim) out[ax] = 1;
  else out.erase(out.begin() + static_cast<std::ptrdiff_t>(ax));
  Var v = g.add_node(Op::kSumAxis, {a.id}, out);
  g.set_attrs(v, static_cast<int>(ax), 0, 0, 0.0);
  return v;
}

Var dropout(Var a, double rate) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::kInvalidArgument, "dropout rate must be in [0, 1)");
  Var v = unary(Op::kDropout, a);
  owner(a).set_attrs(v, 0, 0, 0, rate);
  return v;
}

}  // namespace hmrk::ad
