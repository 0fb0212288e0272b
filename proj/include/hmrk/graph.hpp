#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmrk/tensor.hpp"

namespace hmrk::ad {

// Named trainable tensors. std::map keeps iteration (and hence every
// reduction over parameters) in a fixed order.
using ParamStore = std::map<std::string, Tensor>;
using TensorMap = std::map<std::string, Tensor>;

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConst,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kRelu,
  kSigmoid,
  kAbs,
  kSquare,
  kSqrt,
  kRodriguesA,
  kRodriguesB,
  kConcat,
  kReshape,
  kSlice,
  kSum,
  kSumAxis,
  kMean,
  kDropout,
};

const char* op_name(Op op);

class Graph;

// Handle to a node; cheap to copy.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
};

struct EvalOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  bool check_finite = true;
};

struct Gradients {
  TensorMap params;  // every parameter referenced by the graph
  TensorMap inputs;  // inputs declared with requires_grad
};

// Broadcasting description for elementwise binary nodes.
struct BroadcastPlan {
  enum class Kind : std::uint8_t { kSame, kRightTiled, kLeftTiled, kRightRepeated, kLeftRepeated, kGeneral };
  Kind kind = Kind::kSame;
  std::size_t period = 1;
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

// A static computation graph. Nodes are appended in construction order, which
// is a valid topological order; evaluate() replays them and backpropagate()
// walks them in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(const std::string& name, Shape shape, bool requires_grad = false);
  // Repeated calls with the same name return the same node.
  Var param(const std::string& name, Shape shape);
  Var constant(Tensor value);

  void mark_output(const std::string& name, Var v);
  Var output(const std::string& name) const;
  bool has_output(const std::string& name) const { return outputs_.count(name) != 0; }

  // Runs the forward pass. Input tensors must outlive the graph's use of them
  // when bound through run(); evaluate() copies requested outputs.
  TensorMap evaluate(const TensorMap& inputs, const ParamStore& params, const EvalOptions& options = {});
  void run(const std::map<std::string, const Tensor*>& inputs, const ParamStore& params,
           const EvalOptions& options = {});

  const Tensor& value(Var v) const;

  // Reverse sweep seeded by d(objective)/d(output) for each named output.
  Gradients backpropagate(const TensorMap& seeds);
  // Convenience: seed a scalar node with 1.
  Gradients backpropagate(Var scalar_output);

  // Sign (> 0) of every relu and abs argument from the last forward pass.
  std::vector<bool> kink_pattern() const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  const Shape& shape_of(std::uint32_t id) const { return nodes_.at(id).shape; }
  std::vector<std::string> param_names() const;
  std::vector<std::string> input_names() const;

  // Node construction, used by the free functions below.
  Var add_node(Op op, std::vector<std::uint32_t> inputs, Shape shape);
  void set_attrs(Var v, int axis, std::size_t start, std::size_t length, double scalar);
  void set_plan(Var v, BroadcastPlan plan);
  [[noreturn]] void shape_error(Op op, const std::string& detail) const;

 private:
  struct Node {
    Op op = Op::kConst;
    std::vector<std::uint32_t> in;
    Shape shape;
    std::string name;
    int axis = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    double scalar = 0.0;
    bool requires_grad = false;  // leaf flag
    bool needs_grad = false;     // some ancestor requires grad
    Tensor value;
    Tensor grad;
    const Tensor* bound = nullptr;
    std::vector<double> mask;
    BroadcastPlan plan;
  };

  const Tensor& val(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.bound ? *n.bound : n.value;
  }
  void forward(std::uint32_t id, const EvalOptions& options);
  void backward(std::uint32_t id);
  Tensor& grad_slot(std::uint32_t id);
  Gradients collect_gradients() const;
  Gradients sweep(const std::vector<std::pair<std::uint32_t, const Tensor*>>& seeds);

  std::vector<Node> nodes_;
  std::vector<char> grad_live_;
  std::map<std::string, std::uint32_t> outputs_;
  std::map<std::string, std::uint32_t> params_;
  std::map<std::string, std::uint32_t> inputs_;
  bool evaluated_ = false;
};

// --- primitives -----------------------------------------------------------

// a[..., m, k] x b[..., k, n]; batch dims must match, or one side is rank 2
// and is shared across the other's batch.
Var matmul(Var a, Var b);
// Swaps the last two axes.
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var scale(Var a, double factor);
Var operator-(Var a);
Var relu(Var a);
Var sigmoid(Var a);
// Subgradient 0 at the origin.
Var abs(Var a);
Var square(Var a);
Var sqrt(Var a);
// Rodrigues coefficients as functions of the squared angle s = |w|^2:
// a(s) = sin(sqrt s)/sqrt s and b(s) = (1 - cos(sqrt s))/s, both smooth at 0.
Var rodrigues_a(Var squared_angle);
Var rodrigues_b(Var squared_angle);
Var concat(const std::vector<Var>& parts, int axis);
Var reshape(Var a, Shape shape);
Var slice(Var a, int axis, std::size_t start, std::size_t length);
// Sum of all elements, rank-0 result.
Var sum(Var a);
Var sum_axis(Var a, int axis, bool keepdim = true);
Var mean(Var a);
// Inverted dropout with a seeded mask; identity outside training.
Var dropout(Var a, double rate);

// Scalar helpers shared with the non-graph rotation code.
double rodrigues_a_value(double s);
double rodrigues_b_value(double s);
double rodrigues_a_deriv(double s);
double rodrigues_b_deriv(double s);

}  // namespace hmrk::ad
