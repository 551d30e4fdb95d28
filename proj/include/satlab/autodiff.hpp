#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satlab/tensor.hpp"

namespace sat {

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  Negate,
  AddScalar,
  MatMul,
  Transpose,
  Conv2d,
  Sum,
  Mean,
  Reshape,
  BiasAdd,
  Activation,
  CrossEntropy,
};

const char* to_string(OpKind kind) noexcept;

class Graph;
class GradientMap;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  NodeId id() const noexcept { return id_; }
  Graph& graph() const noexcept { return *graph_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

GradientMap backward(const Graph& graph, Var loss);

/// Define-by-run tape. Nodes are appended in topological order; each op
/// node keeps its forward value and a closure producing input gradients.
///
/// A graph hands out raw pointers to itself through Var and the recorded
/// closures, so it is neither copyable nor movable.
class Graph {
 public:
  /// Maps the output gradient to one gradient per input. An empty Tensor
  /// stands for "no gradient" (input does not require one).
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Inputs and parameters. Named leaves are addressable from GradientMap.
  Var leaf(Tensor value, std::string name = {}, bool requires_grad = true);

  /// Appends an op node. Used by every op, including ones defined outside
  /// this header (activations, losses).
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  std::optional<NodeId> find(std::string_view name) const;

 private:
  friend class GradientMap;
  friend GradientMap backward(const Graph& graph, Var loss);

  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    BackwardFn backward;
    std::string name;
    bool requires_grad;
  };
  std::deque<Node> nodes_;  // stable references across appends
  std::map<std::string, NodeId, std::less<>> names_;
};

/// Result of a backward pass. Nodes the loss does not depend on report
/// exactly-zero gradients of their value's shape.
class GradientMap {
 public:
  Tensor operator[](Var v) const { return of(v.id()); }
  Tensor of(NodeId id) const;
  Tensor param(std::string_view name) const;
  /// Gradients of every named leaf.
  std::map<std::string, Tensor> named() const;

 private:
  friend GradientMap backward(const Graph& graph, Var loss);
  explicit GradientMap(const Graph& graph) : graph_(&graph), grads_(graph.size()) {}

  const Graph* graph_;
  std::vector<Tensor> grads_;
};

/// Reverse-mode sweep from a scalar loss node.
GradientMap backward(const Graph& graph, Var loss);

enum class ElementwiseOp { Add, Sub, Mul };

/// Shapes must match exactly, or `b` must hold a single element.
Var elementwise(ElementwiseOp op, Var a, Var b);
Var elementwise(ElementwiseOp op, Var a, double b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add(Var a, double b);
Var scale(Var a, double factor);
Var negate(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return negate(a); }

Var matmul(Var a, Var b);
Var transpose(Var a);

/// Cross-correlation (no kernel flip). input [N,C,H,W], kernel [F,C,kh,kw].
Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t pad);

/// Adds b[c] to every element of x whose axis-1 index is c.
Var bias_add(Var x, Var b);

Var reshape(Var a, Shape shape);

/// Without an axis the result has shape [1]; with one, the axis is removed
/// (a rank-1 input reduces to shape [1]).
Var sum(Var a, std::optional<std::size_t> axis = std::nullopt);
Var mean(Var a, std::optional<std::size_t> axis = std::nullopt);

// Plain-tensor kernels shared by the graph ops and by test oracles.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                      std::size_t pad);
Tensor matmul_forward(const Tensor& a, const Tensor& b);

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor * max_k |b_k|); coordinates
/// where the denominator is zero count as 0. b is the reference.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 0.0);

}  // namespace sat
