#include "satlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "satlab/errors.hpp"

namespace sat {

const char* to_string(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Negate: return "negate";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Reshape: return "reshape";
    case OpKind::BiasAdd: return "bias_add";
    case OpKind::Activation: return "activation";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::leaf(Tensor value, std::string name, bool requires_grad) {
  const NodeId id = nodes_.size();
  if (!name.empty()) {
    if (names_.contains(name)) throw ValueError("duplicate leaf name '" + name + "'");
    names_.emplace(name, id);
  }
  nodes_.push_back(Node{OpKind::Leaf, {}, std::move(value), {}, std::move(name), requires_grad});
  return Var(this, id);
}

Var Graph::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  const NodeId id = nodes_.size();
  Node node{kind, {}, std::move(value), std::move(backward), {}, false};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.graph() != this || v.id() >= id)
      throw ValueError(std::string("op '") + to_string(kind) + "' input is not an earlier node");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

std::optional<NodeId> Graph::find(std::string_view name) const {
  auto it = names_.find(name);
  if (it == names_.end()) return std::nullopt;
  return it->second;
}

Tensor GradientMap::of(NodeId id) const {
  if (id >= grads_.size()) throw ValueError("node id out of range");
  if (grads_[id].empty()) return Tensor::zeros_like(graph_->value(id));
  return grads_[id];
}

Tensor GradientMap::param(std::string_view name) const {
  auto id = graph_->find(name);
  if (!id) throw ValueError("no leaf named '" + std::string(name) + "'");
  return of(*id);
}

std::map<std::string, Tensor> GradientMap::named() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : graph_->names_) out.emplace(name, of(id));
  return out;
}

namespace {

void accumulate(Tensor& into, const Tensor& g) {
  if (into.empty()) {
    into = g;
    return;
  }
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

GradientMap backward(const Graph& graph, Var loss) {
  if (&loss.graph() != &graph) throw ValueError("loss node belongs to a different graph");
  if (loss.value().size() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));

  GradientMap result(graph);
  result.grads_[loss.id()] = Tensor(loss.shape(), 1.0);
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const auto& node = graph.nodes_[id];
    if (!node.backward || !node.requires_grad || result.grads_[id].empty()) continue;
    std::vector<Tensor> input_grads = node.backward(result.grads_[id]);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (i >= input_grads.size() || input_grads[i].empty()) continue;
      const NodeId in = node.inputs[i];
      if (!graph.nodes_[in].requires_grad) continue;
      accumulate(result.grads_[in], input_grads[i]);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

const char* op_name(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::Add: return "add";
    case ElementwiseOp::Sub: return "sub";
    case ElementwiseOp::Mul: return "mul";
  }
  return "?";
}

OpKind op_kind(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::Add: return OpKind::Add;
    case ElementwiseOp::Sub: return OpKind::Sub;
    case ElementwiseOp::Mul: return OpKind::Mul;
  }
  return OpKind::Add;
}

}  // namespace

Var elementwise(ElementwiseOp op, Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = bv.size() == 1 && av.shape() != bv.shape();
  if (!broadcast && av.shape() != bv.shape())
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(av.shape()) +
                     " vs " + shape_string(bv.shape()));

  Tensor out(av.shape());
  const std::size_t n = av.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = broadcast ? bv[0] : bv[i];
    switch (op) {
      case ElementwiseOp::Add: out[i] = av[i] + y; break;
      case ElementwiseOp::Sub: out[i] = av[i] - y; break;
      case ElementwiseOp::Mul: out[i] = av[i] * y; break;
    }
  }

  Graph* g = &a.graph();
  const NodeId ia = a.id(), ib = b.id();
  return g->record(op_kind(op), {a, b}, std::move(out),
                   [g, ia, ib, op, broadcast](const Tensor& grad) {
                     const Tensor& av = g->value(ia);
                     const Tensor& bv = g->value(ib);
                     const std::size_t n = grad.size();
                     Tensor ga(av.shape());
                     Tensor gb(bv.shape());
                     for (std::size_t i = 0; i < n; ++i) {
                       const std::size_t j = broadcast ? 0 : i;
                       switch (op) {
                         case ElementwiseOp::Add:
                           ga[i] = grad[i];
                           gb[j] += grad[i];
                           break;
                         case ElementwiseOp::Sub:
                           ga[i] = grad[i];
                           gb[j] -= grad[i];
                           break;
                         case ElementwiseOp::Mul:
                           ga[i] = grad[i] * bv[j];
                           gb[j] += grad[i] * av[i];
                           break;
                       }
                     }
                     return std::vector<Tensor>{std::move(ga), std::move(gb)};
                   });
}

Var elementwise(ElementwiseOp op, Var a, double b) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    switch (op) {
      case ElementwiseOp::Add: out[i] = av[i] + b; break;
      case ElementwiseOp::Sub: out[i] = av[i] - b; break;
      case ElementwiseOp::Mul: out[i] = av[i] * b; break;
    }
  }
  const OpKind kind = op == ElementwiseOp::Mul ? OpKind::Scale : OpKind::AddScalar;
  const double factor = op == ElementwiseOp::Mul ? b : 1.0;
  return a.graph().record(kind, {a}, std::move(out), [factor](const Tensor& grad) {
    Tensor ga(grad.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) ga[i] = grad[i] * factor;
    return std::vector<Tensor>{std::move(ga)};
  });
}

Var add(Var a, Var b) { return elementwise(ElementwiseOp::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(ElementwiseOp::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(ElementwiseOp::Mul, a, b); }
Var add(Var a, double b) { return elementwise(ElementwiseOp::Add, a, b); }
Var scale(Var a, double factor) { return elementwise(ElementwiseOp::Mul, a, factor); }

Var negate(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = -av[i];
  return a.graph().record(OpKind::Negate, {a}, std::move(out), [](const Tensor& grad) {
    Tensor ga(grad.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) ga[i] = -grad[i];
    return std::vector<Tensor>{std::move(ga)};
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul_forward(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &c[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = &b[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul_forward(a.value(), b.value());
  Graph* g = &a.graph();
  const NodeId ia = a.id(), ib = b.id();
  return g->record(OpKind::MatMul, {a, b}, std::move(out), [g, ia, ib](const Tensor& grad) {
    const Tensor& av = g->value(ia);
    const Tensor& bv = g->value(ib);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor ga, gb;
    if (g->requires_grad(ia)) {
      // dA = dC * B^T
      ga = Tensor({m, k});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grad[i * n + j] * bv[p * n + j];
          ga[i * k + p] = s;
        }
    }
    if (g->requires_grad(ib)) {
      // dB = A^T * dC
      gb = Tensor({k, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * grad[i * n + j];
        }
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

namespace {
Tensor transpose2d(const Tensor& a) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}
}  // namespace

Var transpose(Var a) {
  if (a.value().rank() != 2)
    throw ShapeError("transpose needs a rank-2 tensor, got " + shape_string(a.shape()));
  return a.graph().record(OpKind::Transpose, {a}, transpose2d(a.value()),
                          [](const Tensor& grad) { return std::vector<Tensor>{transpose2d(grad)}; });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, oh, ow, stride, pad;
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, std::size_t stride, std::size_t pad) {
  if (in.size() != 4 || k.size() != 4)
    throw ShapeError("conv2d: expected input [N,C,H,W] and kernel [F,C,kh,kw], got " +
                     shape_string(in) + " and " + shape_string(k));
  if (in[1] != k[1])
    throw ShapeError("conv2d: channel mismatch " + shape_string(in) + " vs " + shape_string(k));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t ph = in[2] + 2 * pad, pw = in[3] + 2 * pad;
  if (ph < k[2] || pw < k[3])
    throw ShapeError("conv2d: non-positive output size for input " + shape_string(in) +
                     ", kernel " + shape_string(k) + ", pad " + std::to_string(pad));
  return {in[0], in[1], in[2], in[3], k[0], k[2], k[3], (ph - k[2]) / stride + 1,
          (pw - k[3]) / stride + 1, stride, pad};
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                      std::size_t pad) {
  const auto g = conv_geometry(input.shape(), kernel.shape(), stride, pad);
  Tensor out({g.n, g.f, g.oh, g.ow});
  const auto ipad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double s = 0.0;
          for (std::size_t c = 0; c < g.c; ++c)
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - ipad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - ipad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                s += input[((n * g.c + c) * g.h + iy) * g.w + ix] *
                     kernel[((f * g.c + c) * g.kh + ky) * g.kw + kx];
              }
            }
          out[((n * g.f + f) * g.oh + oy) * g.ow + ox] = s;
        }
  return out;
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t pad) {
  Tensor out = conv2d_forward(input.value(), kernel.value(), stride, pad);
  Graph* gr = &input.graph();
  const NodeId ii = input.id(), ik = kernel.id();
  return gr->record(
      OpKind::Conv2d, {input, kernel}, std::move(out), [gr, ii, ik, stride, pad](const Tensor& grad) {
        const Tensor& in = gr->value(ii);
        const Tensor& k = gr->value(ik);
        const auto g = conv_geometry(in.shape(), k.shape(), stride, pad);
        const bool want_in = gr->requires_grad(ii);
        const bool want_k = gr->requires_grad(ik);
        Tensor gin, gk;
        if (want_in) gin = Tensor(in.shape());
        if (want_k) gk = Tensor(k.shape());
        const auto ipad = static_cast<std::ptrdiff_t>(g.pad);
        for (std::size_t n = 0; n < g.n; ++n)
          for (std::size_t f = 0; f < g.f; ++f)
            for (std::size_t oy = 0; oy < g.oh; ++oy)
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const double go = grad[((n * g.f + f) * g.oh + oy) * g.ow + ox];
                if (go == 0.0) continue;
                for (std::size_t c = 0; c < g.c; ++c)
                  for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - ipad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                      const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - ipad;
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                      const std::size_t in_idx = ((n * g.c + c) * g.h + iy) * g.w + ix;
                      const std::size_t k_idx = ((f * g.c + c) * g.kh + ky) * g.kw + kx;
                      if (want_in) gin[in_idx] += go * k[k_idx];
                      if (want_k) gk[k_idx] += go * in[in_idx];
                    }
                  }
              }
        return std::vector<Tensor>{std::move(gin), std::move(gk)};
      });
}

Var bias_add(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() < 2 || bv.rank() != 1 || xv.dim(1) != bv.dim(0))
    throw ShapeError("bias_add: bias " + shape_string(bv.shape()) + " does not match axis 1 of " +
                     shape_string(xv.shape()));
  const std::size_t outer = xv.dim(0), channels = xv.dim(1);
  const std::size_t inner = xv.size() / (outer * channels);
  Tensor out = xv;
  for (std::size_t n = 0; n < outer; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = &out[(n * channels + c) * inner];
      for (std::size_t i = 0; i < inner; ++i) p[i] += bv[c];
    }
  return x.graph().record(OpKind::BiasAdd, {x, b}, std::move(out),
                          [outer, channels, inner](const Tensor& grad) {
                            Tensor gb({channels});
                            for (std::size_t n = 0; n < outer; ++n)
                              for (std::size_t c = 0; c < channels; ++c) {
                                const double* p = &grad[(n * channels + c) * inner];
                                for (std::size_t i = 0; i < inner; ++i) gb[c] += p[i];
                              }
                            return std::vector<Tensor>{grad, std::move(gb)};
                          });
}

Var reshape(Var a, Shape shape) {
  Shape original = a.shape();
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record(OpKind::Reshape, {a}, std::move(out),
                          [original](const Tensor& grad) {
                            return std::vector<Tensor>{grad.reshaped(original)};
                          });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

Var reduce(Var a, std::optional<std::size_t> axis, bool average) {
  const Tensor& av = a.value();
  const OpKind kind = average ? OpKind::Mean : OpKind::Sum;
  if (!axis) {
    double s = 0.0;
    for (double v : av.data()) s += v;
    const double n = static_cast<double>(av.size());
    if (average) s /= n;
    Shape shape = av.shape();
    return a.graph().record(kind, {a}, Tensor::scalar(s), [shape, average, n](const Tensor& grad) {
      return std::vector<Tensor>{Tensor(shape, average ? grad[0] / n : grad[0])};
    });
  }
  if (*axis >= av.rank())
    throw ShapeError("reduce: axis " + std::to_string(*axis) + " out of range for shape " +
                     shape_string(av.shape()));
  const Shape& in_shape = av.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < *axis; ++i) outer *= in_shape[i];
  for (std::size_t i = *axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  const std::size_t len = in_shape[*axis];
  Shape out_shape;
  for (std::size_t i = 0; i < in_shape.size(); ++i)
    if (i != *axis) out_shape.push_back(in_shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + k) * inner + i];
  if (average)
    for (auto& v : out.data()) v /= static_cast<double>(len);

  return a.graph().record(kind, {a}, std::move(out),
                          [in_shape, outer, inner, len, average](const Tensor& grad) {
                            Tensor ga(in_shape);
                            const double f = average ? 1.0 / static_cast<double>(len) : 1.0;
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t k = 0; k < len; ++k)
                                for (std::size_t i = 0; i < inner; ++i)
                                  ga[(o * len + k) * inner + i] = grad[o * inner + i] * f;
                            return std::vector<Tensor>{std::move(ga)};
                          });
}

}  // namespace

Var sum(Var a, std::optional<std::size_t> axis) { return reduce(a, axis, false); }
Var mean(Var a, std::optional<std::size_t> axis) { return reduce(a, axis, true); }

// ---------------------------------------------------------------------------
// Finite differences

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h) {
  if (!(h > 0.0)) throw ValueError("finite_difference_grad: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ValueError("finite_difference_grad: non-finite function value at coordinate " +
                       std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape())
    throw ShapeError("max_relative_error: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  double scale = 0.0;
  if (floor > 0.0)
    for (double v : b.data()) scale = std::max(scale, std::abs(v));
  const double least = floor * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(b[i]), least});
    if (den == 0.0) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / den);
  }
  return worst;
}

}  // namespace sat
