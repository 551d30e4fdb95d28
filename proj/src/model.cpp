#include "satlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"

namespace sat {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_parametric(const LayerSpec& layer) { return !std::holds_alternative<Flatten>(layer); }

Shape layer_output(const LayerSpec& layer, const Shape& in, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  return std::visit(
      overloaded{
          [&](const Dense& d) -> Shape {
            if (d.in == 0 || d.out == 0) throw ValueError(where + ": dense dims must be positive");
            if (in.size() != 1 || in[0] != d.in)
              throw ShapeError(where + ": dense expects input [" + std::to_string(d.in) +
                               "], got " + shape_string(in));
            return {d.out};
          },
          [&](const Conv& c) -> Shape {
            if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0)
              throw ValueError(where + ": conv dims must be positive");
            if (in.size() != 3 || in[0] != c.in_channels)
              throw ShapeError(where + ": conv expects [" + std::to_string(c.in_channels) +
                               ",H,W], got " + shape_string(in));
            const std::size_t ph = in[1] + 2 * c.pad, pw = in[2] + 2 * c.pad;
            if (ph < c.kernel || pw < c.kernel)
              throw ShapeError(where + ": non-positive conv output for input " + shape_string(in));
            return {c.out_channels, (ph - c.kernel) / c.stride + 1, (pw - c.kernel) / c.stride + 1};
          },
          [&](const Flatten&) -> Shape { return {numel(in)}; },
      },
      layer);
}

}  // namespace

void ModelSpec::validate() const {
  if (class_count < 2) throw ValueError("model: class_count must be at least 2");
  if (layers.empty()) throw ValueError("model: no layers");
  if (input_shape.empty()) throw ValueError("model: input_shape is empty");
  for (auto d : input_shape)
    if (d == 0) throw ValueError("model: input_shape dims must be positive");
  activation.forward.validate();
  activation.backward.validate();
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) s = layer_output(layers[i], s, i);
  if (s.size() != 1 || s[0] != class_count)
    throw ShapeError("model: final output " + shape_string(s) + " does not match class_count " +
                     std::to_string(class_count));
  if (std::ranges::none_of(layers, is_parametric)) throw ValueError("model: no parametric layer");
}

Shape ModelSpec::shape_after(std::size_t i) const {
  Shape s = input_shape;
  for (std::size_t k = 0; k <= i && k < layers.size(); ++k) s = layer_output(layers[k], s, k);
  return s;
}

bool ModelSpec::learnable_alpha() const noexcept {
  return activation.forward.kind == ActivationKind::SmoothReLU ||
         activation.backward.kind == ActivationKind::SmoothReLU;
}

std::vector<std::size_t> ModelSpec::activated_layers() const {
  std::vector<std::size_t> out;
  std::size_t last = layers.size();
  for (std::size_t i = layers.size(); i-- > 0;)
    if (is_parametric(layers[i])) {
      last = i;
      break;
    }
  for (std::size_t i = 0; i < last; ++i)
    if (is_parametric(layers[i])) out.push_back(i);
  return out;
}

ModelSpec default_mlp(Shape input_shape, std::size_t classes, std::vector<std::size_t> hidden,
                      ActivationPair activation) {
  ModelSpec spec;
  spec.activation = activation;
  spec.class_count = classes;
  spec.input_shape = input_shape;
  std::size_t width = numel(input_shape);
  if (input_shape.size() != 1) spec.layers.emplace_back(Flatten{});
  for (auto h : hidden) {
    spec.layers.emplace_back(Dense{width, h});
    width = h;
  }
  spec.layers.emplace_back(Dense{width, classes});
  spec.validate();
  return spec;
}

ModelSpec default_cnn(Shape input_shape, std::size_t classes, std::vector<std::size_t> channels,
                      ActivationPair activation) {
  if (input_shape.size() != 3) throw ShapeError("default_cnn needs a [C,H,W] input shape");
  ModelSpec spec;
  spec.activation = activation;
  spec.class_count = classes;
  spec.input_shape = input_shape;
  std::size_t in_ch = input_shape[0];
  for (auto ch : channels) {
    spec.layers.emplace_back(Conv{in_ch, ch, 3, 2, 1});
    in_ch = ch;
  }
  spec.layers.emplace_back(Flatten{});
  const Shape flat = spec.shape_after(spec.layers.size() - 1);
  spec.layers.emplace_back(Dense{flat[0], classes});
  spec.validate();
  return spec;
}

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }
std::string alpha_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".alpha"; }
bool is_alpha_param(std::string_view name) noexcept { return name.ends_with(".alpha"); }

namespace {

struct ParamShapes {
  Shape weight;
  std::size_t out;
  std::size_t fan_in;
};

ParamShapes param_shapes(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const Dense& d) { return ParamShapes{{d.out, d.in}, d.out, d.in}; },
                        [](const Conv& c) {
                          return ParamShapes{{c.out_channels, c.in_channels, c.kernel, c.kernel},
                                             c.out_channels,
                                             c.in_channels * c.kernel * c.kernel};
                        },
                        [](const Flatten&) { return ParamShapes{{}, 0, 0}; },
                    },
                    layer);
}

double initial_alpha(const ModelSpec& spec) {
  if (spec.activation.forward.kind == ActivationKind::SmoothReLU) return spec.activation.forward.alpha;
  return spec.activation.backward.alpha;
}

}  // namespace

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "init"));
  ModelParams params;
  const auto activated = spec.activated_layers();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!is_parametric(spec.layers[i])) continue;
    const auto ps = param_shapes(spec.layers[i]);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(ps.fan_in)));
    Tensor w(ps.weight);
    for (auto& v : w.data()) v = normal(rng);
    params.emplace(weight_name(i), std::move(w));
    params.emplace(bias_name(i), Tensor({ps.out}));
    if (spec.learnable_alpha() && std::ranges::find(activated, i) != activated.end())
      params.emplace(alpha_name(i), Tensor::scalar(initial_alpha(spec)));
  }
  return params;
}

void check_params(const ModelSpec& spec, const ModelParams& params) {
  spec.validate();
  std::size_t expected = 0;
  const auto activated = spec.activated_layers();
  auto expect = [&](const std::string& name, const Shape& shape) {
    ++expected;
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
    if (it->second.shape() != shape)
      throw ShapeError("parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                       ", model expects " + shape_string(shape));
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!is_parametric(spec.layers[i])) continue;
    const auto ps = param_shapes(spec.layers[i]);
    expect(weight_name(i), ps.weight);
    expect(bias_name(i), {ps.out});
    if (spec.learnable_alpha() && std::ranges::find(activated, i) != activated.end())
      expect(alpha_name(i), {1});
  }
  if (expected != params.size())
    throw ShapeError("parameter set has " + std::to_string(params.size()) +
                     " entries, model expects " + std::to_string(expected));
}

ParamVars bind_params(Graph& graph, const ModelParams& params, bool requires_grad) {
  ParamVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, graph.leaf(value, name, requires_grad));
  return vars;
}

Var forward(const ModelSpec& spec, const ParamVars& params, Var x, const ActivationPair& pair) {
  Shape expected{0};
  expected.insert(expected.end(), spec.input_shape.begin(), spec.input_shape.end());
  const Shape& got = x.shape();
  if (got.size() != expected.size() || !std::equal(got.begin() + 1, got.end(), expected.begin() + 1))
    throw ShapeError("forward: input " + shape_string(got) + " does not match model input [N," +
                     shape_string(spec.input_shape).substr(1));
  const std::size_t batch = got[0];

  auto param = [&](const std::string& name) -> Var {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("forward: missing parameter '" + name + "'");
    return it->second;
  };

  const auto activated = spec.activated_layers();
  Var h = x;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (std::holds_alternative<Flatten>(layer)) {
      h = reshape(h, {batch, h.value().size() / batch});
      continue;
    }
    if (const auto* c = std::get_if<Conv>(&layer)) {
      h = conv2d(h, param(weight_name(i)), c->stride, c->pad);
    } else {
      h = matmul(h, transpose(param(weight_name(i))));
    }
    h = bias_add(h, param(bias_name(i)));
    if (std::ranges::find(activated, i) != activated.end()) {
      std::optional<Var> alpha;
      if (auto it = params.find(alpha_name(i)); it != params.end()) alpha = it->second;
      h = activate(h, pair, alpha);
    }
  }
  return h;
}

Tensor predict_logits(const ModelSpec& spec, const ModelParams& params, const Tensor& x) {
  Graph g;
  const auto vars = bind_params(g, params, false);
  return forward(spec, vars, g.leaf(x, {}, false), spec.activation).value();
}

std::vector<std::size_t> predict(const ModelSpec& spec, const ModelParams& params, const Tensor& x) {
  const Tensor logits = predict_logits(spec, params, x);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits[i * c];
    out[i] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

namespace {

void check_labels(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy: logits must be [N,C], got " + shape_string(logits.shape()));
  if (labels.size() != logits.dim(0))
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(logits.dim(0)));
  for (auto y : labels)
    if (y >= logits.dim(1))
      throw ValueError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                       std::to_string(logits.dim(1)) + ")");
}

// Per-row log-sum-exp.
std::vector<double> log_normalizers(const Tensor& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<double> lse(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits[i * c];
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    lse[i] = m + std::log(s);
  }
  return lse;
}

}  // namespace

double cross_entropy_value(const Tensor& logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto lse = log_normalizers(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss += lse[i] - logits[i * c + labels[i]];
  return loss / static_cast<double>(n);
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  const double loss = cross_entropy_value(z, labels);
  const std::size_t n = z.dim(0), c = z.dim(1);
  Graph* g = &logits.graph();
  const NodeId iz = logits.id();
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return g->record(OpKind::CrossEntropy, {logits}, Tensor::scalar(loss),
                   [g, iz, n, c, ys = std::move(ys)](const Tensor& grad) {
                     const Tensor& z = g->value(iz);
                     const auto lse = log_normalizers(z);
                     const double f = grad[0] / static_cast<double>(n);
                     Tensor gz(z.shape());
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < c; ++j)
                         gz[i * c + j] = std::exp(z[i * c + j] - lse[i]) * f;
                       gz[i * c + ys[i]] -= f;
                     }
                     return std::vector<Tensor>{std::move(gz)};
                   });
}

}  // namespace sat
