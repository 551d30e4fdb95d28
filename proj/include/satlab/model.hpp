#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "satlab/activations.hpp"
#include "satlab/autodiff.hpp"
#include "satlab/tensor.hpp"

namespace sat {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

struct Conv {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  friend bool operator==(const Conv&, const Conv&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using LayerSpec = std::variant<Dense, Conv, Flatten>;

/// Layer stack. `activation` follows every Dense/Conv layer except the last
/// one; the last parametric layer produces logits.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  ActivationPair activation = ActivationPair::same(Activation::relu());
  Shape input_shape;  ///< per-sample shape, e.g. {1, 28, 28} or {784}
  std::size_t class_count = 10;

  /// Walks the stack and throws ShapeError/ValueError on any inconsistency.
  void validate() const;
  /// Per-sample output shape of layer `i` (after its activation).
  Shape shape_after(std::size_t i) const;
  /// Whether the parameters carry a learnable SmoothReLU alpha per layer.
  bool learnable_alpha() const noexcept;
  /// Indices of layers followed by an activation.
  std::vector<std::size_t> activated_layers() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Flatten -> Dense(d, h1) -> act -> ... -> Dense(h_last, classes).
ModelSpec default_mlp(Shape input_shape, std::size_t classes,
                      std::vector<std::size_t> hidden = {128, 128},
                      ActivationPair activation = ActivationPair::same(Activation::relu()));

/// Conv(C->16, 3, stride 2, pad 1) -> act -> Conv(16->32, 3, stride 2, pad 1)
/// -> act -> Flatten -> Dense(-> classes).
ModelSpec default_cnn(Shape input_shape, std::size_t classes,
                      std::vector<std::size_t> channels = {16, 32},
                      ActivationPair activation = ActivationPair::same(Activation::relu()));

/// Named parameters: "layer<i>.weight", "layer<i>.bias" and, when the spec
/// uses SmoothReLU, "layer<i>.alpha" for every activated layer.
using ModelParams = std::map<std::string, Tensor>;
using ParamVars = std::map<std::string, Var>;

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);
std::string alpha_name(std::size_t layer);
bool is_alpha_param(std::string_view name) noexcept;

/// Weights ~ Normal(0, sqrt(2 / fan_in)), biases 0, alpha at the spec's
/// SmoothReLU alpha. Deterministic in `seed`.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

/// Throws ShapeError if params do not match the spec exactly.
void check_params(const ModelSpec& spec, const ModelParams& params);

/// Registers every parameter as a named leaf of the graph.
ParamVars bind_params(Graph& graph, const ModelParams& params, bool requires_grad = true);

/// Records the network on the graph; x is [N, input_shape...]. Returns
/// logits [N, class_count].
Var forward(const ModelSpec& spec, const ParamVars& params, Var x, const ActivationPair& pair);

/// Logits without keeping a graph around.
Tensor predict_logits(const ModelSpec& spec, const ModelParams& params, const Tensor& x);
std::vector<std::size_t> predict(const ModelSpec& spec, const ModelParams& params, const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label], log-sum-exp stabilized.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
double cross_entropy_value(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace sat
