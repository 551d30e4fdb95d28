#include "satlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"

namespace sat {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ValueError("attack: epsilon must be in [0,1], got " + std::to_string(epsilon));
  if (!(step >= 0.0) || !std::isfinite(step))
    throw ValueError("attack: step must be non-negative, got " + std::to_string(step));
  if (iterations < 1) throw ValueError("attack: iterations must be at least 1");
  if (backward_override) backward_override->validate();
}

AttackConfig AttackConfig::preset(std::string_view name) {
  if (name == "train-pgd1-eps4") return {4.0 / 255.0, 4.0 / 255.0, 1, true, std::nullopt};
  if (name == "eval-pgd200-eps4") return {4.0 / 255.0, 1.0 / 255.0, 200, true, std::nullopt};
  if (name == "cifar-pgd1-eps8") return {8.0 / 255.0, 8.0 / 255.0, 1, true, std::nullopt};
  throw ValueError("unknown attack preset '" + std::string(name) + "'");
}

std::vector<std::string> AttackConfig::preset_names() {
  return {"train-pgd1-eps4", "eval-pgd200-eps4", "cifar-pgd1-eps8"};
}

Tensor project_linf(const Tensor& delta, double epsilon, const Tensor& x_clean) {
  if (delta.shape() != x_clean.shape())
    throw ShapeError("project_linf: shape mismatch " + shape_string(delta.shape()) + " vs " +
                     shape_string(x_clean.shape()));
  Tensor out(delta.shape());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double d = std::clamp(delta[i], -epsilon, epsilon);
    const double x = x_clean[i];
    const double moved = x + d;
    if (moved > 1.0)
      out[i] = 1.0 - x;
    else if (moved < 0.0)
      out[i] = -x;
    else
      out[i] = d;
  }
  return out;
}

ActivationPair attack_pair(const ModelSpec& spec, const AttackConfig& cfg) {
  return {spec.activation.forward, cfg.backward_override.value_or(spec.activation.forward)};
}

Tensor input_gradient(const ModelSpec& spec, const ModelParams& params, const Tensor& images,
                      std::span<const std::size_t> labels, const ActivationPair& pair) {
  Graph g;
  const auto vars = bind_params(g, params, false);
  Var x = g.leaf(images, "input");
  Var loss = cross_entropy(forward(spec, vars, x, pair), labels);
  return backward(g, loss)[x];
}

Tensor pgd(const ModelSpec& spec, const ModelParams& params, const Tensor& images,
           std::span<const std::size_t> labels, const AttackConfig& cfg, std::uint64_t seed,
           std::size_t first_index) {
  cfg.validate();
  if (images.rank() == 0 || labels.size() != images.dim(0))
    throw ValueError("pgd: " + std::to_string(labels.size()) + " labels for batch shape " +
                     shape_string(images.shape()));
  for (double v : images.data())
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("pgd: inputs must lie in [0,1]");
  if (cfg.epsilon == 0.0) return images;

  const std::size_t batch = images.dim(0);
  const std::size_t per_sample = images.size() / batch;
  Tensor delta(images.shape());
  if (cfg.random_init) {
    std::uniform_real_distribution<double> uniform(-cfg.epsilon, cfg.epsilon);
    for (std::size_t n = 0; n < batch; ++n) {
      Rng rng(derive_seed(seed ^ static_cast<std::uint64_t>(first_index + n), "pgd.init"));
      for (std::size_t j = 0; j < per_sample; ++j) delta[n * per_sample + j] = uniform(rng);
    }
    delta = project_linf(delta, cfg.epsilon, images);
  }

  const ActivationPair pair = attack_pair(spec, cfg);
  Tensor x_adv(images.shape());
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    for (std::size_t i = 0; i < images.size(); ++i) x_adv[i] = images[i] + delta[i];
    const Tensor grad = input_gradient(spec, params, x_adv, labels, pair);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      delta[i] += cfg.step * s;
    }
    delta = project_linf(delta, cfg.epsilon, images);
  }
  for (std::size_t i = 0; i < images.size(); ++i)
    x_adv[i] = std::clamp(images[i] + delta[i], 0.0, 1.0);
  return x_adv;
}

namespace {

std::size_t count_correct(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
                          std::span<const std::size_t> labels) {
  const auto pred = predict(spec, params, x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return correct;
}

}  // namespace

double clean_accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                      std::size_t batch_size) {
  if (data.size() == 0) throw ValueError("clean_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    correct += count_correct(spec, params, data.images.slice_rows(b, e),
                             std::span(data.labels).subspan(b, e - b));
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                       const AttackConfig& cfg, std::uint64_t seed, std::size_t batch_size) {
  if (data.size() == 0) throw ValueError("robust_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const auto labels = std::span(data.labels).subspan(b, e - b);
    const Tensor adv = pgd(spec, params, data.images.slice_rows(b, e), labels, cfg, seed, b);
    correct += count_correct(spec, params, adv, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace sat
