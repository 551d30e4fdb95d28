#include "satlab/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"

namespace sat {

namespace {

void require_increasing(const std::vector<double>& settings, const char* what) {
  if (settings.empty()) throw ValueError(std::string(what) + ": empty setting list");
  for (std::size_t i = 1; i < settings.size(); ++i)
    if (!(settings[i] > settings[i - 1]))
      throw ValueError(std::string(what) + ": settings must be strictly increasing");
}

double robust_at(const ModelSpec& spec, const ModelParams& params, const Dataset& data, double eps,
                 std::size_t k, std::uint64_t seed) {
  const AttackConfig cfg{eps, eps / 4.0, k, true, std::nullopt};
  return robust_accuracy(spec, params, data, cfg, seed);
}

}  // namespace

std::string SweepResult::to_csv() const {
  std::string out = "# axis=" + axis + " seed=" + std::to_string(seed) + " step=epsilon/4\n";
  out += axis + ",robust_acc\n";
  char buf[96];
  for (const auto& [setting, acc] : points) {
    std::snprintf(buf, sizeof buf, "%.10g,%.6f\n", setting, acc);
    out += buf;
  }
  return out;
}

SweepResult sweep_iterations(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                             double epsilon, const std::vector<std::size_t>& ks, std::uint64_t seed) {
  std::vector<double> settings(ks.begin(), ks.end());
  require_increasing(settings, "sweep_iterations");
  SweepResult r{"iterations", seed, {}};
  for (std::size_t k : ks)
    r.points.emplace_back(static_cast<double>(k), robust_at(spec, params, data, epsilon, k, seed));
  return r;
}

SweepResult sweep_epsilon(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                          const std::vector<double>& epsilons, std::size_t k, std::uint64_t seed) {
  require_increasing(epsilons, "sweep_epsilon");
  SweepResult r{"epsilon", seed, {}};
  for (double eps : epsilons) r.points.emplace_back(eps, robust_at(spec, params, data, eps, k, seed));
  return r;
}

std::string LandscapeGrid::to_csv() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "# seed=%llu epsilon=%.10g N=%zu error_cells=%zu\n",
                static_cast<unsigned long long>(seed), epsilon, size, error_cells.size());
  std::string out = buf;
  out += "a,b,loss\n";
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double v = at(i, j);
      if (std::isfinite(v))
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.12g\n", coefficients[i], coefficients[j], v);
      else
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,error\n", coefficients[i], coefficients[j]);
      out += buf;
    }
  return out;
}

LandscapeGrid loss_landscape(const ModelSpec& spec, const ModelParams& params, const Tensor& image,
                             std::size_t label, double epsilon, std::size_t n, std::uint64_t seed) {
  if (n < 3 || n % 2 == 0) throw ValueError("loss_landscape: N must be odd and at least 3");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValueError("loss_landscape: epsilon must be in [0,1]");
  if (image.size() != numel(spec.input_shape))
    throw ShapeError("loss_landscape: sample of shape " + shape_string(image.shape()) +
                     " does not match model input " + shape_string(spec.input_shape));
  if (label >= spec.class_count) throw ValueError("loss_landscape: label out of range");

  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  const Tensor x = image.reshaped(batch_shape);
  const std::size_t d = x.size();
  const std::vector<std::size_t> labels{label};

  LandscapeGrid g;
  g.size = n;
  g.epsilon = epsilon;
  g.seed = seed;
  g.coefficients.resize(n);
  const double half = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    g.coefficients[i] = epsilon * (2.0 * static_cast<double>(i) - half) / half;

  const Tensor grad =
      input_gradient(spec, params, x, labels, ActivationPair::same(spec.activation.forward));
  g.d1 = Tensor(batch_shape);
  for (std::size_t k = 0; k < d; ++k) g.d1[k] = grad[k] > 0.0 ? 1.0 : (grad[k] < 0.0 ? -1.0 : 0.0);
  g.d2 = Tensor(batch_shape);
  Rng rng(derive_seed(seed, "landscape.d2"));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t k = 0; k < d; ++k) g.d2[k] = coin(rng) ? 1.0 : -1.0;

  g.clean_loss = cross_entropy_value(predict_logits(spec, params, x), labels);

  // Cells are evaluated one grid row at a time; per-sample logits do not
  // depend on the batch they are computed in.
  g.loss.resize(n * n);
  Shape row_shape = batch_shape;
  row_shape[0] = n;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor row(row_shape);
    const double a = g.coefficients[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double b = g.coefficients[j];
      for (std::size_t k = 0; k < d; ++k)
        row[j * d + k] = std::clamp(x[k] + a * g.d1[k] + b * g.d2[k], 0.0, 1.0);
    }
    const Tensor logits = predict_logits(spec, params, row);
    const std::size_t c = logits.dim(1);
    for (std::size_t j = 0; j < n; ++j) {
      const Tensor one({1, c}, std::vector<double>(logits.data().begin() + j * c,
                                                   logits.data().begin() + (j + 1) * c));
      const double v = cross_entropy_value(one, labels);
      g.loss[i * n + j] = v;
      if (!std::isfinite(v)) g.error_cells.push_back(i * n + j);
    }
  }
  return g;
}

double laplacian_roughness(const LandscapeGrid& g) {
  if (g.size < 3) throw ValueError("laplacian_roughness: grid smaller than 3x3");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 1; i + 1 < g.size; ++i)
    for (std::size_t j = 1; j + 1 < g.size; ++j) {
      const double lap =
          g.at(i + 1, j) + g.at(i - 1, j) + g.at(i, j + 1) + g.at(i, j - 1) - 4.0 * g.at(i, j);
      if (!std::isfinite(lap)) continue;
      total += std::abs(lap);
      ++count;
    }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace sat
