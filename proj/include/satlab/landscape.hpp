#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "satlab/attack.hpp"
#include "satlab/data.hpp"
#include "satlab/model.hpp"

namespace sat {

struct SweepResult {
  std::string axis;  ///< "iterations" or "epsilon"
  std::uint64_t seed = 0;
  /// (setting, robust accuracy), settings strictly increasing.
  std::vector<std::pair<double, double>> points;

  /// "# axis=... seed=..." then "<axis>,robust_acc" rows.
  std::string to_csv() const;
};

/// Robust accuracy of PGD-k for each k at a shared epsilon, step epsilon/4.
SweepResult sweep_iterations(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                             double epsilon, const std::vector<std::size_t>& ks, std::uint64_t seed);

/// Robust accuracy at each epsilon for a fixed k, step epsilon/4.
SweepResult sweep_epsilon(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                          const std::vector<double>& epsilons, std::size_t k, std::uint64_t seed);

/// Cross-entropy over the plane x + a*d1 + b*d2 (clipped to [0,1]) with
/// d1 = sign of the clean input gradient and d2 a seeded Rademacher vector.
struct LandscapeGrid {
  std::size_t size = 0;  ///< N, odd
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> coefficients;  ///< N values from -epsilon to epsilon, center exactly 0
  /// Row-major N x N; loss[i * N + j] is at (a, b) = (coefficients[i], coefficients[j]).
  std::vector<double> loss;
  /// Cells whose loss came out non-finite.
  std::vector<std::size_t> error_cells;
  double clean_loss = 0.0;
  Tensor d1, d2;

  double at(std::size_t i, std::size_t j) const { return loss[i * size + j]; }
  /// "# seed=... epsilon=... N=... error_cells=..." then "a,b,loss" rows.
  std::string to_csv() const;
};

/// `image` is one sample, shaped like spec.input_shape or [1, input_shape...].
LandscapeGrid loss_landscape(const ModelSpec& spec, const ModelParams& params, const Tensor& image,
                             std::size_t label, double epsilon, std::size_t n, std::uint64_t seed);

/// Mean absolute 5-point discrete Laplacian over interior cells. Lower is
/// smoother.
double laplacian_roughness(const LandscapeGrid& grid);

}  // namespace sat
