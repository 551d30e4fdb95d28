#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "satlab/activations.hpp"
#include "satlab/data.hpp"
#include "satlab/model.hpp"

namespace sat {

/// L-infinity PGD settings. epsilon and step are in normalized [0,1] pixel
/// units, so a budget of 4 pixel levels is 4/255.
struct AttackConfig {
  double epsilon = 4.0 / 255.0;
  double step = 4.0 / 255.0;
  std::size_t iterations = 1;
  bool random_init = true;
  /// Replaces the model's backward activation when computing input gradients.
  std::optional<Activation> backward_override;

  void validate() const;

  /// "train-pgd1-eps4" (eps 4/255, step 4/255, 1 step), "eval-pgd200-eps4"
  /// (eps 4/255, step 1/255, 200 steps), "cifar-pgd1-eps8" (eps 8/255,
  /// step 8/255, 1 step). All use random init.
  static AttackConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// Clamps delta to [-epsilon, epsilon], then shrinks it so that
/// x_clean + delta stays in [0,1].
Tensor project_linf(const Tensor& delta, double epsilon, const Tensor& x_clean);

/// Activation pair used for the attacker's gradients: the model's forward
/// activation, with the backward side replaced when an override is set.
/// Without an override attacks follow the true gradient of the forward function.
ActivationPair attack_pair(const ModelSpec& spec, const AttackConfig& cfg);

/// Gradient of the mean cross-entropy with respect to the input batch.
Tensor input_gradient(const ModelSpec& spec, const ModelParams& params, const Tensor& images,
                      std::span<const std::size_t> labels, const ActivationPair& pair);

/// Projected sign-gradient ascent. Sample i of the batch draws its random
/// start from a stream seeded by seed ^ (first_index + i), so results do not
/// depend on batching. Returns x + delta.
Tensor pgd(const ModelSpec& spec, const ModelParams& params, const Tensor& images,
           std::span<const std::size_t> labels, const AttackConfig& cfg, std::uint64_t seed,
           std::size_t first_index = 0);

double clean_accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                      std::size_t batch_size = 256);

/// Fraction of samples still classified correctly after pgd.
double robust_accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                       const AttackConfig& cfg, std::uint64_t seed, std::size_t batch_size = 256);

}  // namespace sat
