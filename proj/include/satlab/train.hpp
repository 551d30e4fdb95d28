#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "satlab/activations.hpp"
#include "satlab/attack.hpp"
#include "satlab/checkpoint.hpp"
#include "satlab/data.hpp"
#include "satlab/model.hpp"

namespace sat {

/// Which activation each phase of adversarial training uses. The four
/// gradient-ablation cells keep forward = relu and vary the two backward
/// kinds; full smooth training sets all three to the same smooth kind.
struct PhaseOverrides {
  Activation forward = Activation::relu();
  Activation attacker_backward = Activation::relu();
  Activation optimizer_backward = Activation::relu();

  static PhaseOverrides uniform(const Activation& a) { return {a, a, a}; }
  ActivationPair attacker_pair() const { return {forward, attacker_backward}; }
  ActivationPair optimizer_pair() const { return {forward, optimizer_backward}; }

  friend bool operator==(const PhaseOverrides&, const PhaseOverrides&) = default;
};

/// Defaults are the desk-scale schedule: 20 epochs, lr 0.05 decayed 10x at
/// epochs 10 and 15, momentum 0.9, weight decay 1e-4, batch 128, PGD-1 at
/// eps 4/255.
struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> lr_decay_epochs{10, 15};
  AttackConfig attack = AttackConfig::preset("train-pgd1-eps4");
  PhaseOverrides overrides;
  std::uint64_t seed = 0;
  /// Per-epoch robustness probe: PGD-probe_iterations on the first
  /// probe_size validation samples.
  std::size_t probe_size = 1000;
  std::size_t probe_iterations = 10;
  /// Skip the inner maximization entirely (plain training).
  bool standard_training = false;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// base_lr * 10^-(number of decay epochs <= epoch).
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct OptimizerState {
  std::map<std::string, Tensor> velocity;
  static OptimizerState zeros_like(const ModelParams& params);
};

inline constexpr double kMinSmoothReluAlpha = 1e-2;

/// g' = g + wd * theta; v = momentum * v + g'; theta -= lr * v.
/// SmoothReLU alphas skip weight decay and are projected to >= 1e-2.
void sgd_momentum_step(ModelParams& params, const std::map<std::string, Tensor>& grads,
                       OptimizerState& state, double lr, double momentum, double weight_decay);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct MetricsLog {
  std::vector<EpochMetrics> rows;
  /// Header "epoch,lr,train_loss,clean_acc,robust_acc".
  std::string to_csv() const;
};

struct TrainResult {
  /// Spec actually trained: the input spec with activation =
  /// (overrides.forward, overrides.optimizer_backward).
  ModelSpec spec;
  /// Final full-precision parameters.
  ModelParams params;
  Checkpoint checkpoint;
  MetricsLog metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Model spec with the activation pair the optimizer phase will use.
ModelSpec training_spec(const ModelSpec& spec, const PhaseOverrides& overrides);

/// Min-max training: per batch, craft adversarial inputs with the attacker
/// pair, then take one momentum-SGD step on them with the optimizer pair.
/// Throws DivergenceError on a non-finite loss.
TrainResult adversarial_train(const TrainConfig& cfg, const ModelSpec& spec, const Dataset& train,
                              const Dataset& val, const EpochCallback& on_epoch = {});

/// Same run with training continued from `initial` parameters.
TrainResult adversarial_train_from(const TrainConfig& cfg, const ModelSpec& spec, ModelParams initial,
                                   const Dataset& train, const Dataset& val,
                                   const EpochCallback& on_epoch = {});

struct AblationRow {
  std::string cell;  ///< "<attacker>-<optimizer>", each side "relu" or "smooth"
  bool attacker_smooth = false;
  bool optimizer_smooth = false;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double final_train_loss = 0.0;
};

struct AblationResult {
  std::uint64_t seed = 0;
  Activation smooth;
  std::vector<AblationRow> rows;
  std::string to_csv() const;
};

/// Trains the four backward-substitution cells with forward = relu,
/// identical seeds and data order, and evaluates each with `eval_attack`.
AblationResult run_ablation(const TrainConfig& base, const ModelSpec& spec, const Activation& smooth,
                            const Dataset& train, const Dataset& val, const AttackConfig& eval_attack);

}  // namespace sat
