#include "satlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"
#include "satlab/serialize.hpp"

namespace sat {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValueError("train: epochs must be at least 1");
  if (batch_size < 1) throw ValueError("train: batch_size must be at least 1");
  if (!(base_lr >= 0.0)) throw ValueError("train: base_lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("train: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ValueError("train: weight_decay must be non-negative");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] >= epochs)
      throw ValueError("train: decay epoch " + std::to_string(lr_decay_epochs[i]) +
                       " is not below epochs");
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1])
      throw ValueError("train: lr_decay_epochs must be strictly increasing");
  }
  if (probe_iterations < 1) throw ValueError("train: probe_iterations must be at least 1");
  attack.validate();
  overrides.forward.validate();
  overrides.attacker_backward.validate();
  overrides.optimizer_backward.validate();
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs)
    throw ValueError("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0," +
                     std::to_string(cfg.epochs) + ")");
  const auto decays = std::ranges::count_if(cfg.lr_decay_epochs, [&](auto e) { return e <= epoch; });
  return cfg.base_lr * std::pow(10.0, -static_cast<double>(decays));
}

OptimizerState OptimizerState::zeros_like(const ModelParams& params) {
  OptimizerState s;
  for (const auto& [name, t] : params) s.velocity.emplace(name, Tensor::zeros_like(t));
  return s;
}

void sgd_momentum_step(ModelParams& params, const std::map<std::string, Tensor>& grads,
                       OptimizerState& state, double lr, double momentum, double weight_decay) {
  for (auto& [name, theta] : params) {
    auto g_it = grads.find(name);
    if (g_it == grads.end()) throw ShapeError("sgd: no gradient for '" + name + "'");
    const Tensor& g = g_it->second;
    auto [v_it, inserted] = state.velocity.try_emplace(name, Tensor::zeros_like(theta));
    Tensor& v = v_it->second;
    if (g.shape() != theta.shape() || v.shape() != theta.shape())
      throw ShapeError("sgd: shape mismatch for '" + name + "'");
    const bool alpha = is_alpha_param(name);
    const double wd = alpha ? 0.0 : weight_decay;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + wd * theta[i];
      v[i] = momentum * v[i] + gi;
      theta[i] -= lr * v[i];
      if (alpha) theta[i] = std::max(theta[i], kMinSmoothReluAlpha);
    }
  }
}

std::string MetricsLog::to_csv() const {
  std::string out = "epoch,lr,train_loss,clean_acc,robust_acc\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10f,%.6f,%.6f\n", r.epoch, r.lr, r.train_loss,
                  r.clean_acc, r.robust_acc);
    out += buf;
  }
  return out;
}

ModelSpec training_spec(const ModelSpec& spec, const PhaseOverrides& overrides) {
  ModelSpec out = spec;
  out.activation = overrides.optimizer_pair();
  out.validate();
  return out;
}

TrainResult adversarial_train(const TrainConfig& cfg, const ModelSpec& spec, const Dataset& train,
                              const Dataset& val, const EpochCallback& on_epoch) {
  const ModelSpec tspec = training_spec(spec, cfg.overrides);
  return adversarial_train_from(cfg, spec, init_params(tspec, cfg.seed), train, val, on_epoch);
}

TrainResult adversarial_train_from(const TrainConfig& cfg, const ModelSpec& spec, ModelParams params,
                                   const Dataset& train, const Dataset& val,
                                   const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelSpec tspec = training_spec(spec, cfg.overrides);
  check_params(tspec, params);
  if (train.size() == 0 || val.size() == 0) throw ValueError("train: empty dataset");
  if (train.sample_shape() != tspec.input_shape || val.sample_shape() != tspec.input_shape)
    throw ShapeError("train: data sample shape " + shape_string(train.sample_shape()) +
                     " does not match model input " + shape_string(tspec.input_shape));

  AttackConfig train_attack = cfg.attack;
  train_attack.backward_override = cfg.overrides.attacker_backward;
  const ActivationPair opt_pair = cfg.overrides.optimizer_pair();

  const Dataset probe = val.slice(0, std::min(cfg.probe_size == 0 ? val.size() : cfg.probe_size, val.size()));
  AttackConfig probe_attack{cfg.attack.epsilon, cfg.attack.epsilon / 4.0, cfg.probe_iterations, true,
                            std::nullopt};

  OptimizerState state = OptimizerState::zeros_like(params);
  std::vector<std::size_t> order(train.size());
  TrainResult result;
  result.spec = tspec;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t attack_seed = derive_seed(cfg.seed, "train.attack", epoch);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_index) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const Dataset batch = train.select(std::span(order).subspan(b, e - b));
      const Tensor inputs = cfg.standard_training
                                ? batch.images
                                : pgd(tspec, params, batch.images, batch.labels, train_attack,
                                      attack_seed, b);
      Graph g;
      const auto vars = bind_params(g, params);
      Var x = g.leaf(inputs, {}, false);
      Var loss = cross_entropy(forward(tspec, vars, x, opt_pair), batch.labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw DivergenceError(epoch, batch_index);
      const auto grads = backward(g, loss).named();
      sgd_momentum_step(params, grads, state, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += value * static_cast<double>(e - b);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(train.size());
    m.clean_acc = clean_accuracy(tspec, params, probe);
    m.robust_acc = cfg.attack.epsilon == 0.0
                       ? m.clean_acc
                       : robust_accuracy(tspec, params, probe, probe_attack,
                                         derive_seed(cfg.seed, "probe"));
    result.metrics.rows.push_back(m);
    if (on_epoch) on_epoch(m);
  }

  result.checkpoint.params = params;
  result.checkpoint.metadata = {
      {"format", "satlab"},
      {"model", to_json(tspec)},
      {"seed", cfg.seed},
      {"epoch", cfg.epochs},
      {"config_hash", config_hash(to_json(cfg))},
      {"train", to_json(cfg)},
  };
  result.params = std::move(params);
  return result;
}

std::string AblationResult::to_csv() const {
  std::string out = "# seed=" + std::to_string(seed) + " forward=relu smooth=" + smooth.label() + "\n";
  out += "cell,attacker_smooth,optimizer_smooth,seed,clean_acc,robust_acc,final_train_loss\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%llu,%.6f,%.6f,%.10f\n", r.cell.c_str(),
                  r.attacker_smooth ? 1 : 0, r.optimizer_smooth ? 1 : 0,
                  static_cast<unsigned long long>(seed), r.clean_acc, r.robust_acc,
                  r.final_train_loss);
    out += buf;
  }
  return out;
}

AblationResult run_ablation(const TrainConfig& base, const ModelSpec& spec, const Activation& smooth,
                            const Dataset& train, const Dataset& val, const AttackConfig& eval_attack) {
  if (base.overrides.forward.kind != ActivationKind::ReLU)
    throw ValueError("ablation: forward activation must be relu");
  AblationResult result{base.seed, smooth, {}};
  for (const bool attacker_smooth : {false, true})
    for (const bool optimizer_smooth : {false, true}) {
      TrainConfig cfg = base;
      cfg.overrides.attacker_backward = attacker_smooth ? smooth : Activation::relu();
      cfg.overrides.optimizer_backward = optimizer_smooth ? smooth : Activation::relu();
      const TrainResult tr = adversarial_train(cfg, spec, train, val);
      AblationRow row;
      row.cell = std::string(attacker_smooth ? "smooth" : "relu") + "-" +
                 (optimizer_smooth ? "smooth" : "relu");
      row.attacker_smooth = attacker_smooth;
      row.optimizer_smooth = optimizer_smooth;
      row.clean_acc = clean_accuracy(tr.spec, tr.params, val);
      row.robust_acc = robust_accuracy(tr.spec, tr.params, val, eval_attack, derive_seed(base.seed, "eval"));
      row.final_train_loss = tr.metrics.rows.back().train_loss;
      result.rows.push_back(row);
    }
  // Table order: baseline, attacker only, optimizer only, both.
  std::swap(result.rows[1], result.rows[2]);
  return result;
}

}  // namespace sat
