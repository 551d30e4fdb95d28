#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "satlab/activations.hpp"
#include "satlab/attack.hpp"
#include "satlab/model.hpp"
#include "satlab/train.hpp"

namespace sat {

using nlohmann::json;

// Writers. Output is canonical (sorted keys), so dumps are byte-stable.
json to_json(const Activation& a);
json to_json(const ActivationPair& p);
json to_json(const LayerSpec& layer);
json to_json(const ModelSpec& spec);
json to_json(const AttackConfig& cfg);
json to_json(const PhaseOverrides& o);
json to_json(const TrainConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_hash(const json& j);

// Readers. `path` is the JSON path of `j`, used in ConfigError messages.
// Unknown keys are rejected.

/// "silu" or {"kind": "psoftplus", "alpha": 10}.
Activation activation_from_json(const json& j, const std::string& path);
ActivationPair activation_pair_from_json(const json& j, const std::string& path);
LayerSpec layer_from_json(const json& j, const std::string& path);
ModelSpec model_spec_from_json(const json& j, const std::string& path);
/// Preset name or {"epsilon", "step", "iterations", "random_init"?, "backward_override"?}.
AttackConfig attack_from_json(const json& j, const std::string& path);
/// One activation for every phase, or {"forward", "attacker_backward", "optimizer_backward"}.
PhaseOverrides overrides_from_json(const json& j, const std::string& path);
/// Fills in a TrainConfig's schedule fields; attack/overrides/seed untouched.
void train_schedule_from_json(const json& j, const std::string& path, TrainConfig& cfg);
/// Full TrainConfig as written by to_json(TrainConfig).
TrainConfig train_config_from_json(const json& j, const std::string& path);

/// Tracks which keys of a JSON object were read so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path);

  bool has(const std::string& key) const;
  const json& required(const std::string& key);
  const json* optional(const std::string& key);
  std::string child(const std::string& key) const;
  const std::string& path() const noexcept { return path_; }

  double number(const std::string& key);
  double number_or(const std::string& key, double fallback);
  std::size_t count(const std::string& key);
  std::size_t count_or(const std::string& key, std::size_t fallback);
  bool boolean_or(const std::string& key, bool fallback);
  std::string string(const std::string& key);
  std::string string_or(const std::string& key, std::string fallback);
  std::vector<std::size_t> counts_or(const std::string& key, std::vector<std::size_t> fallback);
  std::vector<double> numbers_or(const std::string& key, std::vector<double> fallback);

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

double as_number(const json& j, const std::string& path);
std::size_t as_count(const json& j, const std::string& path);
/// A number, or a "4/255" style string.
double as_fraction(const json& j, const std::string& path);

}  // namespace sat
