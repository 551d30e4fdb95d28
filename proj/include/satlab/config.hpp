#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "satlab/activations.hpp"
#include "satlab/attack.hpp"
#include "satlab/data.hpp"
#include "satlab/model.hpp"
#include "satlab/train.hpp"

namespace sat {

/// Where the samples come from. Synthetic blobs need no files; blobs are
/// split into train/val, file sources use their own test split as val.
struct DataConfig {
  enum class Source { Blobs, Idx, Cifar10 };
  Source source = Source::Blobs;

  // blobs
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t dim = 64;
  double separation = 10.0;
  std::size_t val_count = 200;
  /// Data seed; derived from the run seed when absent.
  std::optional<std::uint64_t> seed;

  // idx / cifar10
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::vector<std::filesystem::path> train_batches, test_batches;
  /// Keep only the first N samples of each split (0 = all).
  std::size_t train_limit = 0;
  std::size_t val_limit = 0;

  Shape sample_shape() const;
  std::size_t class_count() const;
  /// (train, val).
  std::pair<Dataset, Dataset> load(std::uint64_t run_seed) const;
};

struct ModelConfig {
  enum class Arch { Mlp, Cnn, Custom };
  Arch arch = Arch::Cnn;
  std::vector<std::size_t> widths;  ///< hidden sizes (mlp) or channels (cnn)
  std::vector<LayerSpec> layers;    ///< custom only

  /// Spec for the given data shape with the forward activation on both sides.
  ModelSpec build(const Shape& input_shape, std::size_t classes, const Activation& forward) const;
};

struct EvalConfig {
  AttackConfig attack = AttackConfig::preset("eval-pgd200-eps4");
  /// Evaluate on the first N validation samples (0 = all).
  std::size_t samples = 0;
  std::vector<std::size_t> sweep_iterations{1, 5, 10, 50, 200};
  std::vector<double> sweep_epsilons{0.0, 2.0 / 255, 4.0 / 255, 8.0 / 255, 16.0 / 255};
  std::size_t landscape_grid = 41;
  /// Landscape radius; the eval attack epsilon when absent.
  std::optional<double> landscape_epsilon;
  std::size_t landscape_sample = 0;
  /// Smooth kind substituted by the ablation.
  Activation ablation_smooth = Activation::psoftplus(10.0);
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  /// Spec as the optimizer sees it (forward, optimizer_backward).
  ModelSpec model_spec() const;
  /// Replaces the seed everywhere it is echoed.
  void set_seed(std::uint64_t s);
};

/// Validates the whole document; relative paths resolve against `base_dir`.
/// Throws ConfigError with the JSON path of the first offending key.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Directory searched by preset_path: $SATLAB_PRESETS, else the in-repo
/// configs/presets directory.
std::filesystem::path preset_dir();
std::filesystem::path preset_path(const std::string& name);
std::vector<std::string> preset_list();

nlohmann::json to_json(const RunConfig& cfg);

}  // namespace sat
