#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "satlab/tensor.hpp"

namespace sat {

/// Labelled images in [0,1]. images is [N, C, H, W].
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  /// Per-sample shape {C, H, W}.
  Shape sample_shape() const;
  /// Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset select(std::span<const std::size_t> indices) const;
  /// Throws DataError(Format) if values leave [0,1] or labels leave
  /// [0, class_count).
  void validate() const;
};

/// MNIST IDX pair: images magic 0x00000803, labels magic 0x00000801,
/// big-endian headers, pixels scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string split = "train");

/// CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record).
Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths, std::string split = "train");

/// Gaussian clusters with noise stddev 1/separation around centers drawn
/// uniformly from [0.25, 0.75]^dim, clipped to [0,1]. Samples are
/// interleaved by class and shaped [N, 1, h, w] with h*w = dim, h the largest
/// divisor of dim not exceeding sqrt(dim).
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                    std::uint64_t seed);

/// Deterministic shuffle then split into (train, val) with `val_count`
/// samples in the second part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t val_count,
                                          std::uint64_t seed);

}  // namespace sat
