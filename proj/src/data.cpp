#include "satlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"

namespace sat {

Shape Dataset::sample_shape() const {
  const Shape& s = images.shape();
  return Shape(s.begin() + 1, s.end());
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  return Dataset{images.slice_rows(begin, end),
                 std::vector<std::size_t>(labels.begin() + begin, labels.begin() + end), class_count,
                 split};
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ValueError("select: empty index list");
  const std::size_t row = images.size() / size();
  Shape shape = images.shape();
  shape[0] = indices.size();
  std::vector<double> data;
  data.reserve(indices.size() * row);
  std::vector<std::size_t> ys;
  ys.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw ValueError("select: index " + std::to_string(i) + " out of range");
    auto first = images.data().begin() + static_cast<std::ptrdiff_t>(i * row);
    data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(row));
    ys.push_back(labels[i]);
  }
  return Dataset{Tensor(std::move(shape), std::move(data)), std::move(ys), class_count, split};
}

void Dataset::validate() const {
  if (images.rank() != 4) throw DataError(DataErrorKind::Format, "images must be [N,C,H,W]");
  if (images.dim(0) != labels.size())
    throw DataError(DataErrorKind::CountMismatch,
                    std::to_string(images.dim(0)) + " images vs " + std::to_string(labels.size()) +
                        " labels");
  for (double v : images.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DataError(DataErrorKind::Format, "pixel outside [0,1]");
  for (auto y : labels)
    if (y >= class_count)
      throw DataError(DataErrorKind::Format, "label " + std::to_string(y) + " >= class count " +
                                                 std::to_string(class_count));
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (buf.size() < offset + 4)
    throw DataError(DataErrorKind::Truncated, path.string() + ": header ends early");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string split) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  if (read_be32(img, 0, images_path) != 0x00000803u)
    throw DataError(DataErrorKind::BadMagic, images_path.string() + ": expected 0x00000803");
  if (read_be32(lab, 0, labels_path) != 0x00000801u)
    throw DataError(DataErrorKind::BadMagic, labels_path.string() + ": expected 0x00000801");

  const std::size_t n_img = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_lab = read_be32(lab, 4, labels_path);
  if (n_img != n_lab)
    throw DataError(DataErrorKind::CountMismatch, "images file has " + std::to_string(n_img) +
                                                      " items, labels file has " +
                                                      std::to_string(n_lab));
  if (n_img == 0 || rows == 0 || cols == 0)
    throw DataError(DataErrorKind::Format, images_path.string() + ": empty image set");
  if (img.size() < 16 + n_img * rows * cols)
    throw DataError(DataErrorKind::Truncated, images_path.string() + ": pixel data ends early");
  if (lab.size() < 8 + n_lab)
    throw DataError(DataErrorKind::Truncated, labels_path.string() + ": label data ends early");

  Tensor images({n_img, 1, rows, cols});
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = img[16 + i] / 255.0;
  std::vector<std::size_t> labels(n_lab);
  std::size_t classes = 0;
  for (std::size_t i = 0; i < n_lab; ++i) {
    labels[i] = lab[8 + i];
    classes = std::max(classes, labels[i] + 1);
  }
  Dataset ds{std::move(images), std::move(labels), std::max<std::size_t>(classes, 10),
             std::move(split)};
  ds.validate();
  return ds;
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths, std::string split) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  std::vector<double> pixels;
  std::vector<std::size_t> labels;
  for (const auto& path : batch_paths) {
    const auto buf = read_file(path);
    if (buf.empty() || buf.size() % kRecord != 0)
      throw DataError(DataErrorKind::Truncated,
                      path.string() + ": size is not a multiple of " + std::to_string(kRecord));
    for (std::size_t off = 0; off < buf.size(); off += kRecord) {
      if (buf[off] >= 10)
        throw DataError(DataErrorKind::Format, path.string() + ": label byte out of range");
      labels.push_back(buf[off]);
      for (std::size_t i = 1; i < kRecord; ++i) pixels.push_back(buf[off + i] / 255.0);
    }
  }
  if (labels.empty()) throw DataError(DataErrorKind::Format, "no CIFAR-10 batches given");
  const std::size_t n = labels.size();
  Dataset ds{Tensor({n, 3, 32, 32}, std::move(pixels)), std::move(labels), 10, std::move(split)};
  ds.validate();
  return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                    std::uint64_t seed) {
  if (!(separation > 0.0)) throw ValueError("synth_blobs: separation must be positive");
  if (classes < 2 || per_class == 0 || dim == 0)
    throw ValueError("synth_blobs: need classes >= 2, per_class >= 1, dim >= 1");

  std::size_t h = 1;
  for (std::size_t d = 1; d * d <= dim; ++d)
    if (dim % d == 0) h = d;
  const std::size_t w = dim / h;

  Rng center_rng(derive_seed(seed, "blobs.centers"));
  std::uniform_real_distribution<double> uniform(0.25, 0.75);
  std::vector<double> centers(classes * dim);
  for (auto& c : centers) c = uniform(center_rng);

  Rng noise_rng(derive_seed(seed, "blobs.noise"));
  std::normal_distribution<double> noise(0.0, 1.0 / separation);
  const std::size_t n = classes * per_class;
  Tensor images({n, 1, h, w});
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    labels[i] = k;
    for (std::size_t j = 0; j < dim; ++j)
      images[i * dim + j] = std::clamp(centers[k * dim + j] + noise(noise_rng), 0.0, 1.0);
  }
  return Dataset{std::move(images), std::move(labels), classes, "synthetic"};
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t val_count,
                                          std::uint64_t seed) {
  if (val_count == 0 || val_count >= data.size())
    throw ValueError("split_dataset: val_count must be in [1, " + std::to_string(data.size()) + ")");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = data.size() - val_count;
  Dataset train = data.select(std::span(order).first(n_train));
  Dataset val = data.select(std::span(order).subspan(n_train));
  train.split = "train";
  val.split = "val";
  return {std::move(train), std::move(val)};
}

}  // namespace sat
