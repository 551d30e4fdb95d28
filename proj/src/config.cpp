#include "satlab/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"
#include "satlab/serialize.hpp"

#ifndef SATLAB_PRESET_DIR
#define SATLAB_PRESET_DIR "configs/presets"
#endif

namespace sat {

namespace {

using Source = DataConfig::Source;
using Arch = ModelConfig::Arch;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::vector<std::filesystem::path> paths_of(ObjectReader& r, const std::string& key,
                                            const std::filesystem::path& base) {
  const json& v = r.required(key);
  if (!v.is_array() || v.empty()) throw ConfigError(r.child(key), "expected a non-empty array of paths");
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string())
      throw ConfigError(r.child(key) + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(resolve(base, v[i].get<std::string>()));
  }
  return out;
}

DataConfig parse_data(const json& j, const std::filesystem::path& base) {
  ObjectReader r(j, "data");
  DataConfig d;
  const std::string source = r.string("source");
  if (source == "blobs") {
    d.source = Source::Blobs;
    d.classes = r.count_or("classes", d.classes);
    d.per_class = r.count_or("per_class", d.per_class);
    d.dim = r.count_or("dim", d.dim);
    d.separation = r.number_or("separation", d.separation);
    d.val_count = r.count_or("val_count", d.val_count);
    if (const json* s = r.optional("seed")) d.seed = as_count(*s, r.child("seed"));
    if (d.classes < 2) throw ConfigError(r.child("classes"), "must be at least 2");
    if (d.per_class < 1) throw ConfigError(r.child("per_class"), "must be at least 1");
    if (d.dim < 1) throw ConfigError(r.child("dim"), "must be at least 1");
    if (!(d.separation > 0.0)) throw ConfigError(r.child("separation"), "must be positive");
    if (d.val_count < 1 || d.val_count >= d.classes * d.per_class)
      throw ConfigError(r.child("val_count"), "must leave at least one training sample");
  } else if (source == "idx") {
    d.source = Source::Idx;
    d.train_images = resolve(base, r.string("train_images"));
    d.train_labels = resolve(base, r.string("train_labels"));
    d.test_images = resolve(base, r.string("test_images"));
    d.test_labels = resolve(base, r.string("test_labels"));
  } else if (source == "cifar10") {
    d.source = Source::Cifar10;
    d.train_batches = paths_of(r, "train_batches", base);
    d.test_batches = paths_of(r, "test_batches", base);
  } else {
    throw ConfigError(r.child("source"), "unknown data source '" + source + "' (blobs, idx, cifar10)");
  }
  if (d.source != Source::Blobs) {
    d.train_limit = r.count_or("train_limit", 0);
    d.val_limit = r.count_or("val_limit", 0);
  }
  r.finish();
  return d;
}

ModelConfig parse_model(const json& j) {
  ObjectReader r(j, "model");
  ModelConfig m;
  const std::string arch = r.string("arch");
  if (arch == "cnn") {
    m.arch = Arch::Cnn;
    m.widths = r.counts_or("channels", {16, 32});
  } else if (arch == "mlp") {
    m.arch = Arch::Mlp;
    m.widths = r.counts_or("hidden", {128, 128});
  } else if (arch == "custom") {
    m.arch = Arch::Custom;
    const json& layers = r.required("layers");
    if (!layers.is_array()) throw ConfigError(r.child("layers"), "expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i)
      m.layers.push_back(layer_from_json(layers[i], r.child("layers") + "[" + std::to_string(i) + "]"));
  } else {
    throw ConfigError(r.child("arch"), "unknown architecture '" + arch + "' (cnn, mlp, custom)");
  }
  if (m.arch != Arch::Custom && std::ranges::find(m.widths, 0u) != m.widths.end())
    throw ConfigError(r.child(m.arch == Arch::Cnn ? "channels" : "hidden"), "widths must be positive");
  r.finish();
  return m;
}

TrainConfig parse_train(const json& j) {
  ObjectReader r(j, "train");
  TrainConfig t;
  json schedule = json::object();
  for (const auto& [key, value] : j.items())
    if (key != "attack" && key != "activation") schedule[key] = value;
  if (const json* a = r.optional("attack")) t.attack = attack_from_json(*a, r.child("attack"));
  t.overrides = overrides_from_json(r.required("activation"), r.child("activation"));
  train_schedule_from_json(schedule, "train", t);
  return t;
}

EvalConfig parse_eval(const json& j) {
  ObjectReader r(j, "eval");
  EvalConfig e;
  if (const json* a = r.optional("attack")) e.attack = attack_from_json(*a, r.child("attack"));
  e.samples = r.count_or("samples", e.samples);
  e.sweep_iterations = r.counts_or("sweep_iterations", e.sweep_iterations);
  if (const json* v = r.optional("sweep_epsilons")) {
    if (!v->is_array()) throw ConfigError(r.child("sweep_epsilons"), "expected an array");
    e.sweep_epsilons.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      e.sweep_epsilons.push_back(
          as_fraction((*v)[i], r.child("sweep_epsilons") + "[" + std::to_string(i) + "]"));
  }
  for (std::size_t i = 1; i < e.sweep_iterations.size(); ++i)
    if (e.sweep_iterations[i] <= e.sweep_iterations[i - 1])
      throw ConfigError(r.child("sweep_iterations"), "must be strictly increasing");
  if (!e.sweep_iterations.empty() && e.sweep_iterations.front() < 1)
    throw ConfigError(r.child("sweep_iterations"), "iterations must be at least 1");
  for (std::size_t i = 0; i < e.sweep_epsilons.size(); ++i) {
    if (!(e.sweep_epsilons[i] >= 0.0 && e.sweep_epsilons[i] <= 1.0))
      throw ConfigError(r.child("sweep_epsilons"), "epsilons must be in [0,1]");
    if (i > 0 && e.sweep_epsilons[i] <= e.sweep_epsilons[i - 1])
      throw ConfigError(r.child("sweep_epsilons"), "must be strictly increasing");
  }
  if (const json* l = r.optional("landscape")) {
    ObjectReader lr(*l, r.child("landscape"));
    e.landscape_grid = lr.count_or("grid", e.landscape_grid);
    if (const json* eps = lr.optional("epsilon")) e.landscape_epsilon = as_fraction(*eps, lr.child("epsilon"));
    e.landscape_sample = lr.count_or("sample", e.landscape_sample);
    lr.finish();
    if (e.landscape_grid < 3 || e.landscape_grid % 2 == 0)
      throw ConfigError(lr.child("grid"), "must be odd and at least 3");
  }
  if (const json* s = r.optional("ablation_smooth"))
    e.ablation_smooth = activation_from_json(*s, r.child("ablation_smooth"));
  r.finish();
  return e;
}

json paths_json(const std::vector<std::filesystem::path>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

}  // namespace

Shape DataConfig::sample_shape() const {
  switch (source) {
    case Source::Blobs:
      return synth_blobs(classes, 1, dim, separation, 0).sample_shape();
    case Source::Idx: {
      std::ifstream in(train_images, std::ios::binary);
      unsigned char h[16];
      if (!in.read(reinterpret_cast<char*>(h), 16))
        throw DataError(DataErrorKind::Io, "cannot read IDX header of " + train_images.string());
      auto be = [&](int o) {
        return (std::size_t{h[o]} << 24) | (std::size_t{h[o + 1]} << 16) | (std::size_t{h[o + 2]} << 8) |
               std::size_t{h[o + 3]};
      };
      return {1, be(8), be(12)};
    }
    case Source::Cifar10:
      return {3, 32, 32};
  }
  return {};
}

std::size_t DataConfig::class_count() const { return source == Source::Blobs ? classes : 10; }

std::pair<Dataset, Dataset> DataConfig::load(std::uint64_t run_seed) const {
  auto limit = [](Dataset d, std::size_t n) {
    return n == 0 || n >= d.size() ? d : d.slice(0, n);
  };
  switch (source) {
    case Source::Blobs: {
      const std::uint64_t s = seed.value_or(derive_seed(run_seed, "data"));
      return split_dataset(synth_blobs(classes, per_class, dim, separation, s), val_count, s);
    }
    case Source::Idx: {
      Dataset train = load_idx(train_images, train_labels, "train");
      Dataset val = load_idx(test_images, test_labels, "val");
      return {limit(std::move(train), train_limit), limit(std::move(val), val_limit)};
    }
    case Source::Cifar10: {
      Dataset train = load_cifar10(train_batches, "train");
      Dataset val = load_cifar10(test_batches, "val");
      return {limit(std::move(train), train_limit), limit(std::move(val), val_limit)};
    }
  }
  throw ValueError("data: unknown source");
}

ModelSpec ModelConfig::build(const Shape& input_shape, std::size_t classes,
                             const Activation& forward) const {
  const auto pair = ActivationPair::same(forward);
  switch (arch) {
    case Arch::Cnn:
      return default_cnn(input_shape, classes, widths, pair);
    case Arch::Mlp:
      return default_mlp(input_shape, classes, widths, pair);
    case Arch::Custom: {
      ModelSpec spec{layers, pair, input_shape, classes};
      spec.validate();
      return spec;
    }
  }
  throw ValueError("model: unknown architecture");
}

ModelSpec RunConfig::model_spec() const {
  const ModelSpec base = model.build(data.sample_shape(), data.class_count(), train.overrides.forward);
  return training_spec(base, train.overrides);
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "");
  RunConfig cfg;
  cfg.name = r.string_or("name", "");
  if (const json* s = r.optional("seed")) cfg.seed = as_count(*s, "seed");
  cfg.data = parse_data(r.required("data"), base_dir);
  cfg.model = parse_model(r.required("model"));
  cfg.train = parse_train(r.required("train"));
  if (const json* e = r.optional("eval")) cfg.eval = parse_eval(*e);
  r.finish();
  cfg.set_seed(cfg.seed);
  // File-backed shapes are only known once the data is opened.
  if (cfg.data.source == Source::Blobs) {
    try {
      (void)cfg.model_spec();
    } catch (const Error& e) {
      throw ConfigError("model", e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("SATLAB_PRESETS"); env && *env) return env;
  return SATLAB_PRESET_DIR;
}

std::filesystem::path preset_path(const std::string& name) {
  const auto p = preset_dir() / (name + ".json");
  if (!std::filesystem::exists(p))
    throw ConfigError("$", "unknown preset '" + name + "' (looked in " + preset_dir().string() + ")");
  return p;
}

std::vector<std::string> preset_list() {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(preset_dir(), ec))
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  std::ranges::sort(out);
  return out;
}

json to_json(const RunConfig& cfg) {
  json data;
  const DataConfig& d = cfg.data;
  switch (d.source) {
    case Source::Blobs:
      data = {{"source", "blobs"},       {"classes", d.classes},   {"per_class", d.per_class},
              {"dim", d.dim},            {"separation", d.separation}, {"val_count", d.val_count}};
      if (d.seed) data["seed"] = *d.seed;
      break;
    case Source::Idx:
      data = {{"source", "idx"},
              {"train_images", d.train_images.string()},
              {"train_labels", d.train_labels.string()},
              {"test_images", d.test_images.string()},
              {"test_labels", d.test_labels.string()},
              {"train_limit", d.train_limit},
              {"val_limit", d.val_limit}};
      break;
    case Source::Cifar10:
      data = {{"source", "cifar10"},
              {"train_batches", paths_json(d.train_batches)},
              {"test_batches", paths_json(d.test_batches)},
              {"train_limit", d.train_limit},
              {"val_limit", d.val_limit}};
      break;
  }
  json model;
  switch (cfg.model.arch) {
    case Arch::Cnn: model = {{"arch", "cnn"}, {"channels", cfg.model.widths}}; break;
    case Arch::Mlp: model = {{"arch", "mlp"}, {"hidden", cfg.model.widths}}; break;
    case Arch::Custom: {
      json layers = json::array();
      for (const auto& l : cfg.model.layers) layers.push_back(to_json(l));
      model = {{"arch", "custom"}, {"layers", layers}};
      break;
    }
  }
  json train = to_json(cfg.train);
  train.erase("seed");
  train["activation"] = train["overrides"];
  train.erase("overrides");
  const EvalConfig& e = cfg.eval;
  json landscape{{"grid", e.landscape_grid}, {"sample", e.landscape_sample}};
  if (e.landscape_epsilon) landscape["epsilon"] = *e.landscape_epsilon;
  json eval{{"attack", to_json(e.attack)},
            {"samples", e.samples},
            {"sweep_iterations", e.sweep_iterations},
            {"sweep_epsilons", e.sweep_epsilons},
            {"landscape", landscape},
            {"ablation_smooth", to_json(e.ablation_smooth)}};
  return {{"name", cfg.name}, {"seed", cfg.seed}, {"data", data},
          {"model", model},   {"train", train},   {"eval", eval}};
}

}  // namespace sat
