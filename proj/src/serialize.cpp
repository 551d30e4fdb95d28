#include "satlab/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "satlab/errors.hpp"
#include "satlab/rng.hpp"

namespace sat {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

std::size_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
    throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

double as_fraction(const json& j, const std::string& path) {
  if (!j.is_string()) return as_number(j, path);
  const std::string text = j.get<std::string>();
  double num = 0.0, den = 0.0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf/%lf%c", &num, &den, &tail) != 2 || !(den > 0.0) ||
      !std::isfinite(num))
    throw ConfigError(path, "expected a number or a fraction like \"4/255\", got \"" + text + "\"");
  return num / den;
}

ObjectReader::ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
}

bool ObjectReader::has(const std::string& key) const { return j_.contains(key); }

std::string ObjectReader::child(const std::string& key) const { return join(path_, key); }

const json& ObjectReader::required(const std::string& key) {
  if (!j_.contains(key)) throw ConfigError(child(key), "missing required key");
  seen_.push_back(key);
  return j_.at(key);
}

const json* ObjectReader::optional(const std::string& key) {
  if (!j_.contains(key)) return nullptr;
  seen_.push_back(key);
  return &j_.at(key);
}

double ObjectReader::number(const std::string& key) { return as_number(required(key), child(key)); }

double ObjectReader::number_or(const std::string& key, double fallback) {
  const json* v = optional(key);
  return v ? as_number(*v, child(key)) : fallback;
}

std::size_t ObjectReader::count(const std::string& key) { return as_count(required(key), child(key)); }

std::size_t ObjectReader::count_or(const std::string& key, std::size_t fallback) {
  const json* v = optional(key);
  return v ? as_count(*v, child(key)) : fallback;
}

bool ObjectReader::boolean_or(const std::string& key, bool fallback) {
  const json* v = optional(key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(child(key), "expected a boolean");
  return v->get<bool>();
}

std::string ObjectReader::string(const std::string& key) {
  const json& v = required(key);
  if (!v.is_string()) throw ConfigError(child(key), "expected a string");
  return v.get<std::string>();
}

std::string ObjectReader::string_or(const std::string& key, std::string fallback) {
  if (!has(key)) return fallback;
  return string(key);
}

std::vector<std::size_t> ObjectReader::counts_or(const std::string& key,
                                                 std::vector<std::size_t> fallback) {
  const json* v = optional(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError(child(key), "expected an array");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_count((*v)[i], index_path(child(key), i)));
  return out;
}

std::vector<double> ObjectReader::numbers_or(const std::string& key, std::vector<double> fallback) {
  const json* v = optional(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError(child(key), "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], index_path(child(key), i)));
  return out;
}

void ObjectReader::finish() const {
  for (const auto& [key, _] : j_.items())
    if (std::ranges::find(seen_, key) == seen_.end()) throw ConfigError(child(key), "unknown key");
}

// ---------------------------------------------------------------------------
// Writers

json to_json(const Activation& a) {
  json j{{"kind", std::string(to_string(a.kind))}};
  if (has_alpha(a.kind)) j["alpha"] = a.alpha;
  return j;
}

json to_json(const ActivationPair& p) {
  return {{"forward", to_json(p.forward)}, {"backward", to_json(p.backward)}};
}

json to_json(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const Dense& d) -> json {
                          return {{"type", "dense"}, {"in", d.in}, {"out", d.out}};
                        },
                        [](const Conv& c) -> json {
                          return {{"type", "conv"},
                                  {"in_channels", c.in_channels},
                                  {"out_channels", c.out_channels},
                                  {"kernel", c.kernel},
                                  {"stride", c.stride},
                                  {"pad", c.pad}};
                        },
                        [](const Flatten&) -> json { return {{"type", "flatten"}}; },
                    },
                    layer);
}

json to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(to_json(l));
  return {{"layers", layers},
          {"activation", to_json(spec.activation)},
          {"input_shape", spec.input_shape},
          {"classes", spec.class_count}};
}

json to_json(const AttackConfig& cfg) {
  json j{{"epsilon", cfg.epsilon},
         {"step", cfg.step},
         {"iterations", cfg.iterations},
         {"random_init", cfg.random_init}};
  if (cfg.backward_override) j["backward_override"] = to_json(*cfg.backward_override);
  return j;
}

json to_json(const PhaseOverrides& o) {
  return {{"forward", to_json(o.forward)},
          {"attacker_backward", to_json(o.attacker_backward)},
          {"optimizer_backward", to_json(o.optimizer_backward)}};
}

json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"base_lr", cfg.base_lr},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"lr_decay_epochs", cfg.lr_decay_epochs},
          {"attack", to_json(cfg.attack)},
          {"overrides", to_json(cfg.overrides)},
          {"seed", cfg.seed},
          {"probe_size", cfg.probe_size},
          {"probe_iterations", cfg.probe_iterations},
          {"standard_training", cfg.standard_training}};
}

std::string config_hash(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Readers

Activation activation_from_json(const json& j, const std::string& path) {
  try {
    if (j.is_string()) return Activation::parse(j.get<std::string>());
    ObjectReader r(j, path);
    const std::string kind = r.string("kind");
    std::optional<double> alpha;
    if (r.has("alpha")) alpha = r.number("alpha");
    r.finish();
    try {
      return Activation::parse(kind, alpha);
    } catch (const ValueError& e) {
      throw ConfigError(alpha ? r.child("alpha") : r.child("kind"), e.what());
    }
  } catch (const ValueError& e) {
    throw ConfigError(path, e.what());
  }
}

ActivationPair activation_pair_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ActivationPair p{activation_from_json(r.required("forward"), r.child("forward")),
                   activation_from_json(r.required("backward"), r.child("backward"))};
  r.finish();
  return p;
}

LayerSpec layer_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const std::string type = r.string("type");
  LayerSpec out;
  if (type == "dense") {
    out = Dense{r.count("in"), r.count("out")};
  } else if (type == "conv") {
    Conv c;
    c.in_channels = r.count("in_channels");
    c.out_channels = r.count("out_channels");
    c.kernel = r.count_or("kernel", 3);
    c.stride = r.count_or("stride", 1);
    c.pad = r.count_or("pad", 0);
    out = c;
  } else if (type == "flatten") {
    out = Flatten{};
  } else {
    throw ConfigError(r.child("type"), "unknown layer type '" + type + "'");
  }
  r.finish();
  return out;
}

ModelSpec model_spec_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ModelSpec spec;
  const json& layers = r.required("layers");
  if (!layers.is_array()) throw ConfigError(r.child("layers"), "expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i)
    spec.layers.push_back(layer_from_json(layers[i], index_path(r.child("layers"), i)));
  spec.activation = activation_pair_from_json(r.required("activation"), r.child("activation"));
  spec.input_shape = r.counts_or("input_shape", {});
  spec.class_count = r.count("classes");
  r.finish();
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

AttackConfig attack_from_json(const json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return AttackConfig::preset(j.get<std::string>());
    } catch (const ValueError& e) {
      throw ConfigError(path, e.what());
    }
  }
  ObjectReader r(j, path);
  AttackConfig cfg;
  cfg.epsilon = as_fraction(r.required("epsilon"), r.child("epsilon"));
  cfg.step = as_fraction(r.required("step"), r.child("step"));
  cfg.iterations = r.count("iterations");
  cfg.random_init = r.boolean_or("random_init", true);
  if (const json* b = r.optional("backward_override"))
    cfg.backward_override = activation_from_json(*b, r.child("backward_override"));
  r.finish();
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0))
    throw ConfigError(r.child("epsilon"), "must be in [0,1]");
  if (cfg.step < 0.0) throw ConfigError(r.child("step"), "must be non-negative");
  if (cfg.iterations < 1) throw ConfigError(r.child("iterations"), "must be at least 1");
  return cfg;
}

PhaseOverrides overrides_from_json(const json& j, const std::string& path) {
  if (j.is_string() || (j.is_object() && j.contains("kind")))
    return PhaseOverrides::uniform(activation_from_json(j, path));
  ObjectReader r(j, path);
  PhaseOverrides o;
  o.forward = activation_from_json(r.required("forward"), r.child("forward"));
  const json* a = r.optional("attacker_backward");
  const json* b = r.optional("optimizer_backward");
  o.attacker_backward = a ? activation_from_json(*a, r.child("attacker_backward")) : o.forward;
  o.optimizer_backward = b ? activation_from_json(*b, r.child("optimizer_backward")) : o.forward;
  r.finish();
  return o;
}

namespace {

void read_schedule(ObjectReader& r, TrainConfig& cfg) {
  cfg.epochs = r.count_or("epochs", cfg.epochs);
  cfg.batch_size = r.count_or("batch_size", cfg.batch_size);
  cfg.base_lr = r.number_or("base_lr", cfg.base_lr);
  cfg.momentum = r.number_or("momentum", cfg.momentum);
  cfg.weight_decay = r.number_or("weight_decay", cfg.weight_decay);
  cfg.lr_decay_epochs = r.counts_or("lr_decay_epochs", cfg.lr_decay_epochs);
  cfg.probe_size = r.count_or("probe_size", cfg.probe_size);
  cfg.probe_iterations = r.count_or("probe_iterations", cfg.probe_iterations);
  cfg.standard_training = r.boolean_or("standard_training", cfg.standard_training);
}

void check_schedule(const ObjectReader& r, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError(r.child("epochs"), "must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError(r.child("batch_size"), "must be at least 1");
  if (cfg.base_lr < 0.0) throw ConfigError(r.child("base_lr"), "must be non-negative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError(r.child("momentum"), "must be in [0,1)");
  if (cfg.weight_decay < 0.0) throw ConfigError(r.child("weight_decay"), "must be non-negative");
  for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
    const auto p = index_path(r.child("lr_decay_epochs"), i);
    if (cfg.lr_decay_epochs[i] >= cfg.epochs) throw ConfigError(p, "must be below epochs");
    if (i > 0 && cfg.lr_decay_epochs[i] <= cfg.lr_decay_epochs[i - 1])
      throw ConfigError(p, "decay epochs must be strictly increasing");
  }
  if (cfg.probe_iterations < 1) throw ConfigError(r.child("probe_iterations"), "must be at least 1");
}

}  // namespace

void train_schedule_from_json(const json& j, const std::string& path, TrainConfig& cfg) {
  ObjectReader r(j, path);
  read_schedule(r, cfg);
  r.finish();
  check_schedule(r, cfg);
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  TrainConfig cfg;
  read_schedule(r, cfg);
  cfg.attack = attack_from_json(r.required("attack"), r.child("attack"));
  cfg.overrides = overrides_from_json(r.required("overrides"), r.child("overrides"));
  if (const json* s = r.optional("seed")) cfg.seed = as_count(*s, r.child("seed"));
  r.finish();
  check_schedule(r, cfg);
  return cfg;
}

}  // namespace sat
