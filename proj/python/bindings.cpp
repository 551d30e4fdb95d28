#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "satlab/activations.hpp"
#include "satlab/attack.hpp"
#include "satlab/checkpoint.hpp"
#include "satlab/cli.hpp"
#include "satlab/config.hpp"
#include "satlab/data.hpp"
#include "satlab/errors.hpp"
#include "satlab/landscape.hpp"
#include "satlab/model.hpp"
#include "satlab/train.hpp"

namespace py = pybind11;
using namespace sat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ModelParams to_params(const std::map<std::string, Array>& m) {
  ModelParams p;
  for (const auto& [k, v] : m) p.emplace(k, to_tensor(v));
  return p;
}

std::map<std::string, Array> from_params(const ModelParams& p) {
  std::map<std::string, Array> m;
  for (const auto& [k, v] : p) m.emplace(k, to_array(v));
  return m;
}

Dataset make_dataset(const Array& images, std::vector<std::size_t> labels, std::size_t classes) {
  Dataset d{to_tensor(images), std::move(labels), classes, "custom"};
  d.validate();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the satlab C++ core.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error").ptr());
  py::register_exception<DataError>(m, "DataError", m.attr("Error").ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", m.attr("Error").ptr());
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);

  py::class_<Activation>(m, "Activation")
      .def(py::init([](const std::string& name, std::optional<double> alpha) { return Activation::parse(name, alpha); }),
           py::arg("name"), py::arg("alpha") = py::none())
      .def_property_readonly("name", [](const Activation& a) { return std::string(to_string(a.kind)); })
      .def_readonly("alpha", &Activation::alpha)
      .def("label", &Activation::label)
      .def("value", [](const Activation& a, const Array& x) { return to_array(act_forward(a, to_tensor(x))); })
      .def("derivative", [](const Activation& a, const Array& x) { return to_array(act_derivative(a, to_tensor(x))); })
      .def("__eq__", [](const Activation& a, const Activation& b) { return a == b; })
      .def("__repr__", [](const Activation& a) { return "Activation(" + a.label() + ")"; });

  py::class_<ActivationPair>(m, "ActivationPair")
      .def(py::init<Activation, Activation>(), py::arg("forward"), py::arg("backward"))
      .def(py::init(&ActivationPair::same))
      .def_readwrite("forward", &ActivationPair::forward)
      .def_readwrite("backward", &ActivationPair::backward);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_readonly("activation", &ModelSpec::activation)
      .def_readonly("input_shape", &ModelSpec::input_shape)
      .def_readonly("class_count", &ModelSpec::class_count)
      .def_property_readonly("layer_count", [](const ModelSpec& s) { return s.layers.size(); });

  m.def("default_mlp", &default_mlp, py::arg("input_shape"), py::arg("classes"),
        py::arg("hidden") = std::vector<std::size_t>{128, 128},
        py::arg("activation") = ActivationPair::same(Activation::relu()));
  m.def("default_cnn", &default_cnn, py::arg("input_shape"), py::arg("classes"),
        py::arg("channels") = std::vector<std::size_t>{16, 32},
        py::arg("activation") = ActivationPair::same(Activation::relu()));
  m.def("init_params", [](const ModelSpec& s, std::uint64_t seed) { return from_params(init_params(s, seed)); },
        py::arg("spec"), py::arg("seed"));
  m.def("predict_logits",
        [](const ModelSpec& s, const std::map<std::string, Array>& p, const Array& x) {
          return to_array(predict_logits(s, to_params(p), to_tensor(x)));
        },
        py::arg("spec"), py::arg("params"), py::arg("images"));
  m.def("input_gradient",
        [](const ModelSpec& s, const std::map<std::string, Array>& p, const Array& x,
           const std::vector<std::size_t>& y, std::optional<ActivationPair> pair) {
          return to_array(input_gradient(s, to_params(p), to_tensor(x), y, pair.value_or(s.activation)));
        },
        py::arg("spec"), py::arg("params"), py::arg("images"), py::arg("labels"), py::arg("pair") = py::none());

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init([](double eps, double step, std::size_t k, bool random_init,
                       std::optional<Activation> override_) {
             AttackConfig c{eps, step, k, random_init, override_};
             c.validate();
             return c;
           }),
           py::arg("epsilon"), py::arg("step"), py::arg("iterations"), py::arg("random_init") = true,
           py::arg("backward_override") = py::none())
      .def_static("preset", [](const std::string& n) { return AttackConfig::preset(n); })
      .def_readonly("epsilon", &AttackConfig::epsilon)
      .def_readonly("step", &AttackConfig::step)
      .def_readonly("iterations", &AttackConfig::iterations)
      .def_readonly("random_init", &AttackConfig::random_init);

  m.def("pgd",
        [](const ModelSpec& s, const std::map<std::string, Array>& p, const Array& x,
           const std::vector<std::size_t>& y, const AttackConfig& c, std::uint64_t seed) {
          return to_array(pgd(s, to_params(p), to_tensor(x), y, c, seed));
        },
        py::arg("spec"), py::arg("params"), py::arg("images"), py::arg("labels"), py::arg("attack"),
        py::arg("seed"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("images"), py::arg("labels"), py::arg("classes"))
      .def_property_readonly("images", [](const Dataset& d) { return to_array(d.images); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("class_count", &Dataset::class_count)
      .def("__len__", &Dataset::size);
  m.def("synth_blobs", &synth_blobs, py::arg("classes"), py::arg("per_class"), py::arg("dim"),
        py::arg("separation"), py::arg("seed"));
  m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"), py::arg("split") = "train");

  m.def("clean_accuracy",
        [](const ModelSpec& s, const std::map<std::string, Array>& p, const Dataset& d) {
          return clean_accuracy(s, to_params(p), d);
        },
        py::arg("spec"), py::arg("params"), py::arg("data"));
  m.def("robust_accuracy",
        [](const ModelSpec& s, const std::map<std::string, Array>& p, const Dataset& d, const AttackConfig& c,
           std::uint64_t seed) { return robust_accuracy(s, to_params(p), d, c, seed); },
        py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("attack"), py::arg("seed"));

  m.def("train",
        [](const std::filesystem::path& config, std::optional<std::uint64_t> seed) {
          RunConfig c = load_config(config);
          if (seed) c.seed = c.train.seed = *seed;
          const auto [tr, va] = c.data.load(c.seed);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = adversarial_train(c.train, c.model_spec(), tr, va);
          }
          py::list rows;
          for (const auto& e : r.metrics.rows)
            rows.append(py::dict(py::arg("epoch") = e.epoch, py::arg("lr") = e.lr,
                                 py::arg("train_loss") = e.train_loss, py::arg("clean_acc") = e.clean_acc,
                                 py::arg("robust_acc") = e.robust_acc));
          return py::make_tuple(r.spec, from_params(r.params), rows);
        },
        py::arg("config"), py::arg("seed") = py::none(),
        "Train from a config file. Returns (spec, params, per-epoch metrics).");

  m.def("laplacian_roughness", [](const std::vector<double>& loss, std::size_t n) {
    LandscapeGrid g;
    g.size = n;
    g.loss = loss;
    return laplacian_roughness(g);
  });

  m.def("save_checkpoint",
        [](const std::map<std::string, Array>& p, const std::filesystem::path& path) {
          save_checkpoint(Checkpoint{Checkpoint::kVersion, to_params(p), nlohmann::json::object()}, path);
        },
        py::arg("params"), py::arg("path"));
  m.def("load_checkpoint", [](const std::filesystem::path& path) { return from_params(load_checkpoint(path).params); },
        py::arg("path"));

  m.def("preset_list", &preset_list);
  m.def("preset_path", &preset_path);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a satlab subcommand in process. Returns (exit_code, stdout, stderr).");
}
