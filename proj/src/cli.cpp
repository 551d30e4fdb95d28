#include "satlab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

#include "satlab/checkpoint.hpp"
#include "satlab/config.hpp"
#include "satlab/errors.hpp"
#include "satlab/gradcheck.hpp"
#include "satlab/landscape.hpp"
#include "satlab/rng.hpp"
#include "satlab/serialize.hpp"

namespace sat {

namespace {

namespace fs = std::filesystem;

/// Checkpoint does not belong to the configured model.
class MismatchError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string config;
  std::string preset;
  std::string out = "out";
  std::string ckpt;
  std::optional<std::uint64_t> seed;
  std::string fault;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(DataErrorKind::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw DataError(DataErrorKind::Io, "write failed for " + path.string());
}

RunConfig resolve_config(const Options& o) {
  if (o.config.empty() == o.preset.empty())
    throw ConfigError("$", "give exactly one of --config or --preset");
  RunConfig rc = load_config(o.config.empty() ? preset_path(o.preset) : fs::path(o.config));
  if (o.seed) rc.set_seed(*o.seed);
  return rc;
}

fs::path prepare_out(const Options& o) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

Dataset eval_subset(const Dataset& val, const EvalConfig& e) {
  return e.samples == 0 || e.samples >= val.size() ? val : val.slice(0, e.samples);
}

/// Loads --ckpt and checks it against the configured model.
ModelParams load_matching(const Options& o, const ModelSpec& spec) {
  if (o.ckpt.empty()) throw ConfigError("$", "--ckpt is required");
  Checkpoint ck;
  try {
    ck = load_checkpoint(o.ckpt);
  } catch (const DataError& e) {
    throw MismatchError(std::string("checkpoint unreadable: ") + e.what());
  }
  if (ck.metadata.contains("model") && ck.metadata["model"] != to_json(spec))
    throw MismatchError("checkpoint model " + ck.metadata["model"].dump() +
                        " does not match configured model " + to_json(spec).dump());
  try {
    check_params(spec, ck.params);
  } catch (const Error& e) {
    throw MismatchError(std::string("checkpoint parameters do not match the model: ") + e.what());
  }
  return ck.params;
}

json sweep_json(const SweepResult& s) {
  json pts = json::array();
  for (const auto& [k, acc] : s.points) pts.push_back({k, acc});
  return pts;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve_config(o);
  const fs::path dir = prepare_out(o);
  const auto [train, val] = rc.data.load(rc.seed);
  const ModelSpec spec = rc.model_spec();
  const TrainResult tr = adversarial_train(rc.train, spec, train, val, [&](const EpochMetrics& m) {
    err << "epoch " << m.epoch << " lr " << m.lr << " loss " << m.train_loss << " clean " << m.clean_acc
        << " robust " << m.robust_acc << "\n";
  });
  const Dataset eval = eval_subset(val, rc.eval);
  const double clean = clean_accuracy(tr.spec, tr.params, eval);
  const double robust =
      robust_accuracy(tr.spec, tr.params, eval, rc.eval.attack, derive_seed(rc.seed, "eval"));
  save_checkpoint(tr.checkpoint, dir / "model.ckpt");
  write_file(dir / "metrics.csv", tr.metrics.to_csv());
  write_file(dir / "config.json", to_json(rc).dump(2) + "\n");
  out << json{{"command", "train"},
              {"name", rc.name},
              {"seed", rc.seed},
              {"epochs", tr.metrics.rows.size()},
              {"final_train_loss", tr.metrics.rows.back().train_loss},
              {"clean_acc", clean},
              {"robust_acc", robust},
              {"checkpoint", (dir / "model.ckpt").string()},
              {"metrics", (dir / "metrics.csv").string()}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const ModelSpec spec = rc.model_spec();
  const ModelParams params = load_matching(o, spec);
  const fs::path dir = prepare_out(o);
  const Dataset eval = eval_subset(rc.data.load(rc.seed).second, rc.eval);
  const double clean = clean_accuracy(spec, params, eval);
  const double robust = robust_accuracy(spec, params, eval, rc.eval.attack, derive_seed(rc.seed, "eval"));
  const std::uint64_t sweep_seed = derive_seed(rc.seed, "sweep");
  json summary{{"command", "eval"}, {"seed", rc.seed}, {"samples", eval.size()},
               {"clean_acc", clean}, {"robust_acc", robust}};
  if (!rc.eval.sweep_iterations.empty()) {
    const auto s = sweep_iterations(spec, params, eval, rc.eval.attack.epsilon, rc.eval.sweep_iterations,
                                    sweep_seed);
    write_file(dir / "sweep_iterations.csv", s.to_csv());
    summary["sweep_iterations"] = sweep_json(s);
  }
  if (!rc.eval.sweep_epsilons.empty()) {
    const auto s = sweep_epsilon(spec, params, eval, rc.eval.sweep_epsilons, rc.eval.attack.iterations,
                                 sweep_seed);
    write_file(dir / "sweep_epsilon.csv", s.to_csv());
    summary["sweep_epsilon"] = sweep_json(s);
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_attack(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const ModelSpec spec = rc.model_spec();
  const ModelParams params = load_matching(o, spec);
  const fs::path dir = prepare_out(o);
  const Dataset eval = eval_subset(rc.data.load(rc.seed).second, rc.eval);
  const Tensor adv = pgd(spec, params, eval.images, eval.labels, rc.eval.attack, derive_seed(rc.seed, "eval"));
  const auto clean_pred = predict(spec, params, eval.images);
  const auto adv_pred = predict(spec, params, adv);
  const std::size_t d = eval.images.size() / eval.size();
  std::string csv = "index,label,clean_pred,adv_pred,linf\n";
  std::size_t clean_hits = 0, adv_hits = 0;
  double max_linf = 0.0;
  char buf[128];
  for (std::size_t i = 0; i < eval.size(); ++i) {
    double linf = 0.0;
    for (std::size_t k = i * d; k < (i + 1) * d; ++k)
      linf = std::max(linf, std::abs(adv[k] - eval.images[k]));
    max_linf = std::max(max_linf, linf);
    clean_hits += clean_pred[i] == eval.labels[i];
    adv_hits += adv_pred[i] == eval.labels[i];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.10g\n", i, eval.labels[i], clean_pred[i], adv_pred[i],
                  linf);
    csv += buf;
  }
  write_file(dir / "attack.csv", csv);
  const double n = static_cast<double>(eval.size());
  out << json{{"command", "attack"},
              {"seed", rc.seed},
              {"samples", eval.size()},
              {"attack", to_json(rc.eval.attack)},
              {"clean_acc", static_cast<double>(clean_hits) / n},
              {"robust_acc", static_cast<double>(adv_hits) / n},
              {"max_linf", max_linf}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_landscape(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const ModelSpec spec = rc.model_spec();
  const ModelParams params = load_matching(o, spec);
  const fs::path dir = prepare_out(o);
  const Dataset val = rc.data.load(rc.seed).second;
  const std::size_t idx = rc.eval.landscape_sample;
  if (idx >= val.size())
    throw ConfigError("eval.landscape.sample", "index " + std::to_string(idx) + " outside the " +
                                                   std::to_string(val.size()) + " validation samples");
  const Dataset one = val.slice(idx, idx + 1);
  const double eps = rc.eval.landscape_epsilon.value_or(rc.eval.attack.epsilon);
  const LandscapeGrid g = loss_landscape(spec, params, one.images, one.labels[0], eps, rc.eval.landscape_grid,
                                         derive_seed(rc.seed, "landscape"));
  write_file(dir / "landscape.csv", g.to_csv());
  out << json{{"command", "landscape"},
              {"seed", rc.seed},
              {"sample", idx},
              {"grid", g.size},
              {"epsilon", eps},
              {"rows", g.loss.size()},
              {"clean_loss", g.clean_loss},
              {"roughness", laplacian_roughness(g)},
              {"error_cells", g.error_cells.size()}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_ablation(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  if (rc.train.overrides.forward.kind != ActivationKind::ReLU)
    throw ConfigError("train.activation.forward", "ablation requires a relu forward activation");
  const fs::path dir = prepare_out(o);
  const auto [train, val] = rc.data.load(rc.seed);
  const ModelSpec spec = rc.model_spec();
  const AblationResult r = run_ablation(rc.train, spec, rc.eval.ablation_smooth, train,
                                        eval_subset(val, rc.eval), rc.eval.attack);
  write_file(dir / "ablation.csv", r.to_csv());
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"cell", row.cell}, {"clean_acc", row.clean_acc}, {"robust_acc", row.robust_acc}});
  out << json{{"command", "ablation"}, {"seed", rc.seed}, {"smooth", r.smooth.label()}, {"rows", rows}}.dump()
      << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  std::optional<ActivationKind> fault;
  if (!o.fault.empty()) {
    try {
      fault = parse_activation_kind(o.fault);
    } catch (const ValueError& e) {
      throw ConfigError("--inject-fault", e.what());
    }
  }
  const GradcheckSummary s = run_gradcheck(fault);
  err << s.table();
  json failures = json::array();
  for (const auto& d : s.derivatives)
    if (!d.pass) {
      failures.push_back({{"activation", d.activation.label()}, {"max_relative_error", d.max_relative_error}});
      err << "FAIL " << d.activation.label() << " max relative error " << d.max_relative_error << "\n";
    }
  json jumps = json::object();
  for (const auto& r : s.smoothness) jumps[r.kind.label()] = r.jump;
  out << json{{"command", "gradcheck"}, {"pass", s.pass}, {"failures", failures}, {"jumps", jumps}}.dump()
      << "\n";
  return s.pass ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smooth adversarial training lab", "satlab"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_ckpt) {
    auto* cfg = sub->add_option("--config", o.config, "Run config JSON");
    auto* pre = sub->add_option("--preset", o.preset, "Name of a shipped preset");
    cfg->excludes(pre);
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Seed override");
    if (needs_ckpt) sub->add_option("--ckpt", o.ckpt, "Checkpoint to evaluate")->required();
  };
  auto* train = app.add_subcommand("train", "Adversarially train a model");
  add_common(train, false);
  auto* eval = app.add_subcommand("eval", "Clean/robust accuracy and robustness sweeps");
  add_common(eval, true);
  auto* attack = app.add_subcommand("attack", "Run the evaluation attack and log per-sample results");
  add_common(attack, true);
  auto* landscape = app.add_subcommand("landscape", "Sample a 2-D adversarial loss landscape");
  add_common(landscape, true);
  auto* ablation = app.add_subcommand("ablation", "Four-cell backward-substitution ablation");
  add_common(ablation, false);
  auto* gradcheck = app.add_subcommand("gradcheck", "Analytic vs finite-difference derivative suite");
  gradcheck->add_option("--inject-fault", o.fault, "Perturb one kind's derivative (test hook)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out);
    if (attack->parsed()) return cmd_attack(o, out);
    if (landscape->parsed()) return cmd_landscape(o, out);
    if (ablation->parsed()) return cmd_ablation(o, out);
    if (gradcheck->parsed()) return cmd_gradcheck(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error at " << e.what() << "\n";
    return kExitUsage;
  } catch (const MismatchError& e) {
    err << "checkpoint mismatch: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sat
