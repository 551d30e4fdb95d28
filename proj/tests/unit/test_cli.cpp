#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "satlab/cli.hpp"
#include "satlab/config.hpp"

using namespace sat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
  json summary() const { return json::parse(out.substr(0, out.find('\n'))); }
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

json tiny_config() {
  return json::parse(R"({
    "name": "tiny", "seed": 3,
    "data": {"source": "blobs", "classes": 3, "per_class": 20, "dim": 16, "separation": 4, "val_count": 15},
    "model": {"arch": "mlp", "hidden": [8]},
    "train": {"epochs": 2, "batch_size": 16, "lr_decay_epochs": [1], "probe_size": 10, "probe_iterations": 2,
              "activation": "relu", "attack": {"epsilon": "8/255", "step": "8/255", "iterations": 1}},
    "eval": {"attack": {"epsilon": "8/255", "step": "2/255", "iterations": 5},
             "sweep_iterations": [1, 2, 4], "sweep_epsilons": [0, "4/255", "8/255"],
             "landscape": {"grid": 7}}
  })");
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::size_t data_rows(const std::string& csv) {
  std::size_t n = 0;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train"}).code == kExitUsage);
  CHECK(cli({"train", "--config", "a.json", "--preset", "sat-relu"}).code == kExitUsage);
  CHECK(cli({"eval", "--preset", "sat-relu"}).code == kExitUsage);  // no --ckpt
  CHECK(cli({"train", "--preset", "not-a-preset"}).code == kExitUsage);
  CHECK(cli({"gradcheck", "--inject-fault", "swish"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("gradcheck") {
  const Run ok = cli({"gradcheck"});
  CHECK(ok.code == kExitOk);
  const json s = ok.summary();
  CHECK(s["pass"] == true);
  CHECK(s["jumps"]["relu"] == 1.0);
  CHECK(s["jumps"]["elu(alpha=2)"] == 1.0);
  CHECK(s["jumps"]["celu(alpha=2)"] == 0.0);
  const Run bad = cli({"gradcheck", "--inject-fault", "gelu"});
  CHECK(bad.code == kExitVerificationFailed);
  CHECK(bad.err.find("FAIL gelu") != std::string::npos);
  CHECK(bad.summary()["failures"].size() == 1);
}

TEST_CASE("invalid config names the JSON path") {
  const auto dir = testing::temp_dir("cli-bad");
  json j = tiny_config();
  j["train"]["attack"].erase("epsilon");
  const Run r = cli({"train", "--config", write_config(dir, "c.json", j).string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("train.attack.epsilon") != std::string::npos);
}

TEST_CASE("train, eval, attack, landscape end to end") {
  const auto dir = testing::temp_dir("cli-e2e");
  const auto cfg = write_config(dir, "c.json", tiny_config()).string();
  const auto a = dir / "a", b = dir / "b";
  const Run ta = cli({"train", "--config", cfg, "--out", a.string()});
  REQUIRE(ta.code == kExitOk);
  const Run tb = cli({"train", "--config", cfg, "--out", b.string()});
  REQUIRE(tb.code == kExitOk);
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(data_rows(slurp(a / "metrics.csv")) == 2);
  CHECK(ta.summary()["clean_acc"] == tb.summary()["clean_acc"]);
  CHECK(ta.err.find("epoch 1") != std::string::npos);

  const Run seeded = cli({"train", "--config", cfg, "--out", (dir / "s").string(), "--seed", "4"});
  CHECK(seeded.summary()["seed"] == 4);
  CHECK(slurp(dir / "s" / "model.ckpt") != slurp(a / "model.ckpt"));

  // The written config reproduces the run.
  const Run again = cli({"train", "--config", (a / "config.json").string(), "--out", (dir / "r").string()});
  CHECK(slurp(dir / "r" / "model.ckpt") == slurp(a / "model.ckpt"));
  CHECK(again.code == kExitOk);

  const std::string ckpt = (a / "model.ckpt").string();
  for (const char* sub : {"eval", "attack", "landscape"}) {
    INFO(sub);
    const Run r1 = cli({sub, "--config", cfg, "--ckpt", ckpt, "--out", (dir / "e1").string()});
    const Run r2 = cli({sub, "--config", cfg, "--ckpt", ckpt, "--out", (dir / "e2").string()});
    CHECK(r1.code == kExitOk);
    CHECK(r1.out == r2.out);
  }
  for (const char* f : {"sweep_iterations.csv", "sweep_epsilon.csv", "attack.csv", "landscape.csv"}) {
    INFO(f);
    CHECK(!slurp(dir / "e1" / f).empty());
    CHECK(slurp(dir / "e1" / f) == slurp(dir / "e2" / f));
  }
  CHECK(data_rows(slurp(dir / "e1" / "landscape.csv")) == 49);
  CHECK(data_rows(slurp(dir / "e1" / "attack.csv")) == 15);
  CHECK(data_rows(slurp(dir / "e1" / "sweep_iterations.csv")) == 3);

  const json ev = cli({"eval", "--config", cfg, "--ckpt", ckpt, "--out", (dir / "e1").string()}).summary();
  CHECK(ev["clean_acc"] == ta.summary()["clean_acc"]);
  CHECK(ev["robust_acc"] == ta.summary()["robust_acc"]);
  CHECK(ev["sweep_epsilon"][0][1] == ev["clean_acc"]);
  CHECK(ev["sweep_iterations"][0][1] >= ev["sweep_iterations"][2][1]);

  // Epsilon zero: robust equals clean.
  json zero = tiny_config();
  zero["eval"]["attack"]["epsilon"] = 0;
  const json ez =
      cli({"eval", "--config", write_config(dir, "z.json", zero).string(), "--ckpt", ckpt, "--out", (dir / "z").string()})
          .summary();
  CHECK(ez["robust_acc"] == ez["clean_acc"]);
}

TEST_CASE("checkpoint mismatch exits 2") {
  const auto dir = testing::temp_dir("cli-mismatch");
  const auto cfg = write_config(dir, "c.json", tiny_config()).string();
  REQUIRE(cli({"train", "--config", cfg, "--out", (dir / "a").string()}).code == kExitOk);
  json wide = tiny_config();
  wide["model"]["hidden"] = {9};
  const auto wcfg = write_config(dir, "w.json", wide).string();
  const std::string ckpt = (dir / "a" / "model.ckpt").string();
  const Run r = cli({"eval", "--config", wcfg, "--ckpt", ckpt, "--out", (dir / "e").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("mismatch") != std::string::npos);
  json silu = tiny_config();
  silu["train"]["activation"] = "silu";
  CHECK(cli({"landscape", "--config", write_config(dir, "s.json", silu).string(), "--ckpt", ckpt, "--out",
             (dir / "e").string()})
            .code == kExitUsage);
  CHECK(cli({"attack", "--config", cfg, "--ckpt", (dir / "nope.ckpt").string(), "--out", (dir / "e").string()})
            .code == kExitUsage);
  std::ofstream(dir / "junk.ckpt") << "garbage";
  CHECK(cli({"eval", "--config", cfg, "--ckpt", (dir / "junk.ckpt").string(), "--out", (dir / "e").string()})
            .code == kExitUsage);
}

TEST_CASE("divergence exits 3") {
  const auto dir = testing::temp_dir("cli-diverge");
  json j = tiny_config();
  j["train"]["base_lr"] = 1e300;
  const Run r = cli({"train", "--config", write_config(dir, "c.json", j).string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("epoch 0") != std::string::npos);
}

TEST_CASE("ablation") {
  const auto dir = testing::temp_dir("cli-ablation");
  json j = tiny_config();
  j["eval"]["ablation_smooth"] = {{"kind", "psoftplus"}, {"alpha", 10}};
  const auto cfg = write_config(dir, "c.json", j).string();
  const Run r = cli({"ablation", "--config", cfg, "--out", (dir / "ab").string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = slurp(dir / "ab" / "ablation.csv");
  CHECK(data_rows(csv) == 4);
  CHECK(csv.find("# seed=3 forward=relu") == 0);
  const json s = r.summary();
  CHECK(s["rows"][0]["cell"] == "relu-relu");
  CHECK(s["rows"][3]["cell"] == "smooth-smooth");
  const Run t = cli({"train", "--config", cfg, "--out", (dir / "t").string()});
  CHECK(s["rows"][0]["robust_acc"] == t.summary()["robust_acc"]);
  CHECK(s["rows"][0]["clean_acc"] == t.summary()["clean_acc"]);
  CHECK(cli({"ablation", "--config", cfg, "--out", (dir / "ab2").string()}).out == r.out);
  CHECK(slurp(dir / "ab2" / "ablation.csv") == csv);

  j["train"]["activation"] = "silu";
  CHECK(cli({"ablation", "--config", write_config(dir, "s.json", j).string(), "--out", (dir / "x").string()})
            .code == kExitUsage);
}

TEST_CASE("sat-silu-mnist preset on synthetic IDX files") {
  const auto root = testing::temp_dir("cli-mnist");
  fs::create_directories(root / "configs" / "presets");
  fs::create_directories(root / "data" / "mnist");
  json preset = json::parse(slurp(preset_path("sat-silu-mnist")));
  preset["train"]["epochs"] = 1;
  preset["train"]["lr_decay_epochs"] = json::array();
  preset["eval"]["attack"] = "train-pgd1-eps4";
  std::ofstream(root / "configs" / "presets" / "sat-silu-mnist.json") << preset.dump();

  auto write_idx = [&](const std::string& img, const std::string& lab, std::uint32_t n) {
    std::vector<std::uint8_t> b{0, 0, 8, 3};
    for (std::uint32_t v : {n, 28u, 28u})
      for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
    for (std::uint32_t i = 0; i < n * 784; ++i) b.push_back(static_cast<std::uint8_t>((i * 31 + i / 784 * 7) % 256));
    std::ofstream(root / "data" / "mnist" / img, std::ios::binary)
        .write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    std::vector<std::uint8_t> l{0, 0, 8, 1};
    for (int s = 24; s >= 0; s -= 8) l.push_back(static_cast<std::uint8_t>(n >> s));
    for (std::uint32_t i = 0; i < n; ++i) l.push_back(static_cast<std::uint8_t>(i % 10));
    std::ofstream(root / "data" / "mnist" / lab, std::ios::binary)
        .write(reinterpret_cast<const char*>(l.data()), static_cast<std::streamsize>(l.size()));
  };
  write_idx("train-images-idx3-ubyte", "train-labels-idx1-ubyte", 40);
  write_idx("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 10);

  ::setenv("SATLAB_PRESETS", (root / "configs" / "presets").c_str(), 1);
  const Run r = cli({"train", "--preset", "sat-silu-mnist", "--out", (root / "out").string()});
  ::unsetenv("SATLAB_PRESETS");
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(root / "out" / "model.ckpt"));
  CHECK(data_rows(slurp(root / "out" / "metrics.csv")) >= 1);
}
