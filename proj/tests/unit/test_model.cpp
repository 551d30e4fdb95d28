#include <doctest.h>

#include <cmath>

#include "../common/mlp_oracle.hpp"
#include "helpers.hpp"
#include "satlab/errors.hpp"
#include "satlab/model.hpp"

using namespace sat;
using sat::testing::random_tensor;

TEST_CASE("init_params is deterministic and shaped by the spec") {
  const ModelSpec spec{{Dense{4, 3}, Dense{3, 2}}, ActivationPair::same(Activation::relu()), {4}, 2};
  const auto a = init_params(spec, 7), b = init_params(spec, 7), c = init_params(spec, 8);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.at("layer0.weight").shape() == Shape{3, 4});
  CHECK(a.at("layer0.bias").shape() == Shape{3});
  CHECK(a.at("layer0.bias") == Tensor({3}, 0.0));
  CHECK(a.size() == 4);
}

TEST_CASE("init stddev is sqrt(2 / fan_in)") {
  const ModelSpec spec{{Dense{1000, 1000}, Dense{1000, 2}}, ActivationPair::same(Activation::relu()), {1000}, 2};
  const Tensor w = init_params(spec, 3).at("layer0.weight");
  double mean = 0, sq = 0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(w.size()));
  CHECK(std::abs(sd / std::sqrt(2.0 / 1000) - 1.0) < 0.02);
}

TEST_CASE("smoothrelu specs carry one alpha per activated layer") {
  const auto spec = default_mlp({6}, 3, {5, 4}, ActivationPair::same(Activation::smoothrelu(400)));
  const auto p = init_params(spec, 1);
  CHECK(p.at("layer0.alpha").item() == 400.0);
  CHECK(p.at("layer1.alpha").item() == 400.0);
  CHECK(p.count("layer2.alpha") == 0);
  auto bad = p;
  bad.erase("layer1.alpha");
  CHECK_THROWS_AS(check_params(spec, bad), ShapeError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS(ModelSpec{{Dense{4, 3}, Dense{2, 2}}, {}, {4}, 2}.validate());
  CHECK_THROWS(ModelSpec{{Dense{4, 3}}, {}, {4}, 1}.validate());
  CHECK_THROWS(ModelSpec{{Dense{4, 3}}, {}, {4}, 2}.validate());
  CHECK_THROWS(default_cnn({5}, 10));
  const auto cnn = default_cnn({1, 8, 8}, 10);
  CHECK(cnn.shape_after(0) == Shape{16, 4, 4});
  CHECK(cnn.shape_after(1) == Shape{32, 2, 2});
  CHECK(cnn.activated_layers() == std::vector<std::size_t>{0, 1});
}

TEST_CASE("forward examples") {
  const ModelSpec id{{Dense{2, 2}}, ActivationPair::same(Activation::relu()), {2}, 2};
  ModelParams p{{"layer0.weight", Tensor({2, 2}, {1, 0, 0, 1})}, {"layer0.bias", Tensor({2})}};
  CHECK(predict_logits(id, p, Tensor({1, 2}, {1, -1})) == Tensor({1, 2}, {1, -1}));

  // Identity layer followed by relu and an identity readout.
  const ModelSpec two{{Dense{2, 2}, Dense{2, 2}}, ActivationPair::same(Activation::relu()), {2}, 2};
  ModelParams q = p;
  q.emplace("layer1.weight", Tensor({2, 2}, {1, 0, 0, 1}));
  q.emplace("layer1.bias", Tensor({2}));
  CHECK(predict_logits(two, q, Tensor({1, 2}, {1, -1})) == Tensor({1, 2}, {1, 0}));

  auto zero = init_params(default_mlp({5}, 3), 0);
  for (auto& [_, t] : zero)
    for (auto& v : t.data()) v = 0;
  CHECK(predict_logits(default_mlp({5}, 3), zero, random_tensor({4, 5}, 1)) == Tensor({4, 3}, 0.0));

  CHECK_THROWS_AS(predict_logits(id, p, Tensor({1, 3})), ShapeError);
}

TEST_CASE("forward is invariant to the backward activation") {
  const auto spec = default_mlp({1, 4, 4}, 10, {12, 12});
  const auto params = init_params(spec, 4);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Tensor x = random_tensor({1, 1, 4, 4}, 500 + s, 0, 1);
    Graph a, b;
    Var la = forward(spec, bind_params(a, params), a.leaf(x), {Activation::relu(), Activation::relu()});
    Var lb = forward(spec, bind_params(b, params), b.leaf(x), {Activation::relu(), Activation::psoftplus(10)});
    CHECK(la.value() == lb.value());
  }
}

TEST_CASE("cross entropy") {
  const std::vector<std::size_t> labels{3, 7};
  CHECK(cross_entropy_value(Tensor({2, 10}, 0.25), labels) == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  Tensor sure({1, 3}, {0, 800, 0});
  CHECK(cross_entropy_value(sure, std::vector<std::size_t>{1}) < 1e-300);
  CHECK_THROWS_AS(cross_entropy_value(Tensor({1, 3}), std::vector<std::size_t>{3}), ValueError);
  CHECK_THROWS_AS(cross_entropy_value(Tensor({2, 3}), std::vector<std::size_t>{0}), ShapeError);

  const Tensor logits = random_tensor({4, 5}, 9, -3, 3);
  const std::vector<std::size_t> y{0, 4, 2, 2};
  Tensor shifted = logits;
  for (auto& v : shifted.data()) v += 17.5;
  CHECK(std::abs(cross_entropy_value(shifted, y) - cross_entropy_value(logits, y)) < 1e-12);

  Graph g;
  Var l = g.leaf(logits);
  const Tensor grad = backward(g, cross_entropy(l, y))[l];
  const Tensor fd = finite_difference_grad([&](const Tensor& t) { return cross_entropy_value(t, y); }, logits, 1e-5);
  CHECK(max_relative_error(grad, fd) < 1e-7);
  // softmax - onehot, averaged over the batch.
  for (std::size_t n = 0; n < 4; ++n) {
    double z = 0, m = -INFINITY;
    for (std::size_t c = 0; c < 5; ++c) m = std::max(m, logits[n * 5 + c]);
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits[n * 5 + c] - m);
    for (std::size_t c = 0; c < 5; ++c) {
      const double want = (std::exp(logits[n * 5 + c] - m) / z - (c == y[n] ? 1.0 : 0.0)) / 4.0;
      CHECK(grad[n * 5 + c] == doctest::Approx(want).epsilon(1e-13));
    }
  }
}

TEST_CASE("small MLP gradients match the plain-loop oracle") {
  for (const auto& act : {Activation::softplus(), Activation::silu(), Activation::gelu(), Activation::celu(1.5),
                          Activation::psoftplus(10), Activation::smoothrelu(5), Activation::elu(1)}) {
    const auto spec = default_mlp({1, 3, 3}, 4, {6, 5}, ActivationPair::same(act));
    auto params = init_params(spec, 2);
    const Tensor x = random_tensor({3, 1, 3, 3}, 77, 0, 1);
    const std::vector<std::size_t> y{0, 3, 1};
    Graph g;
    Var xv = g.leaf(x, "input");
    const auto grads = backward(g, cross_entropy(forward(spec, bind_params(g, params), xv, spec.activation), y));
    testing::MlpOracle oracle(spec, params, x, y);
    CHECK(std::abs(oracle.loss() - cross_entropy_value(predict_logits(spec, params, x), y)) < 1e-13);
    for (const auto& [name, fd] : oracle.fd_gradients()) {
      INFO(act.label(), " ", name);
      CHECK(max_relative_error(grads.param(name), fd, 1e-8) < 1e-5);
    }
  }
}

TEST_CASE("mixed pair gradient equals the manual chain rule") {
  // One hidden layer: logits = W2 relu(W1 x + b1) + b2 with psoftplus' in the backward.
  const auto spec = default_mlp({3}, 3, {3}, {Activation::relu(), Activation::psoftplus(10)});
  const auto params = init_params(spec, 5);
  const Tensor x = random_tensor({1, 3}, 6, 0, 1);
  const std::vector<std::size_t> y{2};
  const Tensor& w1 = params.at("layer0.weight");
  const Tensor& b1 = params.at("layer0.bias");
  const Tensor& w2 = params.at("layer1.weight");
  const Tensor logits = predict_logits(spec, params, x);
  double m = -INFINITY, z = 0;
  for (double v : logits.data()) m = std::max(m, v);
  for (double v : logits.data()) z += std::exp(v - m);
  double dlogit[3], pre[3];
  for (std::size_t c = 0; c < 3; ++c) dlogit[c] = std::exp(logits[c] - m) / z - (c == 2 ? 1.0 : 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    pre[i] = b1[i];
    for (std::size_t j = 0; j < 3; ++j) pre[i] += w1[i * 3 + j] * x[j];
  }
  Tensor want({1, 3});
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 3; ++i) {
      double dh = 0;
      for (std::size_t c = 0; c < 3; ++c) dh += dlogit[c] * w2[c * 3 + i];
      want[j] += dh * activation_derivative(Activation::psoftplus(10), pre[i]) * w1[i * 3 + j];
    }
  Graph g;
  Var xv = g.leaf(x);
  const Tensor got = backward(g, cross_entropy(forward(spec, bind_params(g, params, false), xv, spec.activation), y))[xv];
  for (std::size_t j = 0; j < 3; ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-14));
}
