#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairgo/nn.hpp"
#include "grad_check.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace fairgo;
using nn::Matrix;
using nn::Vector;

TEST_CASE("seeded rng is deterministic and in range") {
  nn::SeededRng a(42), b(42), c(43);
  bool all_equal = true, any_differs = false;
  for (int i = 0; i < 1000; ++i) {
    double x = a.uniform01();
    double y = b.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    all_equal = all_equal && (x == y);
    any_differs = any_differs || (x != c.uniform01());
  }
  CHECK(all_equal);
  CHECK(any_differs);

  nn::SeededRng d(7);
  for (int i = 0; i < 1000; ++i) CHECK(d.below(13) < 13);
}

TEST_CASE("seeded matrices: determinism, range, he-normal scale") {
  auto u1 = nn::seeded_uniform(20, 30, 0.5, 9);
  auto u2 = nn::seeded_uniform(20, 30, 0.5, 9);
  CHECK(u1 == u2);
  CHECK(u1.maxCoeff() <= 0.5);
  CHECK(u1.minCoeff() >= -0.5);

  auto h = nn::seeded_he_normal(200, 50, 3);
  double std = std::sqrt(h.array().square().mean());
  CHECK(std == doctest::Approx(std::sqrt(2.0 / 50.0)).epsilon(0.1));
}

TEST_CASE("identity network and leaky relu basics") {
  auto id = nn::Mlp::identity(4);
  Vector x(4);
  x << 1, -2, 3, -4;
  CHECK(id.forward(x) == x);

  // single LeakyReLU hidden unit: w=1, b=0 exposes the activation
  nn::Mlp net({1, 1, 1}, 1);
  net.layers()[0].weight(0, 0) = 1.0;
  net.layers()[1].weight(0, 0) = 1.0;
  Vector in(1);
  in << -1.0;
  CHECK(net.forward(in)[0] == doctest::Approx(-0.01));
  in << 2.0;
  CHECK(net.forward(in)[0] == doctest::Approx(2.0));
}

TEST_CASE("zero weights with bias give the bias") {
  nn::Mlp net({3, 2}, 5);
  net.layers()[0].weight.setZero();
  net.layers()[0].bias << 1.5, -0.5;
  Vector x(3);
  x << 9, 9, 9;
  Vector y = net.forward(x);
  CHECK(y[0] == doctest::Approx(1.5));
  CHECK(y[1] == doctest::Approx(-0.5));
}

TEST_CASE("scalar chain-rule examples") {
  // f(w) = w * x with x = 3, loss = f -> dL/dw = 3
  nn::Mlp net({1, 1}, 2);
  Vector x(1);
  x << 3.0;
  nn::Mlp::Cache cache;
  net.forward(x, &cache);
  auto grads = net.zero_grads();
  Vector dy(1);
  dy << 1.0;
  net.backward(cache, dy, grads);
  CHECK(grads[0].weight(0, 0) == doctest::Approx(3.0));

  // squared loss on a linear output: dL/db = 2 (yhat - y)
  double target = 0.25;
  double yhat = net.forward(x)[0];
  dy << 2.0 * (yhat - target);
  auto grads2 = net.zero_grads();
  net.forward(x, &cache);
  net.backward(cache, dy, grads2);
  CHECK(grads2[0].bias[0] == doctest::Approx(2.0 * (yhat - target)));
}

TEST_CASE("softmax cross entropy closed forms") {
  Vector logits(3);
  logits << 0.0, 0.0, 0.0;
  auto ce = nn::softmax_cross_entropy(logits, 1);
  CHECK(ce.loss == doctest::Approx(std::log(3.0)));
  for (int i = 0; i < 3; ++i)
    CHECK(ce.grad[i] == doctest::Approx(1.0 / 3.0 - (i == 1 ? 1.0 : 0.0)));

  Vector sat(2);
  sat << 30.0, -30.0;
  CHECK(nn::softmax_cross_entropy(sat, 0).loss == doctest::Approx(0.0).epsilon(1e-12));

  Vector any(4);
  any << 0.3, -1.2, 2.0, 0.1;
  auto c2 = nn::softmax_cross_entropy(any, 2);
  CHECK((c2.grad - (c2.probs - Vector::Unit(4, 2))).norm() == doctest::Approx(0.0));
}

TEST_CASE("mlp gradients agree with finite differences") {
  nn::Mlp net({5, 7, 3}, 11);
  Vector x = nn::seeded_uniform(5, 1, 1.0, 21).col(0);
  Vector w = nn::seeded_uniform(3, 1, 1.0, 22).col(0);

  auto loss = [&] {
    Vector y = net.forward(x);
    return 0.5 * y.squaredNorm() + w.dot(y);
  };
  nn::Mlp::Cache cache;
  Vector y = net.forward(x, &cache);
  auto grads = net.zero_grads();
  Vector dx = net.backward(cache, Vector(y + w), grads);

  CHECK(fairgo::testing::fd_check_mlp(loss, net, grads) < 1e-6);

  // input gradient
  Matrix xm = x;
  auto loss_x = [&] {
    Vector y2 = net.forward(Vector(xm));
    return 0.5 * y2.squaredNorm() + w.dot(y2);
  };
  double err = fairgo::testing::fd_max_rel_err(loss_x, xm, Matrix(dx));
  CHECK(err < 1e-6);
  CHECK(net.input_gradient(cache, Vector(y + w)) == dx);
}

TEST_CASE("adam null update and first-step magnitude") {
  nn::AdamConfig cfg{.lr = 0.01};
  Matrix p = Matrix::Constant(2, 2, 1.0);
  nn::AdamMatrix opt(2, 2, cfg);
  opt.step(p, Matrix::Zero(2, 2));
  CHECK(p == Matrix::Constant(2, 2, 1.0));
  CHECK(opt.step_count() == 1);

  Matrix q = Matrix::Zero(2, 2);
  nn::AdamMatrix opt2(2, 2, cfg);
  Matrix g = Matrix::Constant(2, 2, 0.3);
  opt2.step(q, g);
  CHECK(std::abs(q(0, 0)) == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adam sparse column updates leave other columns untouched") {
  Matrix p = Matrix::Ones(3, 4);
  nn::AdamMatrix opt(3, 4, {});
  Matrix g = Matrix::Ones(3, 4);
  opt.step_columns(p, g, {0, 2});
  CHECK(p.col(1) == Matrix::Ones(3, 1));
  CHECK(p.col(3) == Matrix::Ones(3, 1));
  CHECK(p(0, 0) != 1.0);
  CHECK(p(0, 2) != 1.0);
}

TEST_CASE("adam trajectories are deterministic") {
  auto run = [] {
    nn::Mlp net({3, 4, 2}, 77);
    nn::AdamMlp opt(net, {});
    Vector x(3);
    x << 1, 2, 3;
    for (int i = 0; i < 25; ++i) {
      nn::Mlp::Cache cache;
      Vector y = net.forward(x, &cache);
      auto grads = net.zero_grads();
      net.backward(cache, Vector(2.0 * y), grads);
      opt.step(net, grads);
    }
    return net.forward(x);
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint roundtrip is exact") {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "test";
  ckpt.meta["answer"] = "42";
  ckpt.tensors["m"] = nn::seeded_uniform(6, 5, 2.0, 8);
  nn::Mlp net({4, 8, 2}, 3);
  ckpt.put_mlp("net", net);

  auto path = (std::filesystem::temp_directory_path() / "fairgo_ckpt_test.bin").string();
  ckpt.save(path);
  auto back = nn::Checkpoint::load(path);
  std::remove(path.c_str());

  CHECK(back.meta == ckpt.meta);
  CHECK(back.tensors.at("m") == ckpt.tensors.at("m"));
  auto net2 = back.get_mlp("net");
  REQUIRE(net2.layers().size() == net.layers().size());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    CHECK(net2.layers()[l].weight == net.layers()[l].weight);
    CHECK(net2.layers()[l].bias == net.layers()[l].bias);
  }
  Vector x(4);
  x << 1, -1, 2, 0.5;
  CHECK(net2.forward(x) == net.forward(x));
}
