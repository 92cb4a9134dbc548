#include <doctest.h>

#include <cmath>

#include "adaor/errors.hpp"
#include "adaor/ndcore.hpp"
#include "adaor/rng.hpp"

using namespace adaor;
using nd::Graph;
using nd::Parameter;
using nd::Tensor;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// Textbook triple loop; the oracle for the tiled kernel.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_SUITE("ndcore") {
  TEST_CASE("matmul matches the triple loop on ragged shapes") {
    Rng rng(7);
    for (auto [r, k, c] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 3, 7}, {13, 37, 41}, {64, 280, 256},
                           {3, 256, 33}, {7, 9, 8}}) {
      const Tensor a = random_matrix(rng, r, k), b = random_matrix(rng, k, c);
      const Tensor got = nd::matmul(a, b), want = naive_matmul(a, b);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("a row's matmul result does not depend on the rest of the batch") {
    Rng rng(3);
    const Tensor a = random_matrix(rng, 19, 53), b = random_matrix(rng, 53, 77);
    const Tensor full = nd::matmul(a, b);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      Tensor row({1, a.cols()});
      std::copy(a.raw() + r * a.cols(), a.raw() + (r + 1) * a.cols(), row.raw());
      const Tensor single = nd::matmul(row, b);
      for (std::size_t j = 0; j < b.cols(); ++j) CHECK(single[j] == full.at(r, j));
    }
  }

  TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(nd::matmul(Tensor({2, 3}), Tensor({4, 2})), DimensionError);
  }

  TEST_CASE("linear examples") {
    Parameter w("w", Tensor::matrix({{1, 0}, {0, 1}})), b("b", Tensor::vector({0, 0}));
    Graph g;
    auto y = g.linear(g.input(Tensor::matrix({{1, 2}})), g.param(w), g.param(b));
    CHECK(g.value(y) == Tensor::matrix({{1, 2}}));

    Parameter w2("w", Tensor::matrix({{5, -1}, {2, 9}})), b2("b", Tensor::vector({3, 4}));
    g.reset();
    y = g.linear(g.input(Tensor::matrix({{0, 0}})), g.param(w2), g.param(b2));
    CHECK(g.value(y) == Tensor::matrix({{3, 4}}));

    Parameter w3("w", Tensor::matrix({{2, 0}, {0, 2}})), b3("b", Tensor::vector({1, 1}));
    g.reset();
    y = g.linear(g.input(Tensor::matrix({{1, 1}})), g.param(w3), g.param(b3));
    CHECK(g.value(y) == Tensor::matrix({{3, 3}}));
  }

  TEST_CASE("linear shape mismatch names both shapes") {
    Parameter w("w", Tensor({3, 2})), b("b", Tensor({2}));
    Graph g;
    try {
      g.linear(g.input(Tensor({1, 2})), g.param(w), g.param(b));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1, 2]") != std::string::npos);
      CHECK(msg.find("[3, 2]") != std::string::npos);
    }
  }

  TEST_CASE("silu examples") {
    CHECK(nd::silu(0.0) == 0.0);
    CHECK(nd::silu(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
    // silu(x) = x - x e^{-x} / (1 + e^{-x}); at x = 20 the gap is ~4e-8 absolute.
    CHECK(std::abs(nd::silu(20.0) - 20.0) / 20.0 < 1e-8);
    CHECK(std::abs(nd::silu(25.0) - 25.0) < 1e-8);
    CHECK(std::isfinite(nd::silu(-1000.0)));
    CHECK(std::isfinite(nd::silu(1000.0)));
  }

  TEST_CASE("mse_loss examples") {
    Graph g;
    auto l = g.mse_loss(g.input(Tensor::vector({1, 2})), g.input(Tensor::vector({1, 2})));
    CHECK(g.value(l)[0] == 0.0);
    l = g.mse_loss(g.input(Tensor::vector({0, 0})), g.input(Tensor::vector({1, 1})));
    CHECK(g.value(l)[0] == 1.0);
    l = g.mse_loss(g.input(Tensor::vector({0, 2})), g.input(Tensor::vector({1, 0})));
    CHECK(g.value(l)[0] == 2.5);
    CHECK_THROWS_AS(g.mse_loss(g.input(Tensor::vector({0, 2})), g.input(Tensor::vector({1}))), DimensionError);
  }

  TEST_CASE("backward examples") {
    Parameter w("w", Tensor::scalar(3.0));
    Graph g;
    auto x = g.param(w);
    g.backward(g.sum(g.mul(x, x)));
    CHECK(w.grad[0] == 6.0);

    Parameter w2("w", Tensor::matrix({{2.0}}));
    g.reset();
    auto pred = g.matmul(g.input(Tensor::matrix({{1.0}})), g.param(w2));
    g.backward(g.mse_loss(pred, g.input(Tensor::matrix({{0.0}}))));
    CHECK(w2.grad[0] == 4.0);

    Parameter w3("w", Tensor::scalar(5.0));
    g.reset();
    auto p = g.param(w3);
    g.backward(g.sum(g.add(g.detach(g.mul(p, p)), g.input(Tensor::scalar(1.0)))));
    CHECK(w3.grad[0] == 0.0);
  }

  TEST_CASE("backward rejects a non-scalar loss") {
    Parameter w("w", Tensor::vector({1, 2}));
    Graph g;
    CHECK_THROWS_AS(g.backward(g.param(w)), DimensionError);
  }

  TEST_CASE("graph is reusable after reset and accumulates into Parameter::grad") {
    Parameter w("w", Tensor::scalar(2.0));
    Graph g;
    g.backward(g.sum(g.mul(g.param(w), g.param(w))));
    g.reset();
    CHECK(g.size() == 0);
    g.backward(g.sum(g.mul(g.param(w), g.param(w))));
    CHECK(w.grad[0] == 8.0);
  }

  TEST_CASE("adam examples") {
    Parameter p("p", Tensor::vector({1.0, -2.0, 3.0}));
    const Tensor before = p.value;
    std::vector<Parameter*> ps{&p};

    nd::AdamState zero_grad(ps);
    p.grad.fill(0.0);
    zero_grad.step(ps);
    CHECK(p.value == before);
    CHECK(zero_grad.step_count() == 1);

    nd::AdamState zero_lr(ps, {.lr = 0.0});
    p.grad = Tensor::vector({0.3, -7.0, 1e6});
    zero_lr.step(ps);
    CHECK(p.value == before);

    nd::AdamState big(ps, {.lr = 0.01});
    p.grad = Tensor::vector({1e9, -1e9, 1e9});
    big.step(ps);
    CHECK(p.value[0] - before[0] == doctest::Approx(-0.01).epsilon(1e-9));
    CHECK(p.value[1] - before[1] == doctest::Approx(0.01).epsilon(1e-9));
  }

  TEST_CASE("adam matches a hand-rolled two-step update") {
    Parameter p("p", Tensor::vector({0.5}));
    std::vector<Parameter*> ps{&p};
    nd::AdamState opt(ps, {.lr = 0.1});
    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      const double g = 2.0 * x;
      p.grad = Tensor::vector({g});
      opt.step(ps);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-14));
    }
  }

  TEST_CASE("adam refuses a non-finite gradient and names the parameter") {
    Parameter a("good", Tensor::vector({1.0})), b("bad", Tensor::vector({1.0}));
    std::vector<Parameter*> ps{&a, &b};
    nd::AdamState opt(ps);
    a.grad = Tensor::vector({1.0});
    b.grad = Tensor::vector({std::nan("")});
    try {
      opt.step(ps);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(a.value[0] == 1.0);
    CHECK(opt.step_count() == 0);
  }

  TEST_CASE("gradcheck: linear layer, seed 0") {
    Rng rng(0);
    Parameter w("w", random_matrix(rng, 4, 3)), b("b", Tensor({3}));
    for (double& v : b.value.data()) v = rng.normal();
    const Tensor x = random_matrix(rng, 5, 4), y = random_matrix(rng, 5, 3);
    std::vector<Parameter*> ps{&w, &b};
    const auto r = nd::gradcheck(ps, [&](Graph& g) {
      return g.mse_loss(g.linear(g.input(x), g.param(w), g.param(b)), g.input(y));
    });
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.per_parameter.size() == 2);
  }

  TEST_CASE("gradcheck: constant network has zero error") {
    Parameter w("w", Tensor::vector({1.0, 2.0}));
    std::vector<Parameter*> ps{&w};
    const auto r = nd::gradcheck(ps, [&](Graph& g) {
      g.param(w);
      return g.sum(g.input(Tensor::vector({3.0, 4.0})));
    });
    CHECK(r.max_rel_error == 0.0);
  }

  TEST_CASE("gradcheck: 3-layer SiLU MLP with embeddings, seed 1") {
    Rng rng(1);
    std::vector<Parameter> layers;
    layers.emplace_back("emb", random_matrix(rng, 4, 3));
    const std::size_t widths[] = {5 + 3, 6, 6, 2};
    for (int l = 0; l < 3; ++l) {
      layers.emplace_back("w" + std::to_string(l), random_matrix(rng, widths[l], widths[l + 1]));
      Tensor bias({widths[l + 1]});
      for (double& v : bias.data()) v = rng.normal();
      layers.emplace_back("b" + std::to_string(l), bias);
    }
    const Tensor x = random_matrix(rng, 3, 5), y = random_matrix(rng, 3, 2);
    std::vector<Parameter*> ps;
    for (auto& p : layers) ps.push_back(&p);
    const auto r = nd::gradcheck(ps, [&](Graph& g) {
      const Graph::Var parts[] = {g.input(x), g.gather_rows(g.param(layers[0]), {2, 0, 2})};
      Graph::Var h = g.concat(parts);
      for (int l = 0; l < 3; ++l) {
        h = g.linear(h, g.param(layers[1 + 2 * l]), g.param(layers[2 + 2 * l]));
        if (l < 2) h = g.silu(h);
      }
      return g.mse_loss(h, g.input(y));
    });
    CHECK(r.max_rel_error < 1e-5);
  }

  TEST_CASE("primitives are bit-deterministic") {
    Rng rng(11);
    const Tensor a = random_matrix(rng, 9, 31), b = random_matrix(rng, 31, 17);
    CHECK(nd::matmul(a, b) == nd::matmul(a, b));
  }
}
