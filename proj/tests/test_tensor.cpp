#include <catch2/catch_amalgamated.hpp>

#include "mlanet/oracle.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/tensor.hpp"

using namespace mlanet;

namespace {

// Checks tape gradients of a scalar-valued builder against central
// differences over every parameter entry.
void gradcheck(Parameter& p,
               const std::function<DiffTensor(Tape&, DiffTensor)>& build,
               double tol = 1e-5) {
  Tape tape;
  DiffTensor leaf = tape.leaf(p);
  DiffTensor loss = build(tape, leaf);
  p.zero_grad();
  tape.backward(loss);
  std::vector<double> analytic = p.grad;

  auto f = [&](const std::vector<double>& x) {
    Parameter q = p;
    q.value = x;
    Tape t2;
    return build(t2, t2.leaf(q)).item();
  };
  std::vector<double> numeric = finite_diff_grad(f, p.value);
  for (size_t i = 0; i < numeric.size(); ++i) {
    INFO("param entry " << i);
    REQUIRE(rel_err(analytic[i], numeric[i], 1e-6) < tol);
  }
}

Parameter random_param(const std::string& name, Shape shape, uint64_t seed) {
  Parameter p(name, std::move(shape));
  Rng rng(seed);
  for (auto& v : p.value) v = rng.normal();
  return p;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Tape t;
  DiffTensor a = t.constant({2, 2}, {1, 2, 3, 4});
  DiffTensor b = t.constant({2, 2}, {10, 20, 30, 40});
  REQUIRE(t.add(a, b).value() == std::vector<double>{11, 22, 33, 44});
  REQUIRE(t.mul(a, b).value() == std::vector<double>{10, 40, 90, 160});
  REQUIRE(t.sub(b, a).value() == std::vector<double>{9, 18, 27, 36});
  REQUIRE(t.scale(a, 2.0).value() == std::vector<double>{2, 4, 6, 8});

  // Row-vector broadcast on add, column-vector on mul.
  DiffTensor row = t.constant({1, 2}, {100, 200});
  REQUIRE(t.add(a, row).value() == std::vector<double>{101, 202, 103, 204});
  DiffTensor col = t.constant({2, 1}, {2, 3});
  REQUIRE(t.mul(a, col).value() == std::vector<double>{2, 4, 9, 12});

  REQUIRE_THROWS_AS(t.add(a, t.constant({3, 1}, {1, 2, 3})), DimensionError);
  REQUIRE_THROWS_AS(t.mul(a, t.constant({1, 2}, {1, 2})), DimensionError);
}

TEST_CASE("matmul forward and shape errors") {
  Tape t;
  DiffTensor a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  DiffTensor b = t.constant({3, 2}, {7, 8, 9, 10, 11, 12});
  REQUIRE(t.matmul(a, b).value() == std::vector<double>{58, 64, 139, 154});
  REQUIRE_THROWS_AS(t.matmul(a, a), DimensionError);
}

TEST_CASE("reductions and item") {
  Tape t;
  DiffTensor a = t.constant({2, 2}, {1, 2, 3, 4});
  REQUIRE(t.sum_all(a).item() == 10.0);
  REQUIRE(t.mean_all(a).item() == 2.5);
  REQUIRE_THROWS_AS(a.item(), ContractError);
}

TEST_CASE("structural op values") {
  Tape t;
  DiffTensor a = t.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.gather_cols(a, {2, 0}).value() == std::vector<double>{3, 1, 6, 4});
  REQUIRE(t.index_select_rows(a, {1, 1, 0}).value() ==
          std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3});
  REQUIRE(t.scatter_add_rows(a, {1, 1}, 3).value() ==
          std::vector<double>{0, 0, 0, 5, 7, 9, 0, 0, 0});
  REQUIRE(t.scatter_max_rows(a, {0, 0}, 2).value() ==
          std::vector<double>{4, 5, 6, 0, 0, 0});
  REQUIRE(t.concat_cols({a, a}).value() ==
          std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});
  REQUIRE(t.concat_rows({a, a}).shape() == Shape{4, 3});
  REQUIRE_THROWS_AS(t.gather_cols(a, {3}), IndexError);
  REQUIRE_THROWS_AS(t.index_select_rows(a, {-1}), IndexError);
  REQUIRE_THROWS_AS(t.scatter_add_rows(a, {0, 5}, 3), IndexError);
}

TEST_CASE("segment max detached carries no gradient") {
  Tape t;
  Parameter p = random_param("p", {3, 2}, 1);
  DiffTensor leaf = t.leaf(p);
  DiffTensor m = t.segment_max_detached(leaf, {0, 0, 1}, 2);
  REQUIRE_FALSE(m.requires_grad());
  REQUIRE(m.value()[0] == std::max(p.value[0], p.value[2]));
}

TEST_CASE("backward requires scalar differentiable loss") {
  Tape t;
  Parameter p = random_param("p", {2, 2}, 2);
  DiffTensor leaf = t.leaf(p);
  REQUIRE_THROWS_AS(t.backward(leaf), ContractError);
  DiffTensor c = t.constant({1}, {3.0});
  REQUIRE_THROWS_AS(t.backward(c), ContractError);
}

TEST_CASE("gradients accumulate into parameters across backward calls") {
  Parameter p = random_param("p", {2}, 3);
  p.zero_grad();
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    t.backward(t.sum_all(t.leaf(p)));
  }
  REQUIRE(p.grad == std::vector<double>{2.0, 2.0});
}

TEST_CASE("inference mode records no gradients") {
  Parameter p = random_param("p", {2}, 4);
  Tape t;
  t.set_grad_enabled(false);
  DiffTensor loss = t.sum_all(t.leaf(p));
  REQUIRE_FALSE(loss.requires_grad());
}

TEST_CASE("gradcheck: unary chains") {
  Parameter p = random_param("p", {3, 2}, 5);
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.sigmoid(t.scale(x, 1.3))));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.mean_all(t.exp(t.scale(x, 0.5)));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.sqrt_eps(t.mul(x, x)));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.reciprocal(t.add(t.mul(x, x), t.scalar(1.0))));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) { return t.sum_all(t.abs(x)); });
}

TEST_CASE("gradcheck: matmul and broadcasts") {
  Parameter p = random_param("p", {3, 4}, 6);
  gradcheck(p, [](Tape& t, DiffTensor x) {
    DiffTensor w = t.constant({4, 2}, {1, -2, 0.5, 3, -1, 2, 0.7, -0.3});
    return t.sum_all(t.silu(t.matmul(x, w)));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    DiffTensor row = t.constant({1, 4}, {0.5, -1, 2, 0.1});
    DiffTensor col = t.constant({3, 1}, {2, -0.5, 1});
    return t.sum_all(t.mul(t.add(x, row), col));
  });
}

TEST_CASE("gradcheck: structural ops") {
  Parameter p = random_param("p", {4, 3}, 7);
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.gather_cols(x, {2, 2, 0})));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.index_select_rows(x, {3, 0, 0, 2})));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.scatter_add_rows(x, {1, 0, 1, 1}, 2)));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.scatter_max_rows(x, {0, 0, 1, 1}, 2)));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.mul(t.concat_cols({x, t.scale(x, 2.0)}),
                           t.concat_cols({t.scale(x, -1.0), x})));
  });
  gradcheck(p, [](Tape& t, DiffTensor x) {
    return t.sum_all(t.silu(t.reshape(x, {2, 6})));
  });
}

TEST_CASE("gradcheck: expand_sparse and cg_contract") {
  Parameter p = random_param("p", {4}, 8);
  auto placements = std::make_shared<std::vector<Tape::SparsePlacement>>(
      std::vector<Tape::SparsePlacement>{
          {0, 0, 1.0}, {3, 1, -0.5}, {5, 2, 2.0}, {5, 3, 1.0}, {1, 0, 0.25}});
  gradcheck(p, [placements](Tape& t, DiffTensor w) {
    DiffTensor m = t.expand_sparse(w, {2, 3}, placements);
    DiffTensor x = t.constant({2, 2}, {1, 2, -1, 0.5});
    return t.sum_all(t.silu(t.matmul(x, m)));
  });

  Parameter q = random_param("q", {2, 6}, 9);
  auto coeffs = std::make_shared<std::vector<Tape::BilinearCoeff>>(
      std::vector<Tape::BilinearCoeff>{
          {0, 0, 0, 1.0}, {1, 2, 0, -0.7}, {2, 1, 1, 0.3}, {0, 2, 1, 1.2}});
  gradcheck(q, [coeffs](Tape& t, DiffTensor x) {
    DiffTensor a = t.gather_cols(x, {0, 1, 2});
    DiffTensor b = t.gather_cols(x, {3, 4, 5});
    return t.sum_all(t.silu(t.cg_contract(a, b, 2, coeffs)));
  });
}

TEST_CASE("gradcheck: softmax-style composite") {
  // The exact pattern the attention layer uses: exp / scatter-add /
  // reciprocal / gather with a detached shift.
  Parameter p = random_param("p", {4, 2}, 10);
  std::vector<int64_t> seg{0, 0, 1, 1};
  gradcheck(p, [seg](Tape& t, DiffTensor x) {
    DiffTensor m = t.segment_max_detached(x, seg, 2);
    DiffTensor ex = t.exp(t.sub(x, t.index_select_rows(m, seg)));
    DiffTensor denom = t.scatter_add_rows(ex, seg, 2);
    DiffTensor alpha = t.mul(ex, t.index_select_rows(t.reciprocal(denom), seg));
    DiffTensor vals = t.constant({4, 2}, {1, -2, 3, 0.5, -1, 2, 0.2, 1});
    return t.sum_all(t.silu(t.scatter_add_rows(t.mul(alpha, vals), seg, 2)));
  });
}
