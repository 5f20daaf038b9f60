#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlanet/equivariant.hpp"
#include "mlanet/oracle.hpp"
#include "mlanet/verify.hpp"

using namespace mlanet;

namespace {

// Applies the block-diagonal Wigner rotation to every row of a flat
// irreps-typed value array.
std::vector<double> rotate_rows(const IrrepsSpec& spec,
                                const std::vector<double>& x, const Mat3& R) {
  std::vector<double> out(x.size(), 0.0);
  int64_t rows = static_cast<int64_t>(x.size()) / spec.dim();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t off = r * spec.dim();
    int64_t pos = 0;
    for (const auto& e : spec.entries) {
      int d = e.ir.dim();
      auto D = wigner_d(e.ir.l, R);
      for (int64_t c = 0; c < e.mult; ++c)
        for (int i = 0; i < d; ++i) {
          double s = 0.0;
          for (int j = 0; j < d; ++j)
            s += D[i * d + j] * x[off + pos + c * d + j];
          out[off + pos + c * d + i] = s;
        }
      pos += e.dim();
    }
  }
  return out;
}

std::vector<double> random_values(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("equivariant linear commutes with rotations") {
  Rng rng(31);
  IrrepsSpec in = IrrepsSpec::parse("3x0e+2x1o+2x2e");
  IrrepsSpec out = IrrepsSpec::parse("2x0e+3x1o+1x2e");
  EquivariantLinear lin("lin", in, out, true, rng);
  Rng rot_rng(32);
  auto x = random_values(4 * in.dim(), 33);
  auto eval = [&](const std::vector<double>& v) {
    Tape t;
    t.set_grad_enabled(false);
    return lin.apply(t, {in, t.constant({4, in.dim()}, v)}).data.value();
  };
  for (int trial = 0; trial < 3; ++trial) {
    Mat3 R = random_rotation(rot_rng).rotation;
    auto y_then_rot = rotate_rows(out, eval(x), R);
    auto rot_then_y = eval(rotate_rows(in, x, R));
    for (size_t i = 0; i < y_then_rot.size(); ++i)
      REQUIRE(y_then_rot[i] == Catch::Approx(rot_then_y[i]).margin(1e-10));
  }
}

TEST_CASE("equivariant linear rejects unreachable outputs, biases scalars only") {
  Rng rng(34);
  IrrepsSpec in = IrrepsSpec::parse("3x0e+2x1o");
  REQUIRE_THROWS_AS(
      EquivariantLinear("bad", in, IrrepsSpec::parse("1x2e"), false, rng),
      ConfigError);

  // With zero weights the bias fully determines the output: l>0 blocks
  // must stay zero.
  EquivariantLinear lin("biased", in, in, true, rng);
  for (auto& v : lin.weight().value) v = 0.0;
  for (auto& v : lin.bias().value) v = 1.0;
  Tape t;
  t.set_grad_enabled(false);
  auto y = lin.apply(t, {in, t.zeros({2, in.dim()})}).data.value();
  for (int64_t r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) REQUIRE(y[r * in.dim() + c] == 1.0);
    for (int c = 3; c < in.dim(); ++c) REQUIRE(y[r * in.dim() + c] == 0.0);
  }
}

TEST_CASE("tensor product matches direct CG summation") {
  // factorized evaluation vs explicit summation, 1e-12.
  VerifyResult r = verify_tensor_product_direct();
  INFO(r.detail);
  REQUIRE(r.passed);
}

TEST_CASE("tensor product is equivariant") {
  VerifyResult r = verify_tensor_product_equivariance();
  INFO(r.detail);
  REQUIRE(r.passed);
}

TEST_CASE("tensor product rejects unreachable outputs and honors path filter") {
  Rng rng(35);
  IrrepsSpec v = IrrepsSpec::parse("1x1o");
  // 1o x 1o -> even parity only; asking for 1o output must fail.
  REQUIRE_THROWS_AS(
      TensorProduct("bad", v, v, IrrepsSpec::parse("1x1o"), rng),
      ConfigError);

  IrrepsSpec in2e = IrrepsSpec::parse("2x0e+2x2e");
  IrrepsSpec out2e = IrrepsSpec::parse("1x2e");
  // Restricting paths to l=0 inputs leaves nothing that reaches 2e.
  REQUIRE_THROWS_AS(
      TensorProduct("filtered", in2e, in2e, out2e, rng, CGTable::instance(), 0),
      ConfigError);
  // Reaching 1o: full set is 0e x 1o, 1o x 0e, 1o x 2e, 2e x 1o; an l<=1
  // input filter keeps only the first two.
  IrrepsSpec in = IrrepsSpec::parse("2x0e+1x1o+1x2e");
  IrrepsSpec out = IrrepsSpec::parse("1x1o");
  TensorProduct full("full", in, in, out, rng);
  TensorProduct capped("capped", in, in, out, rng, CGTable::instance(), 1);
  REQUIRE(full.paths()[0].size() == 4);
  REQUIRE(capped.paths()[0].size() == 2);
}

TEST_CASE("gate applies SiLU to scalars and gates l>0 channels") {
  IrrepsSpec base = IrrepsSpec::parse("2x0e+1x1o");
  IrrepsSpec in = gate_input_spec(base);
  REQUIRE(in.str() == "2x0e+1x0e+1x1o");
  REQUIRE(gate_output_spec(base).str() == "2x0e+1x1o");

  Tape t;
  // Layout: s0 s1 | g0 | v_y v_z v_x
  std::vector<double> x{0.5, -1.0, 2.0, 1.0, 2.0, 3.0};
  auto y = gate(t, {in, t.constant({1, 6}, x)}, base).data.value();
  auto silu = [](double v) { return v / (1.0 + std::exp(-v)); };
  REQUIRE(y[0] == Catch::Approx(silu(0.5)));
  REQUIRE(y[1] == Catch::Approx(silu(-1.0)));
  for (int k = 0; k < 3; ++k)
    REQUIRE(y[2 + k] == Catch::Approx(silu(2.0) * x[3 + k]));

  REQUIRE_THROWS_AS(gate(t, {base, t.zeros({1, base.dim()})}, base),
                    ConfigError);
}

TEST_CASE("gate is equivariant") {
  IrrepsSpec base = IrrepsSpec::parse("2x0e+2x1o+1x2e");
  IrrepsSpec in = gate_input_spec(base);
  IrrepsSpec out = gate_output_spec(base);
  auto x = random_values(3 * in.dim(), 36);
  auto eval = [&](const std::vector<double>& v) {
    Tape t;
    t.set_grad_enabled(false);
    return gate(t, {in, t.constant({3, in.dim()}, v)}, base).data.value();
  };
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    Mat3 R = random_rotation(rng).rotation;
    auto a = rotate_rows(out, eval(x), R);
    auto b = eval(rotate_rows(in, x, R));
    for (size_t i = 0; i < a.size(); ++i)
      REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-10));
  }
}

TEST_CASE("gradients flow through tensor product and linear") {
  Rng rng(38);
  IrrepsSpec spec = IrrepsSpec::parse("2x0e+1x1o");
  TensorProduct tp("tp", spec, spec, spec, rng);
  EquivariantLinear lin("lin", spec, spec, true, rng);
  auto x = random_values(2 * spec.dim(), 39);

  auto loss_of = [&](Parameter& target) {
    auto f = [&](const std::vector<double>& w) {
      std::vector<double> saved = target.value;
      target.value = w;
      Tape t;
      t.set_grad_enabled(false);
      IrrepsTensor xin{spec, t.constant({2, spec.dim()}, x)};
      double out =
          t.sum_all(t.silu(lin.apply(t, tp.apply(t, xin, xin)).data)).item();
      target.value = saved;
      return out;
    };
    return f;
  };

  Tape t;
  IrrepsTensor xin{spec, t.constant({2, spec.dim()}, x)};
  DiffTensor loss = t.sum_all(t.silu(lin.apply(t, tp.apply(t, xin, xin)).data));
  tp.weight().zero_grad();
  lin.weight().zero_grad();
  lin.bias().zero_grad();
  t.backward(loss);

  for (Parameter* p : {&tp.weight(), &lin.weight(), &lin.bias()}) {
    auto numeric = finite_diff_grad(loss_of(*p), p->value);
    for (size_t i = 0; i < numeric.size(); ++i) {
      INFO(p->name << " entry " << i);
      REQUIRE(rel_err(p->grad[i], numeric[i], 1e-6) < 1e-5);
    }
  }
}
