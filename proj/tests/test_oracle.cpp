#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlanet/oracle.hpp"
#include "mlanet/verify.hpp"

using namespace mlanet;

TEST_CASE("random rotations are orthonormal with det +1") {
  VerifyResult r = verify_rotation_orthonormality(100);
  INFO(r.detail);
  REQUIRE(r.passed);
}

TEST_CASE("random rotations are direction-uniform") {
  VerifyResult r = verify_rotation_uniformity(5000);
  INFO(r.detail);
  REQUIRE(r.passed);
}

TEST_CASE("rigid motion applies rotation then translation") {
  RigidMotion m;
  m.rotation = {{{0, -1, 0}, {1, 0, 0}, {0, 0, 1}}};  // 90 deg about z
  m.translation = {10, 0, 0};
  Vec3 p = m.apply({1, 0, 0});
  REQUIRE(p[0] == Catch::Approx(10.0));
  REQUIRE(p[1] == Catch::Approx(1.0));
  REQUIRE(p[2] == Catch::Approx(0.0));
  Vec3 q = m.rotate({1, 0, 0});
  REQUIRE(q[0] == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(q[1] == Catch::Approx(1.0));
}

TEST_CASE("finite differences recover polynomial gradients") {
  // d/dx (x^2 + 3y) = 2x, 3.
  auto f = [](const std::vector<double>& v) {
    return v[0] * v[0] + 3.0 * v[1];
  };
  auto g = finite_diff_grad(f, {2.0, -1.0});
  REQUIRE(g[0] == Catch::Approx(4.0).margin(1e-8));
  REQUIRE(g[1] == Catch::Approx(3.0).margin(1e-8));
}

TEST_CASE("rel_err uses the symmetric denominator with a floor") {
  REQUIRE(rel_err(1.0, 1.0) == 0.0);
  REQUIRE(rel_err(2.0, 1.0) == Catch::Approx(0.5));
  REQUIRE(rel_err(0.0, 1e-12) == Catch::Approx(1e-12 / 1e-8));
  REQUIRE(rel_err(0.0, 0.0) == 0.0);
}

TEST_CASE("Wigner-D fit residual is asserted internally") {
  // A valid rotation fits fine...
  Rng rng(91);
  Mat3 R = random_rotation(rng).rotation;
  REQUIRE_NOTHROW(wigner_d(3, R));
  // ...a non-rotation cannot be represented and must be refused rather
  // than silently returned.
  Mat3 bad = {{{2, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  REQUIRE_THROWS_AS(wigner_d(2, bad), OracleError);
}

TEST_CASE("brute-force neighbors refuses an insufficient shift range") {
  AtomicStructure s;
  s.positions = {{0, 0, 0}};
  s.species = {6};
  s.cell = Mat3{{{2.0, 0, 0}, {0, 2.0, 0}, {0, 0, 2.0}}};
  s.pbc = {true, true, true};
  REQUIRE_THROWS_AS(brute_force_neighbors(s, 7.0, 1), OracleError);
  REQUIRE_NOTHROW(brute_force_neighbors(s, 7.0, 4));
}

TEST_CASE("brute-force neighbors on a hand-checked pair") {
  AtomicStructure s;
  s.positions = {{0, 0, 0}, {0, 0, 1.0}};
  s.species = {1, 1};
  auto edges = brute_force_neighbors(s, 1.5);
  REQUIRE(edges.size() == 2);
  REQUIRE(edges.count({0, 1, {0, 0, 0}}) == 1);
  REQUIRE(edges.count({1, 0, {0, 0, 0}}) == 1);
}

TEST_CASE("full verification suite passes") {
  for (const VerifyResult& r : run_verification(false)) {
    INFO(r.name << ": " << r.detail);
    REQUIRE(r.passed);
  }
}
