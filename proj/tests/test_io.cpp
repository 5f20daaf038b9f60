#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mlanet/checkpoint.hpp"
#include "mlanet/config.hpp"
#include "mlanet/extxyz.hpp"
#include "mlanet/verify.hpp"

using namespace mlanet;

namespace {

std::vector<AtomicStructure> parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse_extxyz_stream(is);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.hidden_irreps = "4x0e+2x1o";
  cfg.species = {1, 8};
  cfg.embed_dim = 4;
  cfg.mlp_hidden = 8;
  return cfg;
}

}  // namespace

TEST_CASE("extxyz parses a minimal molecular frame") {
  auto frames = parse_string(
      "2\n"
      "Properties=species:S:1:pos:R:3 energy=-1.5\n"
      "O 0.0 0.0 0.0\n"
      "H 0.0 0.0 0.96\n");
  REQUIRE(frames.size() == 1);
  const auto& s = frames[0];
  REQUIRE(s.species == std::vector<int>{8, 1});
  REQUIRE(s.positions[1][2] == 0.96);
  REQUIRE(s.energy == -1.5);
  REQUIRE_FALSE(s.cell.has_value());
  REQUIRE_FALSE(s.forces.has_value());
}

TEST_CASE("extxyz parses Lattice, pbc, charge, and forces") {
  auto frames = parse_string(
      "1\n"
      "Lattice=\"10 0 0 0 10 0 0 0 10\" "
      "Properties=species:S:1:pos:R:3:forces:R:3 pbc=\"T T F\" charge=-2\n"
      "C 1 2 3 0.1 -0.2 0.3\n");
  const auto& s = frames[0];
  REQUIRE(s.cell.has_value());
  REQUIRE((*s.cell)[1][1] == 10.0);
  REQUIRE(s.pbc == std::array<bool, 3>{true, true, false});
  REQUIRE(s.total_charge == -2);
  REQUIRE(s.forces.has_value());
  REQUIRE((*s.forces)[0][1] == -0.2);
  // A Lattice with no pbc key implies full periodicity.
  auto f2 = parse_string(
      "1\nLattice=\"5 0 0 0 5 0 0 0 5\" Properties=species:S:1:pos:R:3\n"
      "C 0 0 0\n");
  REQUIRE(f2[0].pbc == std::array<bool, 3>{true, true, true});
}

TEST_CASE("extxyz reports malformed input with line numbers") {
  using Catch::Matchers::ContainsSubstring;
  // Bad number on the third line.
  REQUIRE_THROWS_WITH(
      parse_string("1\nProperties=species:S:1:pos:R:3\nC 0 zero 0\n"),
      ContainsSubstring("line 3"));
  // Missing fields on line 4.
  REQUIRE_THROWS_WITH(parse_string("2\n\nC 0 0 0\nC 1\n"),
                      ContainsSubstring("line 4"));
  REQUIRE_THROWS_WITH(parse_string("1\nLattice=\"1 2 3\"\nC 0 0 0\n"),
                      ContainsSubstring("Lattice"));
  REQUIRE_THROWS_WITH(parse_string("1\nenergy=\"1 -3\n"),
                      ContainsSubstring("unterminated"));
  REQUIRE_THROWS_WITH(parse_string("0\n"),
                      ContainsSubstring("atom count"));
  REQUIRE_THROWS_WITH(
      parse_string("1\nProperties=species:S:1:pos:R:3\nQq 0 0 0\n"),
      ContainsSubstring("Qq"));
}

TEST_CASE("extxyz truncation names the broken frame") {
  using Catch::Matchers::ContainsSubstring;
  std::string good =
      "1\nProperties=species:S:1:pos:R:3\nC 0 0 0\n";
  REQUIRE_THROWS_WITH(parse_string(good + "3\n\nC 0 0 0\n"),
                      ContainsSubstring("frame 1"));
  REQUIRE_THROWS_WITH(parse_string(good + "2\n"),
                      ContainsSubstring("truncated"));
}

TEST_CASE("extxyz write/read round trip is exact") {
  Rng rng(81);
  std::vector<AtomicStructure> frames;
  for (int i = 0; i < 10; ++i) {
    AtomicStructure s = random_structure(rng, 6, i % 2 == 0);
    s.energy = rng.normal() * 100.0;
    std::vector<Vec3> f;
    for (size_t a = 0; a < s.size(); ++a)
      f.push_back({rng.normal(), rng.normal(), rng.normal()});
    s.forces = std::move(f);
    if (i == 3) s.total_charge = 1;
    frames.push_back(std::move(s));
  }
  std::ostringstream os;
  write_extxyz_stream(os, frames);
  auto back = parse_string(os.str());
  REQUIRE(back.size() == frames.size());
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& a = frames[i];
    const auto& b = back[i];
    REQUIRE(a.species == b.species);
    REQUIRE(a.pbc == b.pbc);
    REQUIRE(a.energy == b.energy);  // shortest-roundtrip format: exact
    REQUIRE(a.total_charge == b.total_charge);
    REQUIRE(a.cell.has_value() == b.cell.has_value());
    if (a.cell)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) REQUIRE((*a.cell)[r][c] == (*b.cell)[r][c]);
    for (size_t at = 0; at < a.size(); ++at)
      for (int k = 0; k < 3; ++k) {
        REQUIRE(a.positions[at][k] == b.positions[at][k]);
        REQUIRE((*a.forces)[at][k] == (*b.forces)[at][k]);
      }
  }
}

TEST_CASE("element lookup accepts symbols and numbers") {
  REQUIRE(elements::atomic_number("H") == 1);
  REQUIRE(elements::atomic_number("Au") == 79);
  REQUIRE(elements::atomic_number("6") == 6);
  REQUIRE(elements::symbol(8) == "O");
  REQUIRE(elements::mass(1) == Catch::Approx(1.008));
  REQUIRE_THROWS_AS(elements::atomic_number("Zz"), ParseError);
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit-for-bit") {
  Model m1(tiny_config());
  m1.reference_energies() = {{1, -0.5}, {8, -75.0}};
  // Nudge the weights away from the seeded init so the test is not trivial.
  Rng rng(82);
  for (Parameter* p : m1.parameters())
    for (double& v : p->value) v += 0.01 * rng.normal();

  std::string path = "ckpt_roundtrip.ckpt";
  std::vector<double> moment{1.0, 2.0, 3.0};
  save_checkpoint(path, m1, {{"opt.m.test", &moment}}, "rngstate",
                  json{{"epoch", 7}});
  auto m2 = model_from_checkpoint(path);

  AtomicStructure s;
  s.positions = {{0, 0, 0}, {0.96, 0, 0}, {-0.24, 0.93, 0}};
  s.species = {8, 1, 1};
  AtomGraph g = build_batch({&s}, 5.0, 8);
  Tape t1, t2;
  t1.set_grad_enabled(false);
  t2.set_grad_enabled(false);
  auto o1 = m1.forward(t1, g);
  auto o2 = m2->forward(t2, g);
  REQUIRE(o1.energy.value() == o2.energy.value());  // bitwise
  REQUIRE(o1.forces.value() == o2.forces.value());

  CheckpointData data = load_checkpoint(path);
  REQUIRE(data.arrays.at("opt.m.test") == moment);
  REQUIRE(data.rng_state == "rngstate");
  REQUIRE(data.extra.at("epoch") == 7);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption and mismatch are rejected") {
  using Catch::Matchers::ContainsSubstring;
  Model m(tiny_config());
  std::string path = "ckpt_corrupt.ckpt";
  save_checkpoint(path, m);

  SECTION("flipped blob byte fails the checksum") {
    std::ifstream in(path, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    in.close();
    raw[raw.size() - 12] ^= 0x01;  // inside the blob, before the checksum
    std::ofstream out(path, std::ios::binary);
    out << raw;
    out.close();
    REQUIRE_THROWS_WITH(load_checkpoint(path), ContainsSubstring("checksum"));
  }
  SECTION("bad magic is rejected") {
    std::ofstream f("not_a.ckpt", std::ios::binary);
    f << "HELLO WORLD, definitely not a checkpoint";
    f.close();
    REQUIRE_THROWS_WITH(load_checkpoint("not_a.ckpt"),
                        ContainsSubstring("magic"));
    std::remove("not_a.ckpt");
  }
  SECTION("architecture mismatch carries both configs") {
    CheckpointData data = load_checkpoint(path);
    ModelConfig other = tiny_config();
    other.hidden_irreps = "8x0e+2x1o";
    Model m2(other);
    REQUIRE_THROWS_WITH(load_into_model(m2, data),
                        ContainsSubstring("mismatch"));
  }
  std::remove(path.c_str());
}

TEST_CASE("config parsing is strict about unknown keys") {
  using Catch::Matchers::ContainsSubstring;
  REQUIRE_THROWS_WITH(run_config_from_json(json{{"trian_data", "x.xyz"}}),
                      ContainsSubstring("trian_data"));
  REQUIRE_THROWS_WITH(
      run_config_from_json(json{{"model", {{"r_cutt", 5.0}}}}),
      ContainsSubstring("r_cutt"));
  REQUIRE_THROWS_WITH(
      run_config_from_json(json{{"train", {{"lr", 1e-3}}}}),
      ContainsSubstring("lr"));
  REQUIRE_THROWS_WITH(run_config_from_json(json{{"md", {{"dt_fs", 0.5}}}}),
                      ContainsSubstring("dt_fs"));
  // Wrong type is also an error, not a silent default.
  REQUIRE_THROWS_AS(
      run_config_from_json(json{{"train", {{"epochs", "many"}}}}),
      ConfigError);
}

TEST_CASE("config values land in the right fields") {
  json j{{"train_data", "a.xyz"},
         {"model", {{"hidden_irreps", "8x0e+4x1o"}, {"r_cut", 4.5}}},
         {"train", {{"epochs", 3}, {"lambda_force", 25.0}}},
         {"md", {{"steps", 77}, {"friction", 0.1}}},
         {"output_dir", "out"}};
  RunConfig c = run_config_from_json(j);
  REQUIRE(c.train_data == "a.xyz");
  REQUIRE(c.model.hidden_irreps == "8x0e+4x1o");
  REQUIRE(c.model.r_cut == 4.5);
  REQUIRE(c.model.n_rbf == 8);  // untouched default
  REQUIRE(c.train.epochs == 3);
  REQUIRE(c.train.weights.lambda_force == 25.0);
  REQUIRE(c.md.steps == 77);
  REQUIRE(c.md.friction == 0.1);
  REQUIRE(c.output_dir == "out");
}

TEST_CASE("MLANET_OUTPUT_DIR overrides the configured output dir") {
  setenv("MLANET_OUTPUT_DIR", "/tmp/elsewhere", 1);
  RunConfig c = run_config_from_json(json{{"output_dir", "out"}});
  REQUIRE(c.output_dir == "/tmp/elsewhere");
  unsetenv("MLANET_OUTPUT_DIR");
  RunConfig c2 = run_config_from_json(json{{"output_dir", "out"}});
  REQUIRE(c2.output_dir == "out");
}

TEST_CASE("model config survives a JSON round trip") {
  ModelConfig c = tiny_config();
  c.tp_path_max_l = 2;
  c.use_long_range = false;
  c.predict_stress = true;
  ModelConfig back = model_config_from_json(model_config_to_json(c));
  REQUIRE(model_config_to_json(back) == model_config_to_json(c));
}
