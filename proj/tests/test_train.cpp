#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <set>

#include "mlanet/extxyz.hpp"
#include "mlanet/train.hpp"
#include "mlanet/verify.hpp"

using namespace mlanet;

namespace {

Model::Output fake_output(Tape& t, std::vector<double> energies,
                          std::vector<double> forces) {
  int64_t g = static_cast<int64_t>(energies.size());
  int64_t n = static_cast<int64_t>(forces.size()) / 3;
  return {t.constant({g, 1}, std::move(energies)),
          t.constant({n, 3}, std::move(forces)),
          std::nullopt,
          DiffTensor{}};
}

}  // namespace

TEST_CASE("L1 loss matches the displayed formulas") {
  AtomicStructure s;
  s.positions = {{0, 0, 0}};
  s.species = {1};
  s.energy = 1.0;
  s.forces = std::vector<Vec3>{{0, 0, 0}};

  Tape t;
  SECTION("perfect prediction is zero") {
    auto out = fake_output(t, {1.0}, {0, 0, 0});
    REQUIRE(batch_loss(t, out, {&s}, {1.0, 1000.0, 0.0}).item() == 0.0);
  }
  SECTION("energy error passes through with lambda_E = 1") {
    auto out = fake_output(t, {3.0}, {0, 0, 0});
    REQUIRE(batch_loss(t, out, {&s}, {1.0, 0.0, 0.0}).item() == 2.0);
  }
  SECTION("force error (1,0,0) with lambda_F = 1000 gives 1000/3") {
    auto out = fake_output(t, {1.0}, {1.0, 0, 0});
    REQUIRE(batch_loss(t, out, {&s}, {0.0, 1000.0, 0.0}).item() ==
            Catch::Approx(1000.0 / 3.0));
  }
  SECTION("energy term averages over the batch") {
    AtomicStructure s2 = s;
    s2.energy = 0.0;
    auto out = fake_output(t, {2.0, 1.0}, {0, 0, 0, 0, 0, 0});
    // |2-1|/1 and |1-0| averaged: (1+1)/2
    REQUIRE(batch_loss(t, out, {&s, &s2}, {1.0, 0.0, 0.0}).item() == 1.0);
  }
  SECTION("missing labels raise data errors") {
    AtomicStructure bare;
    bare.positions = {{0, 0, 0}};
    bare.species = {1};
    auto out = fake_output(t, {1.0}, {0, 0, 0});
    REQUIRE_THROWS_AS(batch_loss(t, out, {&bare}, {1.0, 0.0, 0.0}), DataError);
    REQUIRE_THROWS_AS(batch_loss(t, out, {&bare}, {0.0, 1.0, 0.0}), DataError);
  }
  SECTION("all-zero weights are rejected") {
    auto out = fake_output(t, {1.0}, {0, 0, 0});
    REQUIRE_THROWS_AS(batch_loss(t, out, {&s}, {0.0, 0.0, 0.0}), ConfigError);
  }
}

TEST_CASE("AdamW trivial behaviors") {
  Parameter p("w", {2});
  p.value = {1.0, -2.0};
  std::vector<Parameter*> params{&p};
  AdamWState st;
  st.init(params);

  SECTION("zero gradient, zero decay: unchanged") {
    adamw_step(params, st, 0.1, 0.0);
    REQUIRE(p.value == std::vector<double>{1.0, -2.0});
  }
  SECTION("zero gradient, wd=0.01, lr=0.1: scaled by (1 - 0.001)") {
    adamw_step(params, st, 0.1, 0.01);
    REQUIRE(p.value[0] == Catch::Approx(1.0 * 0.999));
    REQUIRE(p.value[1] == Catch::Approx(-2.0 * 0.999));
  }
  SECTION("constant gradient: step size tends to lr") {
    // |m_hat/sqrt(v_hat)| -> 1 under a constant gradient.
    double prev = p.value[0];
    double lr = 0.01;
    double step = 0.0;
    for (int i = 0; i < 500; ++i) {
      p.grad = {2.5, 2.5};
      adamw_step(params, st, lr, 0.0);
      step = prev - p.value[0];
      prev = p.value[0];
    }
    REQUIRE(step == Catch::Approx(lr).epsilon(1e-6));
  }
  SECTION("non-finite gradient names the parameter") {
    p.grad = {1.0, std::nan("")};
    REQUIRE_THROWS_WITH(adamw_step(params, st, 0.1, 0.0),
                        Catch::Matchers::ContainsSubstring("w"));
  }
}

TEST_CASE("cosine annealing endpoints and midpoint") {
  REQUIRE(cosine_lr(0, 100, 4e-4) == Catch::Approx(4e-4));
  REQUIRE(cosine_lr(100, 100, 4e-4, 1e-5) == Catch::Approx(1e-5));
  REQUIRE(cosine_lr(50, 100, 4e-4, 2e-4) == Catch::Approx(3e-4));
  REQUIRE_THROWS_AS(cosine_lr(101, 100, 1.0), ContractError);
}

TEST_CASE("k-fold split covers, is disjoint, and is deterministic") {
  auto folds = kfold_split(10, 10, 7);
  for (const auto& f : folds) REQUIRE(f.size() == 1);

  auto folds2 = kfold_split(23, 10, 7);
  std::set<size_t> seen;
  for (const auto& f : folds2) {
    REQUIRE((f.size() == 2 || f.size() == 3));
    for (size_t i : f) REQUIRE(seen.insert(i).second);  // disjoint
  }
  REQUIRE(seen.size() == 23);  // covers
  REQUIRE(kfold_split(23, 10, 7) == folds2);      // same seed
  REQUIRE(kfold_split(23, 10, 8) != folds2);      // different seed
  REQUIRE_THROWS_AS(kfold_split(5, 10, 0), ContractError);

  auto train = kfold_train_indices(folds2, 3);
  REQUIRE(train.size() == 23 - folds2[3].size());
}

TEST_CASE("gradient clipping bounds the global norm exactly") {
  Parameter a("a", {2}), b("b", {1});
  a.grad = {3.0, 0.0};
  b.grad = {4.0};
  std::vector<Parameter*> params{&a, &b};
  double before = clip_grad_norm(params, 2.5);
  REQUIRE(before == Catch::Approx(5.0));
  double after = std::sqrt(a.grad[0] * a.grad[0] + a.grad[1] * a.grad[1] +
                           b.grad[0] * b.grad[0]);
  REQUIRE(after == Catch::Approx(2.5));
  // Below the threshold nothing changes.
  REQUIRE(clip_grad_norm(params, 100.0) == Catch::Approx(2.5));
  REQUIRE(b.grad[0] == Catch::Approx(2.0));
}

TEST_CASE("metrics and unit conversions") {
  AtomicStructure s1, s2;
  s1.positions = {{0, 0, 0}};
  s1.species = {1};
  s1.energy = 1.0;
  s2 = s1;
  s2.energy = -1.0;
  std::vector<StructurePrediction> preds{{2.0, {}}, {-2.0, {}}};
  auto m = compute_metrics(preds, {&s1, &s2});
  REQUIRE(m.mae_energy == Catch::Approx(1.0));
  REQUIRE(m.rmse_energy == Catch::Approx(1.0));
  REQUIRE(m.mae_energy * kEvToKcalPerMol == Catch::Approx(23.0605));
  REQUIRE(m.mae_energy_per_atom * kEvToMev == Catch::Approx(1000.0));

  std::vector<StructurePrediction> exact{{1.0, {}}, {-1.0, {}}};
  auto z = compute_metrics(exact, {&s1, &s2});
  REQUIRE(z.mae_energy == 0.0);
  REQUIRE(z.rmse_energy == 0.0);
  REQUIRE_THROWS_AS(compute_metrics(preds, {&s1}), ContractError);
}

TEST_CASE("reference energy fit recovers an exactly linear target") {
  Rng rng(61);
  std::vector<AtomicStructure> frames;
  std::map<int, double> truth{{1, -13.6}, {6, -1000.0}, {8, -2000.0}};
  for (int t = 0; t < 20; ++t) {
    AtomicStructure s = random_structure(rng, 8, false);
    double e = 0.0;
    for (int z : s.species) {
      // random_structure uses {1,6,7,8}; remap 7 -> 6 to stay in range.
      if (z == 7) z = 6;
      e += truth[z];
    }
    for (auto& z : s.species)
      if (z == 7) z = 6;
    s.energy = e;
    frames.push_back(std::move(s));
  }
  std::vector<const AtomicStructure*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  auto e0 = fit_reference_energies(ptrs, {1, 6, 8});
  for (auto [z, v] : truth) REQUIRE(e0[z] == Catch::Approx(v).margin(1e-6));
}

TEST_CASE("epoch order is a pure function of seed and epoch") {
  REQUIRE(epoch_order(50, 3, 7) == epoch_order(50, 3, 7));
  REQUIRE(epoch_order(50, 3, 7) != epoch_order(50, 3, 8));
  REQUIRE(epoch_order(50, 4, 7) != epoch_order(50, 3, 7));
}

TEST_CASE("short overfit run drives the loss down") {
  auto frames = parse_extxyz(std::string(TEST_DATA_DIR) + "/toy_water.extxyz");
  std::vector<const AtomicStructure*> data;
  for (size_t i = 0; i < 5; ++i) data.push_back(&frames[i]);

  ModelConfig mc;
  mc.hidden_irreps = "4x0e+2x1o";
  mc.species = {1, 8};
  mc.embed_dim = 4;
  mc.mlp_hidden = 16;
  mc.r_cut = 4.0;
  mc.n_rbf = 6;
  Model model(mc);

  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  tc.batch_size = 5;
  tc.epochs = 400;
  tc.weights = {1.0, 0.0, 0.0};
  Trainer trainer(model, data, tc);
  trainer.fit_references();
  double first = trainer.run_epoch().loss;
  EpochLog last{};
  for (int e = 1; e < tc.epochs; ++e) last = trainer.run_epoch();
  REQUIRE(last.loss < 0.5 * first);
}

TEST_CASE("resume reproduces uninterrupted training bit-for-bit") {
  auto frames = parse_extxyz(std::string(TEST_DATA_DIR) + "/toy_water.extxyz");
  std::vector<const AtomicStructure*> data;
  for (size_t i = 0; i < 6; ++i) data.push_back(&frames[i]);

  ModelConfig mc;
  mc.hidden_irreps = "4x0e+2x1o";
  mc.species = {1, 8};
  mc.embed_dim = 4;
  mc.mlp_hidden = 8;
  mc.r_cut = 4.0;
  mc.n_rbf = 4;

  TrainConfig tc;
  tc.batch_size = 3;
  tc.epochs = 6;
  tc.weights = {1.0, 100.0, 0.0};

  // Uninterrupted run.
  Model m1(mc);
  Trainer t1(m1, data, tc);
  t1.fit_references();
  for (int e = 0; e < 6; ++e) t1.run_epoch();

  // Interrupted at epoch 3, saved, resumed into a fresh model.
  std::string ckpt = "resume_test.ckpt";
  {
    Model m2(mc);
    Trainer t2(m2, data, tc);
    t2.fit_references();
    for (int e = 0; e < 3; ++e) t2.run_epoch();
    t2.save(ckpt);
  }
  Model m3(mc);
  Trainer t3(m3, data, tc);
  t3.resume(ckpt);
  REQUIRE(t3.epoch() == 3);
  for (int e = 3; e < 6; ++e) t3.run_epoch();

  auto& p1 = m1.parameters();
  auto& p3 = m3.parameters();
  for (size_t i = 0; i < p1.size(); ++i) {
    INFO(p1[i]->name);
    REQUIRE(p1[i]->value == p3[i]->value);  // bitwise
  }
  std::remove(ckpt.c_str());
}

TEST_CASE("learning curve emits one row per size") {
  auto frames = parse_extxyz(std::string(TEST_DATA_DIR) + "/toy_water.extxyz");
  std::vector<const AtomicStructure*> pool, test;
  for (size_t i = 0; i < 20; ++i) pool.push_back(&frames[i]);
  for (size_t i = 20; i < 30; ++i) test.push_back(&frames[i]);

  ModelConfig mc;
  mc.hidden_irreps = "2x0e+1x1o";
  mc.species = {1, 8};
  mc.embed_dim = 2;
  mc.mlp_hidden = 4;
  mc.r_cut = 4.0;
  mc.n_rbf = 4;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  auto rows = learning_curve(pool, test, {4, 12}, mc, tc);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].train_size == 4);
  REQUIRE(rows[1].train_size == 12);
  REQUIRE(rows[0].peak_rss_kb > 0);
  REQUIRE_THROWS_AS(learning_curve(pool, test, {999}, mc, tc), ContractError);
}
