// Command-line entry point: train / eval / md / learning-curve / bench /
// verify. Exit codes: 0 success, 1 runtime failure (with a JSON error
// record on stderr), 2 usage errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlanet/bench.hpp"
#include "mlanet/checkpoint.hpp"
#include "mlanet/config.hpp"
#include "mlanet/extxyz.hpp"
#include "mlanet/md.hpp"
#include "mlanet/model.hpp"
#include "mlanet/train.hpp"
#include "mlanet/verify.hpp"

namespace fs = std::filesystem;
using mlanet::json;

namespace {

std::vector<const mlanet::AtomicStructure*> ptrs(
    const std::vector<mlanet::AtomicStructure>& v) {
  std::vector<const mlanet::AtomicStructure*> p;
  p.reserve(v.size());
  for (const auto& s : v) p.push_back(&s);
  return p;
}

json metrics_json(const mlanet::Metrics& m) {
  return json{
      {"mae_energy_ev", m.mae_energy},
      {"mae_energy_kcal_per_mol", m.mae_energy * mlanet::kEvToKcalPerMol},
      {"mae_energy_per_atom_mev", m.mae_energy_per_atom * mlanet::kEvToMev},
      {"rmse_energy_ev", m.rmse_energy},
      {"mae_force_ev_per_a", m.mae_force},
      {"mae_force_mev_per_a", m.mae_force * mlanet::kEvToMev},
      {"rmse_force_ev_per_a", m.rmse_force},
      {"n_structures", m.n_structures}};
}

int cmd_train(const std::string& config_path, int fold,
              const std::string& resume_path) {
  mlanet::RunConfig cfg = mlanet::load_run_config(config_path);
  fs::create_directories(cfg.output_dir);
  auto frames = mlanet::parse_extxyz(cfg.train_data);
  auto all = ptrs(frames);

  std::vector<const mlanet::AtomicStructure*> train = all, test;
  std::vector<mlanet::AtomicStructure> test_frames;
  if (fold >= 0) {
    auto folds = mlanet::kfold_split(all.size(), 10, cfg.train.seed);
    if (fold >= static_cast<int>(folds.size()))
      throw mlanet::ConfigError("--fold out of range for 10-fold split");
    train.clear();
    for (size_t i : mlanet::kfold_train_indices(folds, fold))
      train.push_back(all[i]);
    for (size_t i : folds[fold]) test.push_back(all[i]);
  } else if (!cfg.test_data.empty()) {
    test_frames = mlanet::parse_extxyz(cfg.test_data);
    test = ptrs(test_frames);
  }

  mlanet::Model model(cfg.model);
  mlanet::Trainer trainer(model, train, cfg.train);
  std::string ckpt = cfg.output_dir + "/model.ckpt";
  if (!resume_path.empty())
    trainer.resume(resume_path);
  else
    trainer.fit_references();
  auto history =
      trainer.run(cfg.output_dir + "/train_log.jsonl", ckpt);

  json summary{{"epochs", trainer.epoch()},
               {"final_loss", history.empty() ? 0.0 : history.back().loss},
               {"checkpoint", ckpt},
               {"n_train", train.size()}};
  if (!test.empty())
    summary["test_metrics"] = metrics_json(mlanet::evaluate(model, test));
  std::ofstream(cfg.output_dir + "/train_summary.json") << summary.dump(2)
                                                        << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             int batch_size) {
  auto model = mlanet::model_from_checkpoint(ckpt_path);
  auto frames = mlanet::parse_extxyz(data_path);
  auto m = mlanet::evaluate(*model, ptrs(frames), batch_size);
  std::cout << metrics_json(m).dump(2) << "\n";
  return 0;
}

int cmd_md(const std::string& ckpt_path, const std::string& structure_path,
           const mlanet::MDConfig& md_cfg, const std::string& traj_path,
           const std::string& report_path) {
  auto model = mlanet::model_from_checkpoint(ckpt_path);
  auto frames = mlanet::parse_extxyz(structure_path);
  if (frames.empty()) throw mlanet::DataError("structure file is empty");
  mlanet::MDReport rep = mlanet::run_md(
      frames[0], mlanet::model_force_fn(*model), md_cfg, {}, traj_path);
  json out{{"steps_run", rep.steps_run},
           {"failure_step", rep.failure_step},
           {"failure_reason", rep.failure_reason},
           {"ps_stable", rep.ps_stable},
           {"fps", rep.frames_per_second},
           {"final_time_fs", rep.final_time_fs},
           {"trajectory", traj_path}};
  if (!report_path.empty()) std::ofstream(report_path) << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_learning_curve(const std::string& config_path,
                       const std::vector<size_t>& sizes) {
  mlanet::RunConfig cfg = mlanet::load_run_config(config_path);
  fs::create_directories(cfg.output_dir);
  auto pool_frames = mlanet::parse_extxyz(cfg.train_data);
  std::vector<mlanet::AtomicStructure> test_frames;
  if (!cfg.test_data.empty())
    test_frames = mlanet::parse_extxyz(cfg.test_data);
  else
    throw mlanet::ConfigError("learning-curve needs test_data in the config");
  auto rows = mlanet::learning_curve(ptrs(pool_frames), ptrs(test_frames),
                                     sizes, cfg.model, cfg.train);
  std::string csv_path = cfg.output_dir + "/learning_curve.csv";
  std::ofstream csv(csv_path);
  csv << "train_size,test_mae_energy_ev,seconds_per_epoch,peak_rss_kb\n";
  for (const auto& r : rows)
    csv << r.train_size << "," << r.test_mae_energy << ","
        << r.seconds_per_epoch << "," << r.peak_rss_kb << "\n";
  std::cout << "wrote " << csv_path << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& structure_path,
              const std::vector<int>& diamond_cells, int repeat, int species) {
  auto model = mlanet::model_from_checkpoint(ckpt_path);
  std::vector<mlanet::AtomicStructure> systems;
  if (!structure_path.empty()) {
    auto frames = mlanet::parse_extxyz(structure_path);
    systems.insert(systems.end(), frames.begin(), frames.end());
  }
  for (int n : diamond_cells)
    systems.push_back(mlanet::make_diamond_supercell(n, species));
  if (systems.empty())
    throw mlanet::ConfigError("bench: give --structure and/or --diamond");
  std::cout << "n_atoms,n_edges,mean_ms,min_ms\n";
  for (const auto& s : systems) {
    auto row = mlanet::bench_inference(*model, s, repeat);
    std::cout << row.n_atoms << "," << row.n_edges << "," << row.mean_ms
              << "," << row.min_ms << "\n";
  }
  return 0;
}

int cmd_verify(bool full) {
  auto results = mlanet::run_verification(full);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  ("
              << r.detail << ")\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all checks passed\n" : "some checks FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant graph network interatomic potential toolkit"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, data_path, structure_path;
  std::string traj_path = "trajectory.extxyz", report_path;
  std::string resume_path;
  int fold = -1, batch_size = 32, repeat = 5, bench_species = 6;
  bool full = false;
  std::vector<size_t> sizes;
  std::vector<int> diamond_cells;
  mlanet::MDConfig md_cfg;

  auto* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "JSON run config")->required();
  train->add_option("--fold", fold, "ten-fold CV fold index (0-9)");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", ckpt_path)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--batch-size", batch_size);

  auto* md = app.add_subcommand("md", "run molecular dynamics");
  md->add_option("--checkpoint", ckpt_path)->required();
  md->add_option("--structure", structure_path)->required();
  md->add_option("--steps", md_cfg.steps);
  md->add_option("--dt", md_cfg.dt, "timestep in fs");
  md->add_option("--temp", md_cfg.temperature, "temperature in K");
  md->add_option("--friction", md_cfg.friction, "Langevin friction in 1/fs");
  md->add_option("--seed", md_cfg.seed);
  md->add_option("--traj-every", md_cfg.traj_every);
  md->add_option("--traj", traj_path, "trajectory output path");
  md->add_option("--report", report_path, "stability report JSON path");

  auto* lc = app.add_subcommand("learning-curve",
                                "train at several subset sizes");
  lc->add_option("--config", config_path)->required();
  lc->add_option("--sizes", sizes, "comma-separated train sizes")
      ->required()
      ->delimiter(',');

  auto* bench = app.add_subcommand("bench", "inference latency table");
  bench->add_option("--checkpoint", ckpt_path)->required();
  bench->add_option("--structure", structure_path);
  bench->add_option("--diamond", diamond_cells,
                    "diamond supercell repeats, e.g. 2,3")
      ->delimiter(',');
  bench->add_option("--repeat", repeat);
  bench->add_option("--species", bench_species,
                    "atomic number for --diamond cells");

  auto* verify = app.add_subcommand("verify", "run the verification suite");
  verify->add_flag("--full", full, "larger sample counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage/help
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config_path, fold, resume_path);
    if (*eval) return cmd_eval(ckpt_path, data_path, batch_size);
    if (*md) return cmd_md(ckpt_path, structure_path, md_cfg, traj_path,
                           report_path);
    if (*lc) return cmd_learning_curve(config_path, sizes);
    if (*bench)
      return cmd_bench(ckpt_path, structure_path, diamond_cells, repeat,
                       bench_species);
    if (*verify) return cmd_verify(full);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()},
                      {"command", app.get_subcommands().empty()
                                      ? ""
                                      : app.get_subcommands()[0]->get_name()}}
                     .dump()
              << "\n";
    return 1;
  }
  return 2;
}
