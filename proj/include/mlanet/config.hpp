#pragma once

// JSON run configuration. Parsing is strict: any key we do not understand
// aborts before work starts, so typos cannot silently fall back to
// defaults.

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "mlanet/errors.hpp"
#include "mlanet/model.hpp"

namespace mlanet {

using nlohmann::json;

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"hidden_irreps", c.hidden_irreps},
              {"n_layers_energy", c.n_layers_energy},
              {"n_layers_force", c.n_layers_force},
              {"n_mlp_layers", c.n_mlp_layers},
              {"r_cut", c.r_cut},
              {"n_rbf", c.n_rbf},
              {"n_heads", c.n_heads},
              {"temperature", c.temperature},
              {"use_long_range", c.use_long_range},
              {"use_charge", c.use_charge},
              {"predict_stress", c.predict_stress},
              {"species", c.species},
              {"embed_dim", c.embed_dim},
              {"mlp_hidden", c.mlp_hidden},
              {"seed", c.seed},
              {"tp_path_max_l", c.tp_path_max_l}};
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::reject_unknown(
      j,
      {"hidden_irreps", "n_layers_energy", "n_layers_force", "n_mlp_layers",
       "r_cut", "n_rbf", "n_heads", "temperature", "use_long_range",
       "use_charge", "predict_stress", "species", "embed_dim", "mlp_hidden",
       "seed", "tp_path_max_l"},
      "model");
  ModelConfig c;
  c.hidden_irreps = detail::get_or(j, "hidden_irreps", c.hidden_irreps);
  c.n_layers_energy = detail::get_or(j, "n_layers_energy", c.n_layers_energy);
  c.n_layers_force = detail::get_or(j, "n_layers_force", c.n_layers_force);
  c.n_mlp_layers = detail::get_or(j, "n_mlp_layers", c.n_mlp_layers);
  c.r_cut = detail::get_or(j, "r_cut", c.r_cut);
  c.n_rbf = detail::get_or(j, "n_rbf", c.n_rbf);
  c.n_heads = detail::get_or(j, "n_heads", c.n_heads);
  c.temperature = detail::get_or(j, "temperature", c.temperature);
  c.use_long_range = detail::get_or(j, "use_long_range", c.use_long_range);
  c.use_charge = detail::get_or(j, "use_charge", c.use_charge);
  c.predict_stress = detail::get_or(j, "predict_stress", c.predict_stress);
  c.species = detail::get_or(j, "species", c.species);
  c.embed_dim = detail::get_or(j, "embed_dim", c.embed_dim);
  c.mlp_hidden = detail::get_or(j, "mlp_hidden", c.mlp_hidden);
  c.seed = detail::get_or(j, "seed", c.seed);
  c.tp_path_max_l = detail::get_or(j, "tp_path_max_l", c.tp_path_max_l);
  return c;
}

struct LossWeights {
  double lambda_energy = 1.0;
  double lambda_force = 0.0;
  double lambda_stress = 0.0;

  void validate() const {
    if (lambda_energy < 0 || lambda_force < 0 || lambda_stress < 0)
      throw ConfigError("loss weights must be non-negative");
    if (lambda_energy == 0 && lambda_force == 0 && lambda_stress == 0)
      throw ConfigError("loss weights cannot all be zero");
  }
};

struct TrainConfig {
  double learning_rate = 4e-4;
  double weight_decay = 0.01;
  int batch_size = 8;
  int epochs = 100;
  uint64_t seed = 0;
  int t_max = 0;          // cosine period in epochs; 0 = epochs
  double lr_min = 0.0;
  LossWeights weights;
  double grad_clip = 0.0;  // global-norm threshold; 0 disables
  double val_fraction = 0.0;
  int checkpoint_every = 0;  // epochs; 0 = only at the end
  int log_every = 1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (learning_rate <= 0) throw ConfigError("train: learning_rate <= 0");
    if (val_fraction < 0 || val_fraction >= 1)
      throw ConfigError("train: val_fraction must be in [0, 1)");
    weights.validate();
  }
};

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown(
      j,
      {"learning_rate", "weight_decay", "batch_size", "epochs", "seed",
       "t_max", "lr_min", "lambda_energy", "lambda_force", "lambda_stress",
       "grad_clip", "val_fraction", "checkpoint_every", "log_every"},
      "train");
  TrainConfig c;
  c.learning_rate = detail::get_or(j, "learning_rate", c.learning_rate);
  c.weight_decay = detail::get_or(j, "weight_decay", c.weight_decay);
  c.batch_size = detail::get_or(j, "batch_size", c.batch_size);
  c.epochs = detail::get_or(j, "epochs", c.epochs);
  c.seed = detail::get_or(j, "seed", c.seed);
  c.t_max = detail::get_or(j, "t_max", c.t_max);
  c.lr_min = detail::get_or(j, "lr_min", c.lr_min);
  c.weights.lambda_energy =
      detail::get_or(j, "lambda_energy", c.weights.lambda_energy);
  c.weights.lambda_force =
      detail::get_or(j, "lambda_force", c.weights.lambda_force);
  c.weights.lambda_stress =
      detail::get_or(j, "lambda_stress", c.weights.lambda_stress);
  c.grad_clip = detail::get_or(j, "grad_clip", c.grad_clip);
  c.val_fraction = detail::get_or(j, "val_fraction", c.val_fraction);
  c.checkpoint_every = detail::get_or(j, "checkpoint_every", c.checkpoint_every);
  c.log_every = detail::get_or(j, "log_every", c.log_every);
  return c;
}

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"t_max", c.t_max},
              {"lr_min", c.lr_min},
              {"lambda_energy", c.weights.lambda_energy},
              {"lambda_force", c.weights.lambda_force},
              {"lambda_stress", c.weights.lambda_stress},
              {"grad_clip", c.grad_clip},
              {"val_fraction", c.val_fraction},
              {"checkpoint_every", c.checkpoint_every},
              {"log_every", c.log_every}};
}

struct MDConfig {
  int steps = 1000;
  double dt = 0.5;           // fs
  double temperature = 0.0;  // K; > 0 enables the thermostat
  double friction = 0.0;     // 1/fs
  uint64_t seed = 0;
  int traj_every = 10;
  double min_distance = 0.5;  // Angstrom, stability threshold
};

inline MDConfig md_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"steps", "dt", "temperature", "friction", "seed",
                          "traj_every", "min_distance"},
                         "md");
  MDConfig c;
  c.steps = detail::get_or(j, "steps", c.steps);
  c.dt = detail::get_or(j, "dt", c.dt);
  c.temperature = detail::get_or(j, "temperature", c.temperature);
  c.friction = detail::get_or(j, "friction", c.friction);
  c.seed = detail::get_or(j, "seed", c.seed);
  c.traj_every = detail::get_or(j, "traj_every", c.traj_every);
  c.min_distance = detail::get_or(j, "min_distance", c.min_distance);
  return c;
}

struct RunConfig {
  std::string train_data;
  std::string val_data;
  std::string test_data;
  ModelConfig model;
  TrainConfig train;
  MDConfig md;
  std::string output_dir = ".";
};

// MLANET_OUTPUT_DIR overrides the config's output directory.
inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"train_data", "val_data", "test_data", "model",
                          "train", "md", "output_dir"},
                         "config");
  RunConfig c;
  c.train_data = detail::get_or<std::string>(j, "train_data", "");
  c.val_data = detail::get_or<std::string>(j, "val_data", "");
  c.test_data = detail::get_or<std::string>(j, "test_data", "");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("md")) c.md = md_config_from_json(j.at("md"));
  c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
  if (const char* env = std::getenv("MLANET_OUTPUT_DIR"))
    c.output_dir = env;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace mlanet
