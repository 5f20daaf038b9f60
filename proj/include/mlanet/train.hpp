#pragma once

// Training: L1 losses, AdamW with cosine annealing, k-fold splitting,
// metrics, per-species reference-energy fitting, the training loop with
// bit-exact checkpoint/resume, and the learning-curve driver.

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mlanet/checkpoint.hpp"
#include "mlanet/config.hpp"
#include "mlanet/errors.hpp"
#include "mlanet/graph.hpp"
#include "mlanet/model.hpp"
#include "mlanet/rng.hpp"

namespace mlanet {

// Unit conversions for reporting. Internals are always eV / Angstrom.
inline constexpr double kEvToKcalPerMol = 23.0605;
inline constexpr double kEvToMev = 1000.0;

// L = w_E * (1/B) sum |dE|  +  w_F * (1/3N) sum |dF|  (+ stress term over
// all 6B Voigt components). Energies averaged per structure, forces per
// component over the whole batch.
inline DiffTensor batch_loss(Tape& t, const Model::Output& out,
                             const std::vector<const AtomicStructure*>& batch,
                             const LossWeights& w) {
  w.validate();
  const int64_t B = static_cast<int64_t>(batch.size());
  DiffTensor loss = t.scalar(0.0);
  if (w.lambda_energy > 0.0) {
    std::vector<double> labels(B);
    for (int64_t b = 0; b < B; ++b) {
      if (!batch[b]->energy)
        throw DataError("loss: lambda_energy > 0 but structure " +
                        std::to_string(b) + " has no energy label");
      labels[b] = *batch[b]->energy;
    }
    DiffTensor diff = t.sub(out.energy, t.constant({B, 1}, std::move(labels)));
    loss = t.add(loss, t.scale(t.mean_all(t.abs(diff)), w.lambda_energy));
  }
  if (w.lambda_force > 0.0) {
    int64_t n_total = 0;
    for (const auto* s : batch) n_total += static_cast<int64_t>(s->size());
    std::vector<double> labels;
    labels.reserve(3 * n_total);
    for (int64_t b = 0; b < B; ++b) {
      if (!batch[b]->forces)
        throw DataError("loss: lambda_force > 0 but structure " +
                        std::to_string(b) + " has no force labels");
      for (const Vec3& f : *batch[b]->forces)
        for (int k = 0; k < 3; ++k) labels.push_back(f[k]);
    }
    DiffTensor diff =
        t.sub(out.forces, t.constant({n_total, 3}, std::move(labels)));
    loss = t.add(loss, t.scale(t.sum_all(t.abs(diff)),
                               w.lambda_force / (3.0 * n_total)));
  }
  if (w.lambda_stress > 0.0) {
    if (!out.stress)
      throw ConfigError("loss: lambda_stress > 0 but model has no stress head");
    std::vector<double> labels;
    labels.reserve(6 * B);
    for (int64_t b = 0; b < B; ++b) {
      if (!batch[b]->stress)
        throw DataError("loss: lambda_stress > 0 but structure " +
                        std::to_string(b) + " has no stress label");
      for (double v : *batch[b]->stress) labels.push_back(v);
    }
    DiffTensor diff =
        t.sub(*out.stress, t.constant({B, 6}, std::move(labels)));
    loss = t.add(loss, t.scale(t.sum_all(t.abs(diff)),
                               w.lambda_stress / (6.0 * B)));
  }
  return loss;
}

struct AdamWState {
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;  // aligned with the param list

  void init(const std::vector<Parameter*>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.emplace_back(p->value.size(), 0.0);
      v.emplace_back(p->value.size(), 0.0);
    }
  }
};

// Decoupled weight decay: p *= (1 - lr*wd) before the bias-corrected Adam
// step.
inline void adamw_step(std::vector<Parameter*>& params, AdamWState& state,
                       double lr, double weight_decay = 0.01,
                       double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8) {
  if (state.m.size() != params.size()) state.init(params);
  ++state.step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in parameter '" + p.name +
                            "' at index " + std::to_string(i));
      p.value[i] *= 1.0 - lr * weight_decay;
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

inline double cosine_lr(int64_t step, int64_t t_max, double lr_max,
                        double lr_min = 0.0) {
  if (t_max < 1) throw ContractError("cosine_lr: t_max must be >= 1");
  if (step < 0 || step > t_max)
    throw ContractError("cosine_lr: step outside [0, t_max]");
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                      static_cast<double>(t_max)));
}

// Rescales all gradients so the global L2 norm is at most `threshold`.
// Returns the pre-clip norm.
inline double clip_grad_norm(std::vector<Parameter*>& params,
                             double threshold) {
  double norm2 = 0.0;
  for (const auto* p : params)
    for (double g : p->grad) norm2 += g * g;
  double norm = std::sqrt(norm2);
  if (threshold > 0.0 && norm > threshold) {
    double f = threshold / norm;
    for (auto* p : params)
      for (double& g : p->grad) g *= f;
  }
  return norm;
}

// Seeded shuffle, then k contiguous test folds differing in size by <= 1.
inline std::vector<std::vector<size_t>> kfold_split(size_t n, int k,
                                                    uint64_t seed) {
  if (k < 1 || static_cast<size_t>(k) > n)
    throw ContractError("kfold_split: need 1 <= k <= dataset size");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::vector<size_t>> folds(k);
  size_t base = n / k, rem = n % k, pos = 0;
  for (int f = 0; f < k; ++f) {
    size_t len = base + (static_cast<size_t>(f) < rem ? 1 : 0);
    folds[f].assign(idx.begin() + pos, idx.begin() + pos + len);
    pos += len;
  }
  return folds;
}

inline std::vector<size_t> kfold_train_indices(
    const std::vector<std::vector<size_t>>& folds, int test_fold) {
  std::vector<size_t> train;
  for (int f = 0; f < static_cast<int>(folds.size()); ++f)
    if (f != test_fold)
      train.insert(train.end(), folds[f].begin(), folds[f].end());
  return train;
}

struct Metrics {
  double mae_energy = 0.0;           // eV per structure
  double mae_energy_per_atom = 0.0;  // eV/atom
  double rmse_energy = 0.0;
  double mae_force = 0.0;  // eV/A per component
  double rmse_force = 0.0;
  size_t n_structures = 0;
  size_t n_force_components = 0;
};

struct StructurePrediction {
  double energy = 0.0;
  std::vector<Vec3> forces;
};

inline Metrics compute_metrics(const std::vector<StructurePrediction>& preds,
                               const std::vector<const AtomicStructure*>& refs) {
  if (preds.size() != refs.size())
    throw ContractError("metrics: prediction/label count mismatch");
  Metrics m;
  double se_sum = 0.0, sf_sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (refs[i]->energy) {
      double de = preds[i].energy - *refs[i]->energy;
      m.mae_energy += std::fabs(de);
      m.mae_energy_per_atom += std::fabs(de) / refs[i]->size();
      se_sum += de * de;
      ++m.n_structures;
    }
    if (refs[i]->forces) {
      const auto& fl = *refs[i]->forces;
      if (preds[i].forces.size() != fl.size())
        throw ContractError("metrics: force shape mismatch");
      for (size_t a = 0; a < fl.size(); ++a)
        for (int k = 0; k < 3; ++k) {
          double df = preds[i].forces[a][k] - fl[a][k];
          m.mae_force += std::fabs(df);
          sf_sum += df * df;
          ++m.n_force_components;
        }
    }
  }
  if (m.n_structures) {
    m.mae_energy /= m.n_structures;
    m.mae_energy_per_atom /= m.n_structures;
    m.rmse_energy = std::sqrt(se_sum / m.n_structures);
  }
  if (m.n_force_components) {
    m.mae_force /= m.n_force_components;
    m.rmse_force = std::sqrt(sf_sum / m.n_force_components);
  }
  return m;
}

// Least-squares per-species reference energies: E ~= sum_i E0(z_i).
// Normal equations over species counts; species absent from the data get 0.
inline std::map<int, double> fit_reference_energies(
    const std::vector<const AtomicStructure*>& data,
    const std::vector<int>& species) {
  const int S = static_cast<int>(species.size());
  std::map<int, int> col;
  for (int s = 0; s < S; ++s) col[species[s]] = s;
  std::vector<double> ata(static_cast<size_t>(S * S), 0.0), atb(S, 0.0);
  for (const auto* st : data) {
    if (!st->energy) continue;
    std::vector<double> counts(S, 0.0);
    for (int z : st->species) {
      auto it = col.find(z);
      if (it == col.end())
        throw DataError("reference fit: species z=" + std::to_string(z) +
                        " not covered by the model");
      counts[it->second] += 1.0;
    }
    for (int a = 0; a < S; ++a) {
      for (int b = 0; b < S; ++b) ata[a * S + b] += counts[a] * counts[b];
      atb[a] += counts[a] * *st->energy;
    }
  }
  // Tiny ridge so species absent from the data stay at 0 instead of making
  // the system singular.
  for (int a = 0; a < S; ++a) ata[a * S + a] += 1e-10;
  // In-place Gaussian elimination with partial pivoting.
  std::vector<double> x(S, 0.0);
  for (int c = 0; c < S; ++c) {
    int piv = c;
    for (int r = c + 1; r < S; ++r)
      if (std::fabs(ata[r * S + c]) > std::fabs(ata[piv * S + c])) piv = r;
    if (piv != c) {
      for (int k = 0; k < S; ++k) std::swap(ata[piv * S + k], ata[c * S + k]);
      std::swap(atb[piv], atb[c]);
    }
    for (int r = c + 1; r < S; ++r) {
      double f = ata[r * S + c] / ata[c * S + c];
      for (int k = c; k < S; ++k) ata[r * S + k] -= f * ata[c * S + k];
      atb[r] -= f * atb[c];
    }
  }
  for (int r = S - 1; r >= 0; --r) {
    double s = atb[r];
    for (int c = r + 1; c < S; ++c) s -= ata[r * S + c] * x[c];
    x[r] = s / ata[r * S + r];
  }
  std::map<int, double> e0;
  for (int s = 0; s < S; ++s) e0[species[s]] = x[s];
  return e0;
}

inline std::vector<StructurePrediction> predict(
    Model& model, const std::vector<const AtomicStructure*>& data,
    int batch_size = 32) {
  std::vector<StructurePrediction> preds;
  const ModelConfig& cfg = model.config();
  for (size_t start = 0; start < data.size();
       start += static_cast<size_t>(batch_size)) {
    size_t stop = std::min(data.size(), start + batch_size);
    std::vector<const AtomicStructure*> batch(data.begin() + start,
                                              data.begin() + stop);
    AtomGraph g = build_batch(batch, cfg.r_cut, cfg.n_rbf, cfg.use_long_range,
                              cfg.use_charge);
    Tape t;
    t.set_grad_enabled(false);
    Model::Output out = model.forward(t, g);
    size_t node = 0;
    for (size_t b = 0; b < batch.size(); ++b) {
      StructurePrediction p;
      p.energy = out.energy.value()[b];
      for (size_t a = 0; a < batch[b]->size(); ++a, ++node)
        p.forces.push_back({out.forces.value()[3 * node],
                            out.forces.value()[3 * node + 1],
                            out.forces.value()[3 * node + 2]});
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

inline Metrics evaluate(Model& model,
                        const std::vector<const AtomicStructure*>& data,
                        int batch_size = 32) {
  return compute_metrics(predict(model, data, batch_size), data);
}

inline int64_t peak_rss_kb() {
  struct rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<int64_t>(ru.ru_maxrss);
}

// Epoch-scoped data order: a pure function of (seed, epoch) so a resumed
// run sees exactly the same batches as an uninterrupted one.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch + 1)));
  rng.shuffle(idx);
  return idx;
}

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(Model& model, std::vector<const AtomicStructure*> data,
          TrainConfig cfg)
      : model_(model), data_(std::move(data)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (data_.empty()) throw TrainingError("trainer: empty dataset");
    state_.init(model_.parameters());
    if (cfg_.t_max < 1) cfg_.t_max = cfg_.epochs;
  }

  // Fits per-species reference energies on the training data so the
  // network only has to learn the residual.
  void fit_references() {
    if (cfg_.weights.lambda_energy > 0.0)
      model_.reference_energies() =
          fit_reference_energies(data_, model_.config().species);
  }

  EpochLog run_epoch() {
    auto t0 = std::chrono::steady_clock::now();
    double lr = cosine_lr(std::min(epoch_, cfg_.t_max), cfg_.t_max,
                          cfg_.learning_rate, cfg_.lr_min);
    std::vector<size_t> order = epoch_order(data_.size(), cfg_.seed, epoch_);
    const ModelConfig& mc = model_.config();
    double loss_sum = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg_.batch_size)) {
      size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size));
      std::vector<const AtomicStructure*> batch;
      for (size_t i = start; i < stop; ++i) batch.push_back(data_[order[i]]);
      AtomGraph g = build_batch(batch, mc.r_cut, mc.n_rbf, mc.use_long_range,
                                mc.use_charge);
      Tape t;
      Model::Output out = model_.forward(t, g);
      DiffTensor loss = batch_loss(t, out, batch, cfg_.weights);
      model_.zero_grad();
      t.backward(loss);
      if (cfg_.grad_clip > 0.0)
        clip_grad_norm(model_.parameters(), cfg_.grad_clip);
      adamw_step(model_.parameters(), state_, lr, cfg_.weight_decay);
      loss_sum += loss.item();
      ++n_batches;
    }
    ++epoch_;
    auto t1 = std::chrono::steady_clock::now();
    return {epoch_ - 1, loss_sum / n_batches, lr,
            std::chrono::duration<double>(t1 - t0).count()};
  }

  // JSONL log (one record per epoch) + periodic checkpoints.
  std::vector<EpochLog> run(const std::string& log_path = "",
                            const std::string& ckpt_path = "") {
    std::ofstream log;
    if (!log_path.empty()) {
      log.open(log_path, epoch_ > 0 ? std::ios::app : std::ios::out);
      if (!log) throw IoError("cannot open training log '" + log_path + "'");
    }
    std::vector<EpochLog> history;
    while (epoch_ < cfg_.epochs) {
      EpochLog e = run_epoch();
      history.push_back(e);
      if (log && e.epoch % cfg_.log_every == 0)
        log << json{{"epoch", e.epoch},
                    {"loss", e.loss},
                    {"lr", e.lr},
                    {"seconds", e.seconds}}
                   .dump()
            << "\n";
      if (!ckpt_path.empty() && cfg_.checkpoint_every > 0 &&
          (e.epoch + 1) % cfg_.checkpoint_every == 0)
        save(ckpt_path);
    }
    if (!ckpt_path.empty()) save(ckpt_path);
    return history;
  }

  void save(const std::string& path) {
    std::vector<std::pair<std::string, const std::vector<double>*>> extra;
    auto& params = model_.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      extra.emplace_back("opt.m." + params[i]->name, &state_.m[i]);
      extra.emplace_back("opt.v." + params[i]->name, &state_.v[i]);
    }
    json meta{{"epoch", epoch_},
              {"opt_step", state_.step},
              {"train", train_config_to_json(cfg_)}};
    save_checkpoint(path, model_, extra, "", meta);
  }

  void resume(const std::string& path) {
    CheckpointData ckpt = load_checkpoint(path);
    load_into_model(model_, ckpt);
    state_.init(model_.parameters());
    auto& params = model_.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      auto im = ckpt.arrays.find("opt.m." + params[i]->name);
      auto iv = ckpt.arrays.find("opt.v." + params[i]->name);
      if (im == ckpt.arrays.end() || iv == ckpt.arrays.end())
        throw IoError("checkpoint has no optimizer state for '" +
                      params[i]->name + "'");
      state_.m[i] = im->second;
      state_.v[i] = iv->second;
    }
    state_.step = ckpt.extra.at("opt_step").get<int64_t>();
    epoch_ = ckpt.extra.at("epoch").get<int>();
  }

  int epoch() const { return epoch_; }
  AdamWState& optimizer_state() { return state_; }

 private:
  Model& model_;
  std::vector<const AtomicStructure*> data_;
  TrainConfig cfg_;
  AdamWState state_;
  int epoch_ = 0;
};

struct LearningCurveRow {
  size_t train_size = 0;
  double test_mae_energy = 0.0;  // eV per structure
  double seconds_per_epoch = 0.0;
  int64_t peak_rss_kb = 0;
};

// Trains one fresh model per subset size on seeded subsets against a fixed
// test set. CSV emission is the caller's job; this returns the rows.
inline std::vector<LearningCurveRow> learning_curve(
    const std::vector<const AtomicStructure*>& train_pool,
    const std::vector<const AtomicStructure*>& test_set,
    const std::vector<size_t>& sizes, const ModelConfig& model_cfg,
    const TrainConfig& train_cfg) {
  std::vector<LearningCurveRow> rows;
  for (size_t size : sizes) {
    if (size > train_pool.size())
      throw ContractError("learning_curve: subset size exceeds pool");
    std::vector<size_t> idx(train_pool.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(train_cfg.seed);
    rng.shuffle(idx);
    std::vector<const AtomicStructure*> subset;
    for (size_t i = 0; i < size; ++i) subset.push_back(train_pool[idx[i]]);

    Model model(model_cfg);
    Trainer trainer(model, subset, train_cfg);
    trainer.fit_references();
    double secs = 0.0;
    for (int e = 0; e < train_cfg.epochs; ++e) secs += trainer.run_epoch().seconds;
    Metrics m = evaluate(model, test_set);
    rows.push_back({size, m.mae_energy, secs / train_cfg.epochs,
                    peak_rss_kb()});
  }
  return rows;
}

}  // namespace mlanet
