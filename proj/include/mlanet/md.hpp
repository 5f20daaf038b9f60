#pragma once

// Molecular dynamics: velocity Verlet, Langevin (BAOAB splitting), and a
// driver that runs a force provider (learned model or analytic potential)
// with stability monitoring and extxyz trajectory output.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlanet/config.hpp"
#include "mlanet/errors.hpp"
#include "mlanet/extxyz.hpp"
#include "mlanet/graph.hpp"
#include "mlanet/model.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/structure.hpp"

namespace mlanet {

// Units: eV, Angstrom, fs, amu. Acceleration = kForceUnit * f/m [A/fs^2].
inline constexpr double kForceUnit = 9.64853329045e-3;
inline constexpr double kBoltzmann = 8.617333262e-5;  // eV/K

struct MDState {
  std::vector<Vec3> positions;   // A
  std::vector<Vec3> velocities;  // A/fs
  std::vector<double> masses;    // amu
  std::vector<int> species;
  std::optional<Mat3> cell;
  std::array<bool, 3> pbc{false, false, false};
  double time = 0.0;  // fs
  int64_t step = 0;

  size_t size() const { return positions.size(); }

  AtomicStructure structure() const {
    AtomicStructure s;
    s.positions = positions;
    s.species = species;
    s.cell = cell;
    s.pbc = pbc;
    return s;
  }

  void check_finite() const {
    for (size_t i = 0; i < size(); ++i)
      for (int k = 0; k < 3; ++k)
        if (!std::isfinite(positions[i][k]) || !std::isfinite(velocities[i][k]))
          throw MdError("non-finite state at atom " + std::to_string(i) +
                        ", step " + std::to_string(step));
  }
};

inline MDState md_state_from_structure(const AtomicStructure& s) {
  s.validate();
  MDState st;
  st.positions = s.positions;
  st.velocities.assign(s.size(), Vec3{0.0, 0.0, 0.0});
  st.species = s.species;
  st.cell = s.cell;
  st.pbc = s.pbc;
  for (int z : s.species) st.masses.push_back(elements::mass(z));
  return st;
}

// Maxwell-Boltzmann draw at temperature T, with the center-of-mass drift
// removed.
inline void thermalize(MDState& st, double temperature, Rng& rng) {
  if (temperature < 0) throw MdError("thermalize: negative temperature");
  Vec3 p_tot{0, 0, 0};
  double m_tot = 0.0;
  for (size_t i = 0; i < st.size(); ++i) {
    double sigma = std::sqrt(kForceUnit * kBoltzmann * temperature /
                             st.masses[i]);
    for (int k = 0; k < 3; ++k) {
      st.velocities[i][k] = sigma * rng.normal();
      p_tot[k] += st.masses[i] * st.velocities[i][k];
    }
    m_tot += st.masses[i];
  }
  if (st.size() > 1)
    for (size_t i = 0; i < st.size(); ++i)
      for (int k = 0; k < 3; ++k) st.velocities[i][k] -= p_tot[k] / m_tot;
}

using ForceFn = std::function<std::vector<Vec3>(const MDState&)>;

namespace detail {

inline void check_forces(const std::vector<Vec3>& f, const MDState& st) {
  if (f.size() != st.size())
    throw MdError("force provider returned wrong atom count");
  for (size_t i = 0; i < f.size(); ++i)
    for (int k = 0; k < 3; ++k)
      if (!std::isfinite(f[i][k]))
        throw MdError("non-finite force at atom " + std::to_string(i) +
                      ", step " + std::to_string(st.step));
}

}  // namespace detail

// One velocity-Verlet step. `forces` holds f(x_t) on entry and f(x_{t+dt})
// on return, so each step costs one force evaluation.
inline void velocity_verlet_step(MDState& st, std::vector<Vec3>& forces,
                                 const ForceFn& force_fn, double dt) {
  if (dt <= 0.0) throw MdError("velocity_verlet_step: dt must be positive");
  detail::check_forces(forces, st);
  for (size_t i = 0; i < st.size(); ++i) {
    double am = kForceUnit / st.masses[i];
    for (int k = 0; k < 3; ++k) {
      st.velocities[i][k] += 0.5 * dt * am * forces[i][k];
      st.positions[i][k] += dt * st.velocities[i][k];
    }
  }
  std::vector<Vec3> f_new = force_fn(st);
  detail::check_forces(f_new, st);
  for (size_t i = 0; i < st.size(); ++i) {
    double am = kForceUnit / st.masses[i];
    for (int k = 0; k < 3; ++k)
      st.velocities[i][k] += 0.5 * dt * am * f_new[i][k];
  }
  forces = std::move(f_new);
  st.time += dt;
  ++st.step;
  st.check_finite();
}

// BAOAB-splitting Langevin step: half kick, half drift, full
// Ornstein-Uhlenbeck velocity update, half drift, half kick. friction = 0
// makes the O step the identity and the trajectory reduces exactly to
// velocity Verlet.
inline void langevin_thermostat_step(MDState& st, std::vector<Vec3>& forces,
                                     const ForceFn& force_fn, double dt,
                                     double temperature, double friction,
                                     Rng& rng) {
  if (dt <= 0.0) throw MdError("langevin step: dt must be positive");
  if (temperature < 0.0 || friction < 0.0)
    throw MdError("langevin step: T and friction must be >= 0");
  detail::check_forces(forces, st);
  const double c1 = std::exp(-friction * dt);
  for (size_t i = 0; i < st.size(); ++i) {
    double am = kForceUnit / st.masses[i];
    if (friction > 0.0) {
      double c2 = std::sqrt(kForceUnit * kBoltzmann * temperature *
                            (1.0 - c1 * c1) / st.masses[i]);
      for (int k = 0; k < 3; ++k) {
        st.velocities[i][k] += 0.5 * dt * am * forces[i][k];          // B
        st.positions[i][k] += 0.5 * dt * st.velocities[i][k];         // A
        st.velocities[i][k] = c1 * st.velocities[i][k] + c2 * rng.normal();  // O
        st.positions[i][k] += 0.5 * dt * st.velocities[i][k];         // A
      }
    } else {
      // O is the identity; a single full drift keeps the trajectory
      // bit-identical to velocity Verlet (and consumes no randomness).
      for (int k = 0; k < 3; ++k) {
        st.velocities[i][k] += 0.5 * dt * am * forces[i][k];          // B
        st.positions[i][k] += dt * st.velocities[i][k];               // A
      }
    }
  }
  std::vector<Vec3> f_new = force_fn(st);
  detail::check_forces(f_new, st);
  for (size_t i = 0; i < st.size(); ++i) {
    double am = kForceUnit / st.masses[i];
    for (int k = 0; k < 3; ++k)
      st.velocities[i][k] += 0.5 * dt * am * f_new[i][k];             // B
  }
  forces = std::move(f_new);
  st.time += dt;
  ++st.step;
  st.check_finite();
}

inline double kinetic_energy(const MDState& st) {
  double e = 0.0;
  for (size_t i = 0; i < st.size(); ++i) {
    double v2 = 0.0;
    for (int k = 0; k < 3; ++k) v2 += st.velocities[i][k] * st.velocities[i][k];
    e += 0.5 * st.masses[i] * v2 / kForceUnit;  // back to eV
  }
  return e;
}

inline double kinetic_temperature(const MDState& st) {
  if (st.size() == 0) return 0.0;
  return 2.0 * kinetic_energy(st) / (3.0 * st.size() * kBoltzmann);
}

struct StabilityMonitor {
  double min_distance = 0.5;   // A; any closer pair is a violation
  double max_drift = 0.0;      // A; 0 = auto (10x initial extent + 10)
  int64_t failure_step = -1;
  std::string reason;

  void prime(const MDState& st) {
    if (max_drift > 0.0) return;
    double ext = 0.0;
    for (size_t i = 0; i < st.size(); ++i)
      for (size_t j = i + 1; j < st.size(); ++j) {
        Vec3 d;
        for (int k = 0; k < 3; ++k)
          d[k] = st.positions[i][k] - st.positions[j][k];
        ext = std::max(ext, norm3(d));
      }
    max_drift = 10.0 * ext + 10.0;
    for (int k = 0; k < 3; ++k) center_[k] = 0.0;
    for (const auto& p : st.positions)
      for (int k = 0; k < 3; ++k) center_[k] += p[k] / st.size();
  }

  // True while stable; on the first violation records the step and reason.
  bool check(const MDState& st) {
    if (failure_step >= 0) return false;
    AtomicStructure s = st.structure();
    for (size_t i = 0; i < st.size(); ++i)
      for (size_t j = i + 1; j < st.size(); ++j)
        if (min_image_distance(s, i, j) < min_distance) {
          failure_step = st.step;
          reason = "pair (" + std::to_string(i) + "," + std::to_string(j) +
                   ") closer than " + std::to_string(min_distance) + " A";
          return false;
        }
    if (!st.pbc[0] && !st.pbc[1] && !st.pbc[2])
      for (size_t i = 0; i < st.size(); ++i) {
        Vec3 d;
        for (int k = 0; k < 3; ++k) d[k] = st.positions[i][k] - center_[k];
        if (norm3(d) > max_drift) {
          failure_step = st.step;
          reason = "atom " + std::to_string(i) + " drifted beyond " +
                   std::to_string(max_drift) + " A";
          return false;
        }
      }
    return true;
  }

 private:
  Vec3 center_{0, 0, 0};
};

struct MDReport {
  int64_t steps_run = 0;
  int64_t failure_step = -1;  // -1: stable for the full duration
  std::string failure_reason;
  double ps_stable = 0.0;
  double frames_per_second = 0.0;  // wall clock
  double final_time_fs = 0.0;
};

// Inference forces from a trained model.
inline ForceFn model_force_fn(Model& model) {
  return [&model](const MDState& st) {
    AtomicStructure s = st.structure();
    const ModelConfig& cfg = model.config();
    AtomGraph g = build_batch({&s}, cfg.r_cut, cfg.n_rbf, cfg.use_long_range,
                              cfg.use_charge);
    Tape t;
    t.set_grad_enabled(false);
    Model::Output out = model.forward(t, g);
    std::vector<Vec3> f(st.size());
    for (size_t i = 0; i < st.size(); ++i)
      for (int k = 0; k < 3; ++k) f[i][k] = out.forces.value()[3 * i + k];
    return f;
  };
}

// Runs MD with stability monitoring. On instability the trajectory is
// truncated at the failing frame and the report carries the metadata; no
// exception escapes for that case.
inline MDReport run_md(const AtomicStructure& start, const ForceFn& force_fn,
                       const MDConfig& cfg, StabilityMonitor monitor = {},
                       const std::string& traj_path = "",
                       std::vector<AtomicStructure>* traj_out = nullptr) {
  if (cfg.steps < 0) throw MdError("run_md: negative step count");
  MDState st = md_state_from_structure(start);
  Rng rng(cfg.seed);
  if (cfg.temperature > 0.0) thermalize(st, cfg.temperature, rng);
  monitor.min_distance = cfg.min_distance;
  monitor.prime(st);

  std::vector<AtomicStructure> frames;
  auto snapshot = [&] {
    AtomicStructure s = st.structure();
    s.energy = kinetic_energy(st);  // diagnostic only
    frames.push_back(std::move(s));
  };

  MDReport rep;
  auto t0 = std::chrono::steady_clock::now();
  std::vector<Vec3> forces = force_fn(st);
  detail::check_forces(forces, st);
  snapshot();
  bool stable = monitor.check(st);
  for (int64_t i = 0; stable && i < cfg.steps; ++i) {
    if (cfg.friction > 0.0)
      langevin_thermostat_step(st, forces, force_fn, cfg.dt, cfg.temperature,
                               cfg.friction, rng);
    else
      velocity_verlet_step(st, forces, force_fn, cfg.dt);
    ++rep.steps_run;
    stable = monitor.check(st);
    if (cfg.traj_every > 0 && st.step % cfg.traj_every == 0) snapshot();
    if (!stable) snapshot();  // keep the failing frame for inspection
  }
  auto t1 = std::chrono::steady_clock::now();
  double wall = std::chrono::duration<double>(t1 - t0).count();

  rep.failure_step = monitor.failure_step;
  rep.failure_reason = monitor.reason;
  rep.final_time_fs = st.time;
  rep.ps_stable = 1e-3 * cfg.dt *
                  static_cast<double>(rep.failure_step >= 0 ? monitor.failure_step
                                                            : rep.steps_run);
  rep.frames_per_second = wall > 0 ? rep.steps_run / wall : 0.0;

  if (!traj_path.empty()) write_extxyz(traj_path, frames);
  if (traj_out) *traj_out = std::move(frames);
  return rep;
}

}  // namespace mlanet
