#pragma once

// Inference-latency benchmarking on replicated crystal supercells.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "mlanet/graph.hpp"
#include "mlanet/model.hpp"
#include "mlanet/structure.hpp"

namespace mlanet {

// Conventional 8-atom diamond-cubic cell of the given species, replicated
// n x n x n. a0 defaults to the carbon diamond lattice constant.
inline AtomicStructure make_diamond_supercell(int n, int species = 6,
                                              double a0 = 3.567) {
  if (n < 1) throw ContractError("make_diamond_supercell: n must be >= 1");
  static const double basis[8][3] = {
      {0.00, 0.00, 0.00}, {0.00, 0.50, 0.50}, {0.50, 0.00, 0.50},
      {0.50, 0.50, 0.00}, {0.25, 0.25, 0.25}, {0.25, 0.75, 0.75},
      {0.75, 0.25, 0.75}, {0.75, 0.75, 0.25}};
  AtomicStructure s;
  double box = a0 * n;
  s.cell = Mat3{{{box, 0, 0}, {0, box, 0}, {0, 0, box}}};
  s.pbc = {true, true, true};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (const auto& b : basis) {
          s.positions.push_back(
              {a0 * (i + b[0]), a0 * (j + b[1]), a0 * (k + b[2])});
          s.species.push_back(species);
        }
  return s;
}

// Simple-cubic lattice, one atom per cell, replicated n x n x n; handy for
// hitting exact atom counts like 27/64/216.
inline AtomicStructure make_cubic_supercell(int n, int species = 6,
                                            double a0 = 2.5) {
  if (n < 1) throw ContractError("make_cubic_supercell: n must be >= 1");
  AtomicStructure s;
  double box = a0 * n;
  s.cell = Mat3{{{box, 0, 0}, {0, box, 0}, {0, 0, box}}};
  s.pbc = {true, true, true};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        s.positions.push_back({a0 * i, a0 * j, a0 * k});
        s.species.push_back(species);
      }
  return s;
}

struct BenchRow {
  size_t n_atoms = 0;
  size_t n_edges = 0;
  double mean_ms = 0.0;  // full inference incl. graph construction
  double min_ms = 0.0;
};

inline BenchRow bench_inference(Model& model, const AtomicStructure& s,
                                int repeat) {
  if (repeat < 1) throw ContractError("bench: repeat must be >= 1");
  const ModelConfig& cfg = model.config();
  BenchRow row;
  row.n_atoms = s.size();
  double total = 0.0, best = 0.0;
  for (int r = 0; r < repeat + 1; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    AtomGraph g = build_batch({&s}, cfg.r_cut, cfg.n_rbf, cfg.use_long_range,
                              cfg.use_charge);
    Tape t;
    t.set_grad_enabled(false);
    model.forward(t, g);
    auto t1 = std::chrono::steady_clock::now();
    double ms = 1e3 * std::chrono::duration<double>(t1 - t0).count();
    row.n_edges = g.n_edges();
    if (r == 0) continue;  // warm-up pass
    total += ms;
    best = (r == 1 || ms < best) ? ms : best;
  }
  row.mean_ms = total / repeat;
  row.min_ms = best;
  return row;
}

}  // namespace mlanet
