#pragma once

// Structure -> graph conversion: periodic neighbor search, edge geometry,
// Bessel radial features, and the optional long-range / charge node
// channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "mlanet/errors.hpp"
#include "mlanet/structure.hpp"

namespace mlanet {

struct AtomGraph {
  std::vector<int> node_species;
  std::vector<int64_t> edge_src;  // j (message source)
  std::vector<int64_t> edge_dst;  // i (message receiver)
  std::vector<std::array<int, 3>> edge_shift;
  std::vector<Vec3> edge_vec;  // r_j + C n - r_i, points dst -> src
  std::vector<double> edge_len;
  std::vector<double> edge_rbf;  // row-major [E, n_rbf], filled separately
  int n_rbf = 0;
  std::vector<int64_t> graph_index;      // b_i: which graph each node is in
  std::vector<int64_t> graph_atom_count;  // per graph
  std::vector<double> node_long_range;   // optional extra 0e node channel
  std::vector<double> node_charge;       // optional extra 0e node channel

  size_t n_nodes() const { return node_species.size(); }
  size_t n_edges() const { return edge_src.size(); }
  size_t n_graphs() const { return graph_atom_count.size(); }
};

// Per-axis image search range: ceil(r_cut / perpendicular cell height).
inline std::array<int, 3> image_ranges(const AtomicStructure& s,
                                       double r_cut) {
  std::array<int, 3> rng{0, 0, 0};
  if (!s.any_pbc()) return rng;
  const Mat3& c = *s.cell;
  double vol = std::fabs(det3(c));
  for (int ax = 0; ax < 3; ++ax) {
    if (!s.pbc[ax]) continue;
    Vec3 a = c[(ax + 1) % 3];
    Vec3 b = c[(ax + 2) % 3];
    double height = vol / norm3(cross(a, b));
    rng[ax] = static_cast<int>(std::ceil(r_cut / height));
  }
  return rng;
}

// All directed pairs (i, j, shift) with 0 < |r_j + C n - r_i| <= r_cut,
// self-pairs allowed only with a nonzero image shift. Edge order is sorted
// by (dst, src, shift) and therefore deterministic.
inline AtomGraph build_neighbor_list(const AtomicStructure& s, double r_cut) {
  if (r_cut <= 0.0) throw ContractError("neighbor list: r_cut must be > 0");
  s.validate();
  const size_t n = s.size();
  AtomGraph g;
  g.node_species = s.species;
  g.graph_index.assign(n, 0);
  g.graph_atom_count = {static_cast<int64_t>(n)};

  std::array<int, 3> rng = image_ranges(s, r_cut);
  Mat3 cell{};
  if (s.cell) cell = *s.cell;

  struct Edge {
    int64_t i, j;
    std::array<int, 3> shift;
    Vec3 vec;
    double len;
  };
  std::vector<Edge> edges;
  const double rc2 = r_cut * r_cut;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      for (int n0 = -rng[0]; n0 <= rng[0]; ++n0)
        for (int n1 = -rng[1]; n1 <= rng[1]; ++n1)
          for (int n2 = -rng[2]; n2 <= rng[2]; ++n2) {
            if (i == j && n0 == 0 && n1 == 0 && n2 == 0) continue;
            Vec3 d;
            for (int k = 0; k < 3; ++k)
              d[k] = s.positions[j][k] - s.positions[i][k] +
                     n0 * cell[0][k] + n1 * cell[1][k] + n2 * cell[2][k];
            double r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if (r2 > rc2 || r2 == 0.0) continue;
            edges.push_back({static_cast<int64_t>(i), static_cast<int64_t>(j),
                             {n0, n1, n2}, d, std::sqrt(r2)});
          }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.i, a.j, a.shift) < std::tie(b.i, b.j, b.shift);
  });
  for (const auto& e : edges) {
    g.edge_dst.push_back(e.i);
    g.edge_src.push_back(e.j);
    g.edge_shift.push_back(e.shift);
    g.edge_vec.push_back(e.vec);
    g.edge_len.push_back(e.len);
  }
  return g;
}

// Order-0 spherical Bessel radial basis,
// RBF_m(x) = sqrt(2/r_cut) * sin(m pi x / r_cut) / x, m = 1..n_rbf.
// Every basis function vanishes exactly at x = r_cut and the set is
// orthonormal under the x^2 measure on [0, r_cut].
inline std::vector<double> bessel_rbf(const std::vector<double>& x,
                                      double r_cut, int n_rbf) {
  std::vector<double> out(x.size() * static_cast<size_t>(n_rbf));
  const double pref = std::sqrt(2.0 / r_cut);
  for (size_t e = 0; e < x.size(); ++e) {
    if (x[e] <= 0.0)
      throw ContractError("bessel_rbf: distance must be positive");
    for (int m = 1; m <= n_rbf; ++m)
      out[e * n_rbf + (m - 1)] =
          pref * std::sin(m * M_PI * x[e] / r_cut) / x[e];
  }
  return out;
}

inline void attach_rbf(AtomGraph& g, double r_cut, int n_rbf) {
  g.edge_rbf = bessel_rbf(g.edge_len, r_cut, n_rbf);
  g.n_rbf = n_rbf;
}

// Minimum-image distance (shifts searched over [-1,1] per periodic axis).
inline double min_image_distance(const AtomicStructure& s, size_t i,
                                 size_t j) {
  Mat3 cell{};
  if (s.cell) cell = *s.cell;
  int r0 = s.pbc[0] ? 1 : 0, r1 = s.pbc[1] ? 1 : 0, r2 = s.pbc[2] ? 1 : 0;
  double best = 0.0;
  bool first = true;
  for (int n0 = -r0; n0 <= r0; ++n0)
    for (int n1 = -r1; n1 <= r1; ++n1)
      for (int n2 = -r2; n2 <= r2; ++n2) {
        Vec3 d;
        for (int k = 0; k < 3; ++k)
          d[k] = s.positions[j][k] - s.positions[i][k] + n0 * cell[0][k] +
                 n1 * cell[1][k] + n2 * cell[2][k];
        double r = norm3(d);
        if (first || r < best) {
          best = r;
          first = false;
        }
      }
  return best;
}

// Mean minimum-image distance from each atom to all others (no cutoff).
// Zero for a single atom.
inline std::vector<double> long_range_feature(const AtomicStructure& s) {
  const size_t n = s.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      acc += min_image_distance(s, i, j);
    }
    out[i] = acc / static_cast<double>(n - 1);
  }
  return out;
}

// Total charge broadcast to every node; missing charge defaults to 0.
inline std::vector<double> charge_feature(const AtomicStructure& s) {
  double q = s.total_charge ? static_cast<double>(*s.total_charge) : 0.0;
  return std::vector<double>(s.size(), q);
}

// Concatenates several structures into one batched graph with per-node
// graph indices.
inline AtomGraph build_batch(const std::vector<const AtomicStructure*>& batch,
                             double r_cut, int n_rbf,
                             bool long_range = false, bool charge = false) {
  AtomGraph g;
  int64_t node_off = 0;
  for (size_t b = 0; b < batch.size(); ++b) {
    AtomGraph part = build_neighbor_list(*batch[b], r_cut);
    attach_rbf(part, r_cut, n_rbf);
    if (long_range) {
      auto lr = long_range_feature(*batch[b]);
      g.node_long_range.insert(g.node_long_range.end(), lr.begin(), lr.end());
    }
    if (charge) {
      auto qf = charge_feature(*batch[b]);
      g.node_charge.insert(g.node_charge.end(), qf.begin(), qf.end());
    }
    g.node_species.insert(g.node_species.end(), part.node_species.begin(),
                          part.node_species.end());
    for (size_t e = 0; e < part.n_edges(); ++e) {
      g.edge_src.push_back(part.edge_src[e] + node_off);
      g.edge_dst.push_back(part.edge_dst[e] + node_off);
      g.edge_shift.push_back(part.edge_shift[e]);
      g.edge_vec.push_back(part.edge_vec[e]);
      g.edge_len.push_back(part.edge_len[e]);
    }
    g.edge_rbf.insert(g.edge_rbf.end(), part.edge_rbf.begin(),
                      part.edge_rbf.end());
    for (size_t i = 0; i < part.n_nodes(); ++i)
      g.graph_index.push_back(static_cast<int64_t>(b));
    g.graph_atom_count.push_back(static_cast<int64_t>(part.n_nodes()));
    node_off += static_cast<int64_t>(part.n_nodes());
  }
  g.n_rbf = n_rbf;
  return g;
}

}  // namespace mlanet
