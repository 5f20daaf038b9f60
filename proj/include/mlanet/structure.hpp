#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mlanet/errors.hpp"

namespace mlanet {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;  // rows are cell vectors

inline double det3(const Mat3& c) {
  return c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) -
         c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0]) +
         c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

inline double norm3(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

// One atomic configuration: the simulation and data unit. Positions in
// Angstrom, energies in eV, forces in eV/A, stress in Voigt order
// (xx, yy, zz, yz, xz, xy).
struct AtomicStructure {
  std::vector<Vec3> positions;
  std::vector<int> species;  // atomic numbers
  std::optional<Mat3> cell;
  std::array<bool, 3> pbc{false, false, false};
  std::optional<int> total_charge;

  std::optional<double> energy;
  std::optional<std::vector<Vec3>> forces;
  std::optional<std::array<double, 6>> stress;

  size_t size() const { return positions.size(); }

  bool any_pbc() const { return pbc[0] || pbc[1] || pbc[2]; }

  void validate() const {
    if (positions.empty())
      throw DataError("structure: needs at least one atom");
    if (species.size() != positions.size())
      throw DataError("structure: species/position count mismatch");
    if (any_pbc()) {
      if (!cell)
        throw GeometryError("structure: periodic axes require a cell");
      if (std::fabs(det3(*cell)) <= 1e-10)
        throw GeometryError("structure: cell is degenerate (|det| <= 1e-10)");
    }
    if (forces && forces->size() != positions.size())
      throw DataError("structure: forces label shape mismatch");
  }
};

}  // namespace mlanet
