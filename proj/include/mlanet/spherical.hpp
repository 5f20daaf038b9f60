#pragma once

// Real spherical harmonics in "component" normalization: the l-block of
// any unit vector has Euclidean norm sqrt(2l+1), so the l=0 component is
// identically 1. Component ordering within a block is m = -l..l; for
// l = 1 this reads (y, z, x) scaled by sqrt(3).

#include <array>
#include <cmath>
#include <vector>

#include "mlanet/errors.hpp"

namespace mlanet {

// Values of all blocks l = 0..l_max for one unit direction, concatenated.
inline std::vector<double> sh_point(int l_max, double x, double y, double z,
                                    double unit_tol = 1e-8) {
  double n2 = x * x + y * y + z * z;
  if (std::fabs(n2 - 1.0) > 3.0 * unit_tol)
    throw ContractError("spherical harmonics: direction is not unit length");

  int L = l_max;
  // C[m], S[m]: st^m * cos(m phi), st^m * sin(m phi) as polynomials in x,y.
  std::vector<double> C(L + 1), S(L + 1);
  C[0] = 1.0;
  S[0] = 0.0;
  for (int m = 1; m <= L; ++m) {
    C[m] = x * C[m - 1] - y * S[m - 1];
    S[m] = x * S[m - 1] + y * C[m - 1];
  }

  // Q[l][m] = P_lm(z) / st^m (no Condon-Shortley phase).
  std::vector<std::vector<double>> Q(L + 1, std::vector<double>(L + 1, 0.0));
  Q[0][0] = 1.0;
  for (int m = 1; m <= L; ++m) Q[m][m] = Q[m - 1][m - 1] * (2 * m - 1);
  for (int m = 0; m < L; ++m) Q[m + 1][m] = z * (2 * m + 1) * Q[m][m];
  for (int m = 0; m <= L; ++m)
    for (int l = m + 2; l <= L; ++l)
      Q[l][m] = ((2 * l - 1) * z * Q[l - 1][m] - (l - 1 + m) * Q[l - 2][m]) /
                static_cast<double>(l - m);

  std::vector<double> out;
  out.reserve((L + 1) * (L + 1));
  for (int l = 0; l <= L; ++l) {
    for (int m = -l; m <= l; ++m) {
      int am = std::abs(m);
      double fac = 1.0;  // (l-|m|)! / (l+|m|)!
      for (int k = l - am + 1; k <= l + am; ++k) fac /= static_cast<double>(k);
      double K = std::sqrt((2 * l + 1) * fac);
      double v;
      if (m == 0)
        v = K * Q[l][0];
      else if (m > 0)
        v = std::sqrt(2.0) * K * Q[l][am] * C[am];
      else
        v = std::sqrt(2.0) * K * Q[l][am] * S[am];
      out.push_back(v);
    }
  }
  return out;
}

// Row-major [n_dirs, (l_max+1)^2] table for a batch of unit directions
// given as a flat xyz array.
inline std::vector<double> sh_batch(int l_max,
                                    const std::vector<double>& dirs_xyz) {
  size_t n = dirs_xyz.size() / 3;
  int dim = (l_max + 1) * (l_max + 1);
  std::vector<double> out;
  out.reserve(n * dim);
  for (size_t i = 0; i < n; ++i) {
    auto row = sh_point(l_max, dirs_xyz[3 * i], dirs_xyz[3 * i + 1],
                        dirs_xyz[3 * i + 2]);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace mlanet
