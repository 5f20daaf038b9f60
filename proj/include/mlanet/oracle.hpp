#pragma once

// Slow independent reference implementations used by the test suites and
// the `verify` command: Haar-random rotations, Wigner-D matrices fit from
// sampled harmonics, central-difference gradients, and exhaustive neighbor
// search. None of these share code with the production paths they check.

#include <array>
#include <cmath>
#include <functional>
#include <set>
#include <tuple>
#include <vector>

#include "mlanet/errors.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/spherical.hpp"
#include "mlanet/structure.hpp"

namespace mlanet {

struct RigidMotion {
  Mat3 rotation;   // orthonormal, det = +1
  Vec3 translation{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& p) const {
    Vec3 out;
    for (int i = 0; i < 3; ++i)
      out[i] = rotation[i][0] * p[0] + rotation[i][1] * p[1] +
               rotation[i][2] * p[2] + translation[i];
    return out;
  }
  Vec3 rotate(const Vec3& p) const {
    Vec3 out;
    for (int i = 0; i < 3; ++i)
      out[i] = rotation[i][0] * p[0] + rotation[i][1] * p[1] +
               rotation[i][2] * p[2];
    return out;
  }
};

// Haar-uniform rotation from a normalized quaternion.
inline RigidMotion random_rotation(Rng& rng, double translation_scale = 0.0) {
  double q[4];
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& qi : q) {
      qi = rng.normal();
      n2 += qi * qi;
    }
  } while (n2 < 1e-12);
  double n = std::sqrt(n2);
  double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  RigidMotion m;
  m.rotation = {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w),
                  2 * (x * z + y * w)},
                 {2 * (x * y + z * w), 1 - 2 * (x * x + z * z),
                  2 * (y * z - x * w)},
                 {2 * (x * z - y * w), 2 * (y * z + x * w),
                  1 - 2 * (x * x + y * y)}}};
  for (int i = 0; i < 3; ++i)
    m.translation[i] = translation_scale * rng.normal();
  return m;
}

namespace detail {

// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(std::vector<double> a,
                                        std::vector<double> b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    if (std::fabs(a[piv * n + col]) < 1e-14)
      throw OracleError("solve_linear: singular system");
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r * n + c] * x[c];
    x[r] = s / a[r * n + r];
  }
  return x;
}

}  // namespace detail

// D^l(R) such that Y_l(R u) = D^l(R) Y_l(u), found by least squares over
// sampled directions. The residual is asserted, so a wrong fit cannot pass
// silently.
inline std::vector<double> wigner_d(int l, const Mat3& rotation,
                                    uint64_t seed = 12345) {
  // A non-orthonormal input would break the unit-direction sampling below
  // in confusing ways; refuse it up front.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rotation[i][k] * rotation[j][k];
      if (std::fabs(dot - (i == j ? 1.0 : 0.0)) > 1e-9)
        throw OracleError("wigner_d: input matrix is not a rotation");
    }
  int d = 2 * l + 1;
  int samples = 4 * d * d;
  Rng rng(seed + static_cast<uint64_t>(l));
  std::vector<std::array<double, 3>> dirs;
  dirs.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    double v[3];
    double n2;
    do {
      n2 = 0.0;
      for (double& vi : v) {
        vi = rng.normal();
        n2 += vi * vi;
      }
    } while (n2 < 1e-12);
    double n = std::sqrt(n2);
    dirs.push_back({v[0] / n, v[1] / n, v[2] / n});
  }

  auto block = [l, d](double x, double y, double z) {
    auto full = sh_point(l, x, y, z);
    return std::vector<double>(full.end() - d, full.end());
  };

  // Normal equations: D^T = (A^T A)^{-1} A^T B with A = Y(u), B = Y(Ru).
  std::vector<double> ata(static_cast<size_t>(d * d), 0.0);
  std::vector<std::vector<double>> atb(d, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> arows, brows;
  for (const auto& u : dirs) {
    auto a = block(u[0], u[1], u[2]);
    Vec3 ru;
    for (int i = 0; i < 3; ++i)
      ru[i] = rotation[i][0] * u[0] + rotation[i][1] * u[1] +
              rotation[i][2] * u[2];
    auto b = block(ru[0], ru[1], ru[2]);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) ata[i * d + j] += a[i] * a[j];
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) atb[j][i] += a[i] * b[j];
    arows.push_back(std::move(a));
    brows.push_back(std::move(b));
  }
  std::vector<double> D(static_cast<size_t>(d * d), 0.0);
  for (int row = 0; row < d; ++row) {
    auto x = detail::solve_linear(ata, atb[row], d);
    for (int c = 0; c < d; ++c) D[row * d + c] = x[c];
  }
  // Residual check over the sample set.
  double num = 0.0, den = 0.0;
  for (size_t s = 0; s < arows.size(); ++s)
    for (int i = 0; i < d; ++i) {
      double pred = 0.0;
      for (int j = 0; j < d; ++j) pred += D[i * d + j] * arows[s][j];
      num += (pred - brows[s][i]) * (pred - brows[s][i]);
      den += brows[s][i] * brows[s][i];
    }
  if (std::sqrt(num / std::max(den, 1e-300)) > 1e-10)
    throw OracleError("wigner_d: least-squares residual too large");
  return D;
}

// Central differences, h = 1e-5 by default.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> params, double h = 1e-5) {
  std::vector<double> grad(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    double orig = params[i];
    params[i] = orig + h;
    double fp = f(params);
    params[i] = orig - h;
    double fm = f(params);
    params[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// rel err with the gradcheck denominator max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

struct OracleEdge {
  int64_t i, j;
  std::array<int, 3> shift;

  bool operator<(const OracleEdge& o) const {
    return std::tie(i, j, shift) < std::tie(o.i, o.j, o.shift);
  }
  bool operator==(const OracleEdge& o) const {
    return i == o.i && j == o.j && shift == o.shift;
  }
};

// Exhaustive triple loop over pairs and image shifts.
inline std::set<OracleEdge> brute_force_neighbors(const AtomicStructure& s,
                                                  double r_cut,
                                                  int shift_range = 3) {
  s.validate();
  Mat3 cell{};
  if (s.cell) cell = *s.cell;
  int r0 = s.pbc[0] ? shift_range : 0;
  int r1 = s.pbc[1] ? shift_range : 0;
  int r2 = s.pbc[2] ? shift_range : 0;
  if (s.any_pbc()) {
    // The range must cover the cutoff: a shift one past the range along
    // each axis alone must already exceed r_cut.
    double vol = std::fabs(det3(cell));
    for (int ax = 0; ax < 3; ++ax) {
      if (!s.pbc[ax]) continue;
      Vec3 a = cell[(ax + 1) % 3];
      Vec3 b = cell[(ax + 2) % 3];
      double height = vol / norm3(cross(a, b));
      if (shift_range * height < r_cut)
        throw OracleError("brute_force_neighbors: shift_range too small");
    }
  }
  std::set<OracleEdge> edges;
  const size_t n = s.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      for (int n0 = -r0; n0 <= r0; ++n0)
        for (int n1 = -r1; n1 <= r1; ++n1)
          for (int n2 = -r2; n2 <= r2; ++n2) {
            if (i == j && n0 == 0 && n1 == 0 && n2 == 0) continue;
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
              double dk = s.positions[j][k] - s.positions[i][k] +
                          n0 * cell[0][k] + n1 * cell[1][k] +
                          n2 * cell[2][k];
              d2 += dk * dk;
            }
            if (d2 > 0.0 && d2 <= r_cut * r_cut)
              edges.insert({static_cast<int64_t>(i), static_cast<int64_t>(j),
                            {n0, n1, n2}});
          }
  return edges;
}

}  // namespace mlanet
