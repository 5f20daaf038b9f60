#pragma once

// Clebsch-Gordan coefficients in the real spherical-harmonic basis used by
// sh_point(). Complex CG values come from the Racah closed form; the change
// of basis to real harmonics leaves a global phase per (l1,l2,l3) which is
// fixed deterministically and checked to be exact.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "mlanet/errors.hpp"
#include "mlanet/tensor.hpp"

namespace mlanet {

namespace detail {

inline double factorial(int n) {
  static const std::array<double, 21> table = [] {
    std::array<double, 21> t{};
    t[0] = 1.0;
    for (int i = 1; i <= 20; ++i) t[i] = t[i - 1] * i;
    return t;
  }();
  if (n < 0 || n > 20) throw ContractError("factorial: out of table range");
  return table[n];
}

// <l1 m1 l2 m2 | l3 m3> with the Condon-Shortley convention.
inline double cg_complex(int l1, int m1, int l2, int m2, int l3, int m3) {
  if (m1 + m2 != m3) return 0.0;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3) return 0.0;
  double delta = factorial(l1 + l2 - l3) * factorial(l1 - l2 + l3) *
                 factorial(-l1 + l2 + l3) / factorial(l1 + l2 + l3 + 1);
  double pref = std::sqrt((2.0 * l3 + 1.0) * delta) *
                std::sqrt(factorial(l1 + m1) * factorial(l1 - m1) *
                          factorial(l2 + m2) * factorial(l2 - m2) *
                          factorial(l3 + m3) * factorial(l3 - m3));
  double sum = 0.0;
  int kmin = std::max({0, l2 - l3 - m1, l1 - l3 + m2});
  int kmax = std::min({l1 + l2 - l3, l1 - m1, l2 + m2});
  for (int k = kmin; k <= kmax; ++k) {
    double term = factorial(k) * factorial(l1 + l2 - l3 - k) *
                  factorial(l1 - m1 - k) * factorial(l2 + m2 - k) *
                  factorial(l3 - l2 + m1 + k) * factorial(l3 - l1 - m2 + k);
    sum += ((k % 2) ? -1.0 : 1.0) / term;
  }
  return pref * sum;
}

// Change of basis: real_m = sum_m' U[m][m'] complex_m'.
inline std::vector<std::vector<std::complex<double>>> real_basis(int l) {
  const std::complex<double> I(0.0, 1.0);
  int d = 2 * l + 1;
  std::vector<std::vector<std::complex<double>>> U(
      d, std::vector<std::complex<double>>(d, 0.0));
  double r = 1.0 / std::sqrt(2.0);
  U[l][l] = 1.0;
  for (int m = 1; m <= l; ++m) {
    double sg = (m % 2) ? -1.0 : 1.0;
    U[l + m][l + m] = sg * r;
    U[l + m][l - m] = r;
    U[l - m][l + m] = -I * sg * r;
    U[l - m][l - m] = I * r;
  }
  return U;
}

}  // namespace detail

using CgCoeffs = std::vector<Tape::BilinearCoeff>;

// Real-basis CG coefficients for one (l1,l2,l3), sparse. m indices are
// 0-based block offsets. Sign convention: the first nonzero coefficient in
// lexicographic (m1,m2,m3) order is positive.
inline CgCoeffs real_cg(int l1, int l2, int l3) {
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2)
    throw ContractError("real_cg: selection rule violated for (" +
                        std::to_string(l1) + "," + std::to_string(l2) + "," +
                        std::to_string(l3) + ")");
  auto U1 = detail::real_basis(l1);
  auto U2 = detail::real_basis(l2);
  auto U3 = detail::real_basis(l3);
  int d1 = 2 * l1 + 1, d2 = 2 * l2 + 1, d3 = 2 * l3 + 1;
  std::vector<std::complex<double>> dense(
      static_cast<size_t>(d1 * d2 * d3), 0.0);
  for (int M1 = 0; M1 < d1; ++M1)
    for (int M2 = 0; M2 < d2; ++M2)
      for (int M3 = 0; M3 < d3; ++M3) {
        std::complex<double> acc = 0.0;
        for (int m1 = -l1; m1 <= l1; ++m1)
          for (int m2 = -l2; m2 <= l2; ++m2) {
            int m3 = m1 + m2;
            if (std::abs(m3) > l3) continue;
            double cg = detail::cg_complex(l1, m1, l2, m2, l3, m3);
            if (cg == 0.0) continue;
            acc += std::conj(U1[M1][m1 + l1]) * std::conj(U2[M2][m2 + l2]) *
                   U3[M3][m3 + l3] * cg;
          }
        dense[(M1 * d2 + M2) * d3 + M3] = acc;
      }
  // Remove the global phase.
  std::complex<double> phase = 0.0;
  for (const auto& v : dense)
    if (std::abs(v) > 1e-9) {
      phase = v / std::abs(v);
      break;
    }
  if (phase == std::complex<double>(0.0))
    throw ContractError("real_cg: all coefficients vanish");
  CgCoeffs out;
  for (int M1 = 0; M1 < d1; ++M1)
    for (int M2 = 0; M2 < d2; ++M2)
      for (int M3 = 0; M3 < d3; ++M3) {
        std::complex<double> v =
            dense[(M1 * d2 + M2) * d3 + M3] * std::conj(phase);
        if (std::abs(v.imag()) > 1e-12)
          throw ContractError("real_cg: residual imaginary part");
        if (std::abs(v.real()) > 1e-14)
          out.push_back({M1, M2, M3, v.real()});
      }
  return out;
}

// Cache of real CG coefficient lists for all l1,l2,l3 <= L_max obeying the
// selection rules. Immutable after construction.
class CGTable {
 public:
  explicit CGTable(int l_max = 4) : l_max_(l_max) {
    for (int l1 = 0; l1 <= l_max; ++l1)
      for (int l2 = 0; l2 <= l_max; ++l2)
        for (int l3 = std::abs(l1 - l2); l3 <= std::min(l_max, l1 + l2); ++l3)
          table_[key(l1, l2, l3)] =
              std::make_shared<const CgCoeffs>(real_cg(l1, l2, l3));
  }

  int l_max() const { return l_max_; }

  std::shared_ptr<const CgCoeffs> get(int l1, int l2, int l3) const {
    auto it = table_.find(key(l1, l2, l3));
    if (it == table_.end())
      throw ContractError("CGTable: no coefficients for (" +
                          std::to_string(l1) + "," + std::to_string(l2) +
                          "," + std::to_string(l3) + ")");
    return it->second;
  }

  bool allowed(int l1, int l2, int l3) const {
    return l3 >= std::abs(l1 - l2) && l3 <= l1 + l2 && l1 <= l_max_ &&
           l2 <= l_max_ && l3 <= l_max_;
  }

  // Shared process-wide table, built once.
  static const CGTable& instance() {
    static const CGTable table(4);
    return table;
  }

 private:
  static int64_t key(int l1, int l2, int l3) {
    return (static_cast<int64_t>(l1) << 16) | (l2 << 8) | l3;
  }

  int l_max_;
  std::map<int64_t, std::shared_ptr<const CgCoeffs>> table_;
};

}  // namespace mlanet
