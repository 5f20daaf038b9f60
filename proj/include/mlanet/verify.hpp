#pragma once

// Self-verification suite behind the `verify` CLI command. Each check
// exercises a production path against an independent oracle and reports
// pass/fail with the observed worst-case error.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mlanet/cg.hpp"
#include "mlanet/equivariant.hpp"
#include "mlanet/graph.hpp"
#include "mlanet/model.hpp"
#include "mlanet/oracle.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/spherical.hpp"

namespace mlanet {

struct VerifyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Random configuration for oracle-equivalence tests: a handful of atoms,
// random species, optionally a random (non-degenerate) triclinic cell.
inline AtomicStructure random_structure(Rng& rng, int max_atoms,
                                        bool periodic) {
  AtomicStructure s;
  int n = 1 + static_cast<int>(rng.uniform_int(0, max_atoms - 1));
  static const int zs[] = {1, 6, 7, 8};
  if (periodic) {
    Mat3 c{};
    do {
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c[r][k] = rng.normal(0.0, 1.0);
        c[r][r] += 4.0 + 3.0 * rng.uniform();
      }
    } while (std::fabs(det3(c)) < 10.0);
    s.cell = c;
    s.pbc = {true, true, true};
    for (int i = 0; i < n; ++i) {
      double f0 = rng.uniform(), f1 = rng.uniform(), f2 = rng.uniform();
      s.positions.push_back({f0 * c[0][0] + f1 * c[1][0] + f2 * c[2][0],
                             f0 * c[0][1] + f1 * c[1][1] + f2 * c[2][1],
                             f0 * c[0][2] + f1 * c[1][2] + f2 * c[2][2]});
      s.species.push_back(zs[rng.uniform_int(0, 3)]);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      s.positions.push_back(
          {rng.normal(0.0, 3.0), rng.normal(0.0, 3.0), rng.normal(0.0, 3.0)});
      s.species.push_back(zs[rng.uniform_int(0, 3)]);
    }
  }
  return s;
}

// Direct (unfactorized) evaluation of a TensorProduct: explicit sums over
// paths, channels, and CG entries, reading the same weights.
inline std::vector<double> tensor_product_direct(const TensorProduct& tp,
                                                 const std::vector<double>& x1,
                                                 const std::vector<double>& x2,
                                                 int64_t rows) {
  const IrrepsSpec& in1 = tp.in1_spec();
  const IrrepsSpec& in2 = tp.in2_spec();
  const IrrepsSpec& out = tp.out_spec();
  const auto& w = const_cast<TensorProduct&>(tp).weight().value;
  std::vector<double> y(static_cast<size_t>(rows * out.dim()), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* a_row = &x1[r * in1.dim()];
    const double* b_row = &x2[r * in2.dim()];
    double* y_row = &y[r * out.dim()];
    for (size_t oe = 0; oe < out.entries.size(); ++oe) {
      const auto& o = out.entries[oe];
      int d3 = o.ir.dim();
      int64_t o_off = out.offset(oe);
      for (const auto& p : tp.paths()[oe]) {
        const auto& ea = in1.entries[p.a];
        const auto& eb = in2.entries[p.b];
        int d1 = ea.ir.dim(), d2 = eb.ir.dim();
        int64_t a_off = in1.offset(p.a), b_off = in2.offset(p.b);
        for (const auto& c : *p.coeffs) {
          double s = 0.0;
          for (int64_t ca = 0; ca < ea.mult; ++ca)
            for (int64_t cb = 0; cb < eb.mult; ++cb)
              s += a_row[a_off + ca * d1 + c.m1] *
                   b_row[b_off + cb * d2 + c.m2];
          for (int64_t co = 0; co < o.mult; ++co)
            y_row[o_off + co * d3 + c.m3] +=
                p.norm * w[p.w_offset + co] * c.c * s;
        }
      }
    }
  }
  return y;
}

namespace verify_detail {

inline VerifyResult report(const std::string& name, double err, double tol) {
  std::ostringstream os;
  os << "max err " << err << " (tol " << tol << ")";
  return {name, err < tol, os.str()};
}

}  // namespace verify_detail

inline VerifyResult verify_rotation_orthonormality(int trials = 200) {
  Rng rng(11);
  double err = 0.0;
  for (int t = 0; t < trials; ++t) {
    Mat3 R = random_rotation(rng).rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) d += R[i][k] * R[j][k];
        err = std::max(err, std::fabs(d - (i == j ? 1.0 : 0.0)));
      }
    err = std::max(err, std::fabs(det3(R) - 1.0));
  }
  return verify_detail::report("rotation-orthonormality", err, 1e-12);
}

inline VerifyResult verify_rotation_uniformity(int samples = 10000) {
  Rng rng(12);
  Vec3 v{1.0, 0.0, 0.0};
  Vec3 mean{0.0, 0.0, 0.0};
  for (int s = 0; s < samples; ++s) {
    Vec3 rv = random_rotation(rng).rotate(v);
    for (int k = 0; k < 3; ++k) mean[k] += rv[k] / samples;
  }
  return verify_detail::report("rotation-uniformity", norm3(mean), 0.05);
}

inline VerifyResult verify_wigner_l1_closed_form() {
  Rng rng(13);
  double err = 0.0;
  for (int t = 0; t < 10; ++t) {
    Mat3 R = random_rotation(rng).rotation;
    auto D = wigner_d(1, R);
    // l=1 components are ordered (y, z, x); D^1 is R permuted accordingly.
    const int perm[3] = {1, 2, 0};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        err = std::max(err, std::fabs(D[i * 3 + j] - R[perm[i]][perm[j]]));
  }
  return verify_detail::report("wigner-l1-closed-form", err, 1e-9);
}

inline VerifyResult verify_wigner_homomorphism(int l_max = 3) {
  Rng rng(14);
  double err = 0.0;
  for (int l = 1; l <= l_max; ++l) {
    Mat3 R1 = random_rotation(rng).rotation;
    Mat3 R2 = random_rotation(rng).rotation;
    Mat3 R12{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) R12[i][j] += R1[i][k] * R2[k][j];
    int d = 2 * l + 1;
    auto D1 = wigner_d(l, R1), D2 = wigner_d(l, R2), D12 = wigner_d(l, R12);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += D1[i * d + k] * D2[k * d + j];
        err = std::max(err, std::fabs(s - D12[i * d + j]));
      }
  }
  return verify_detail::report("wigner-homomorphism", err, 1e-9);
}

inline VerifyResult verify_sh_equivariance(int l_max = 4, int trials = 20) {
  Rng rng(15);
  double err = 0.0;
  for (int l = 1; l <= l_max; ++l) {
    Mat3 R = random_rotation(rng).rotation;
    auto D = wigner_d(l, R);
    int d = 2 * l + 1, off = l * l;
    for (int t = 0; t < trials; ++t) {
      Vec3 u{rng.normal(), rng.normal(), rng.normal()};
      double n = norm3(u);
      for (auto& c : u) c /= n;
      auto y = sh_point(l, u[0], u[1], u[2]);
      Vec3 ru;
      for (int i = 0; i < 3; ++i)
        ru[i] = R[i][0] * u[0] + R[i][1] * u[1] + R[i][2] * u[2];
      auto yr = sh_point(l, ru[0], ru[1], ru[2]);
      for (int i = 0; i < d; ++i) {
        double pred = 0.0;
        for (int j = 0; j < d; ++j) pred += D[i * d + j] * y[off + j];
        err = std::max(err, std::fabs(pred - yr[off + i]));
      }
    }
  }
  return verify_detail::report("sh-equivariance", err, 1e-9);
}

inline VerifyResult verify_cg_orthogonality(int l_max = 3) {
  double err = 0.0;
  for (int l1 = 0; l1 <= l_max; ++l1)
    for (int l2 = 0; l2 <= l_max; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= std::min(l1 + l2, l_max); ++l3) {
        auto c = real_cg(l1, l2, l3);
        int d3 = 2 * l3 + 1;
        // Rows of the coupling map are orthonormal in (m1, m2) space.
        std::vector<double> gram(static_cast<size_t>(d3 * d3), 0.0);
        int d2 = 2 * l2 + 1;
        std::vector<double> dense(static_cast<size_t>((2 * l1 + 1) * d2 * d3),
                                  0.0);
        for (const auto& e : c)
          dense[(e.m1 * d2 + e.m2) * d3 + e.m3] += e.c;
        for (int m3 = 0; m3 < d3; ++m3)
          for (int n3 = 0; n3 < d3; ++n3) {
            double s = 0.0;
            for (size_t mm = 0; mm < dense.size() / d3; ++mm)
              s += dense[mm * d3 + m3] * dense[mm * d3 + n3];
            gram[m3 * d3 + n3] = s;
          }
        // Normalization is per-l3 uniform: compare against gram[0][0].
        double diag = gram[0];
        for (int m3 = 0; m3 < d3; ++m3)
          for (int n3 = 0; n3 < d3; ++n3)
            err = std::max(err, std::fabs(gram[m3 * d3 + n3] -
                                          (m3 == n3 ? diag : 0.0)));
      }
  return verify_detail::report("cg-orthogonality", err, 1e-12);
}

inline VerifyResult verify_tensor_product_direct(int trials = 10) {
  Rng rng(16);
  IrrepsSpec in1 = IrrepsSpec::parse("3x0e+2x1o+2x2e+1x3o");
  IrrepsSpec in2 = IrrepsSpec::parse("2x0e+2x1o+1x2e");
  IrrepsSpec out = IrrepsSpec::parse("3x0e+2x1o+2x2e+1x3o");
  TensorProduct tp("verify_tp", in1, in2, out, rng);
  double err = 0.0;
  for (int t = 0; t < trials; ++t) {
    int64_t rows = 3;
    std::vector<double> x1(rows * in1.dim()), x2(rows * in2.dim());
    for (auto& v : x1) v = rng.normal();
    for (auto& v : x2) v = rng.normal();
    Tape tape;
    tape.set_grad_enabled(false);
    IrrepsTensor y = tp.apply(tape, {in1, tape.constant({rows, in1.dim()}, x1)},
                              {in2, tape.constant({rows, in2.dim()}, x2)});
    auto direct = tensor_product_direct(tp, x1, x2, rows);
    for (size_t i = 0; i < direct.size(); ++i)
      err = std::max(err, std::fabs(y.data.value()[i] - direct[i]));
  }
  return verify_detail::report("tensor-product-direct-sum", err, 1e-12);
}

inline VerifyResult verify_tensor_product_equivariance(int trials = 5) {
  Rng rng(17);
  IrrepsSpec spec = IrrepsSpec::parse("2x0e+2x1o+1x2e");
  TensorProduct tp("verify_tp_eq", spec, spec, spec, rng);
  double err = 0.0;
  // Applies the block-diagonal Wigner rotation to a feature row.
  auto rotate_feat = [&](const std::vector<double>& x, const Mat3& R) {
    std::vector<double> out(x.size(), 0.0);
    int64_t rows = static_cast<int64_t>(x.size()) / spec.dim();
    for (int64_t r = 0; r < rows; ++r) {
      int64_t off = r * spec.dim();
      int64_t pos = 0;
      for (const auto& e : spec.entries) {
        int d = e.ir.dim();
        auto D = wigner_d(e.ir.l, R);
        for (int64_t c = 0; c < e.mult; ++c) {
          for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
              s += D[i * d + j] * x[off + pos + c * d + j];
            out[off + pos + c * d + i] = s;
          }
        }
        pos += e.dim();
      }
    }
    return out;
  };
  for (int t = 0; t < trials; ++t) {
    Mat3 R = random_rotation(rng).rotation;
    std::vector<double> x1(2 * spec.dim()), x2(2 * spec.dim());
    for (auto& v : x1) v = rng.normal();
    for (auto& v : x2) v = rng.normal();
    auto eval = [&](const std::vector<double>& a, const std::vector<double>& b) {
      Tape tape;
      tape.set_grad_enabled(false);
      return tp.apply(tape, {spec, tape.constant({2, spec.dim()}, a)},
                      {spec, tape.constant({2, spec.dim()}, b)})
          .data.value();
    };
    auto y = eval(x1, x2);
    auto y_rot_in = eval(rotate_feat(x1, R), rotate_feat(x2, R));
    auto y_rot_out = rotate_feat(y, R);
    for (size_t i = 0; i < y.size(); ++i)
      err = std::max(err, std::fabs(y_rot_in[i] - y_rot_out[i]));
  }
  return verify_detail::report("tensor-product-equivariance", err, 1e-9);
}

inline VerifyResult verify_neighbor_oracle(int trials = 200) {
  Rng rng(18);
  int mismatches = 0;
  for (int t = 0; t < trials; ++t) {
    AtomicStructure s = random_structure(rng, 6, t % 2 == 0);
    double r_cut = 2.0 + 4.0 * rng.uniform();
    AtomGraph g = build_neighbor_list(s, r_cut);
    auto oracle = brute_force_neighbors(s, r_cut, 4);
    std::set<OracleEdge> mine;
    for (size_t e = 0; e < g.n_edges(); ++e)
      mine.insert({g.edge_dst[e], g.edge_src[e], g.edge_shift[e]});
    if (mine != oracle) ++mismatches;
  }
  VerifyResult r{"neighbor-oracle-equivalence", mismatches == 0,
                 std::to_string(mismatches) + "/" + std::to_string(trials) +
                     " structures mismatched"};
  return r;
}

inline VerifyResult verify_bessel_orthonormality(double r_cut = 5.0,
                                                 int n_rbf = 8) {
  // Simpson's rule on a fine grid; integrand RBF_m RBF_n x^2.
  const int n_grid = 20001;
  double h = r_cut / (n_grid - 1);
  std::vector<double> xs;
  for (int i = 1; i < n_grid; ++i) xs.push_back(i * h);
  auto vals = bessel_rbf(xs, r_cut, n_rbf);
  double err = 0.0;
  for (int m = 0; m < n_rbf; ++m)
    for (int n = m; n < n_rbf; ++n) {
      double acc = 0.0;
      for (size_t i = 0; i < xs.size(); ++i) {
        double w = (i + 1 == xs.size()) ? 1.0 : (i % 2 == 0 ? 4.0 : 2.0);
        acc += w * vals[i * n_rbf + m] * vals[i * n_rbf + n] * xs[i] * xs[i];
      }
      acc *= h / 3.0;
      err = std::max(err, std::fabs(acc - (m == n ? 1.0 : 0.0)));
    }
  // Exact zero at the cutoff, up to float roundoff of sin(m*pi).
  auto at_cut = bessel_rbf({r_cut}, r_cut, n_rbf);
  double cut_err = 0.0;
  for (double v : at_cut) cut_err = std::max(cut_err, std::fabs(v));
  VerifyResult r = verify_detail::report("bessel-orthonormality", err, 1e-3);
  if (cut_err > 1e-12) {
    r.passed = false;
    r.detail += "; nonzero at cutoff: " + std::to_string(cut_err);
  }
  return r;
}

inline VerifyResult verify_finite_diff_sanity() {
  auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  auto g = finite_diff_grad(f, {1.0, 2.0});
  double err = std::max(std::fabs(g[0] - 2.0), std::fabs(g[1] - 4.0));
  return verify_detail::report("finite-diff-sanity", err, 1e-8);
}

inline VerifyResult verify_model_equivariance(int n_structures = 5,
                                              int n_rotations = 4) {
  ModelConfig cfg;
  cfg.hidden_irreps = "4x0e+3x1o+2x2e";
  cfg.species = {1, 6, 7, 8};
  cfg.embed_dim = 4;
  cfg.mlp_hidden = 8;
  cfg.n_layers_force = 1;
  Model model(cfg);
  Rng rng(19);
  double err = 0.0;
  for (int s = 0; s < n_structures; ++s) {
    AtomicStructure base = random_structure(rng, 6, false);
    AtomGraph g = build_batch({&base}, cfg.r_cut, cfg.n_rbf);
    Tape t0;
    t0.set_grad_enabled(false);
    Model::Output o0 = model.forward(t0, g);
    for (int r = 0; r < n_rotations; ++r) {
      RigidMotion mo = random_rotation(rng, 1.5);
      AtomicStructure moved = base;
      for (auto& p : moved.positions) p = mo.apply(p);
      AtomGraph g2 = build_batch({&moved}, cfg.r_cut, cfg.n_rbf);
      Tape t1;
      t1.set_grad_enabled(false);
      Model::Output o1 = model.forward(t1, g2);
      err = std::max(err, rel_err(o0.energy.value()[0], o1.energy.value()[0]));
      for (size_t i = 0; i < base.size(); ++i) {
        Vec3 f{o0.forces.value()[3 * i], o0.forces.value()[3 * i + 1],
               o0.forces.value()[3 * i + 2]};
        Vec3 fr = mo.rotate(f);
        for (int k = 0; k < 3; ++k)
          err = std::max(err, rel_err(fr[k], o1.forces.value()[3 * i + k]));
      }
    }
  }
  return verify_detail::report("model-equivariance", err, 1e-8);
}

inline std::vector<VerifyResult> run_verification(bool full) {
  std::vector<VerifyResult> out;
  out.push_back(verify_rotation_orthonormality());
  out.push_back(verify_rotation_uniformity(full ? 10000 : 2000));
  out.push_back(verify_wigner_l1_closed_form());
  out.push_back(verify_wigner_homomorphism(full ? 4 : 3));
  out.push_back(verify_sh_equivariance(full ? 4 : 3));
  out.push_back(verify_cg_orthogonality(full ? 4 : 3));
  out.push_back(verify_tensor_product_direct());
  out.push_back(verify_tensor_product_equivariance());
  out.push_back(verify_neighbor_oracle(full ? 200 : 50));
  out.push_back(verify_bessel_orthonormality());
  out.push_back(verify_finite_diff_sanity());
  out.push_back(verify_model_equivariance(full ? 5 : 2, full ? 4 : 2));
  return out;
}

}  // namespace mlanet
