#pragma once

// Equivariant building blocks over irreps-typed features: block-diagonal
// linear maps, the weighted Clebsch-Gordan tensor product, and the gate
// nonlinearity. All ops commute with rotations by construction; the tests
// assert it against a Wigner-D oracle.

#include <memory>
#include <string>
#include <vector>

#include "mlanet/cg.hpp"
#include "mlanet/errors.hpp"
#include "mlanet/irreps.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/tensor.hpp"

namespace mlanet {

struct IrrepsTensor {
  IrrepsSpec spec;
  DiffTensor data;  // [rows, spec.dim()]
};

// Block-diagonal linear map: mixes multiplicities within matching
// (l, parity) blocks, never across l or parity. Optional bias on l=0
// output blocks only.
class EquivariantLinear {
 public:
  EquivariantLinear() = default;

  EquivariantLinear(const std::string& name, IrrepsSpec in, IrrepsSpec out,
                    bool bias, Rng& rng)
      : in_(std::move(in)), out_(std::move(out)), has_bias_(bias) {
    // Weight layout: per (out entry, matching in entry), mult_in*mult_out
    // scalars, in spec order.
    int64_t n_weights = 0;
    auto placements = std::make_shared<std::vector<Tape::SparsePlacement>>();
    std::vector<double> init;
    int64_t out_dim = out_.dim();
    for (size_t oe = 0; oe < out_.entries.size(); ++oe) {
      const auto& o = out_.entries[oe];
      int64_t fan_in = 0;
      for (const auto& i : in_.entries)
        if (i.ir == o.ir) fan_in += i.mult;
      if (fan_in == 0)
        throw ConfigError("equivariant linear \"" + name + "\": output irrep " +
                          o.ir.str() + " absent from input " + in_.str());
      double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
      int d = o.ir.dim();
      int64_t out_off = out_.offset(oe);
      for (size_t ie = 0; ie < in_.entries.size(); ++ie) {
        const auto& i = in_.entries[ie];
        if (!(i.ir == o.ir)) continue;
        int64_t in_off = in_.offset(ie);
        for (int64_t ci = 0; ci < i.mult; ++ci)
          for (int64_t co = 0; co < o.mult; ++co) {
            int64_t widx = n_weights++;
            init.push_back(rng.normal(0.0, sigma));
            for (int m = 0; m < d; ++m)
              placements->push_back(
                  {(in_off + ci * d + m) * out_dim + (out_off + co * d + m),
                   widx, 1.0});
          }
      }
    }
    placements_ = placements;
    weight_ = Parameter(name + ".weight", {n_weights});
    weight_.value = std::move(init);
    weight_.grad.assign(weight_.value.size(), 0.0);

    if (has_bias_) {
      auto bias_pl = std::make_shared<std::vector<Tape::SparsePlacement>>();
      int64_t nb = 0;
      for (size_t oe = 0; oe < out_.entries.size(); ++oe) {
        const auto& o = out_.entries[oe];
        if (o.ir.l != 0) continue;
        int64_t out_off = out_.offset(oe);
        for (int64_t co = 0; co < o.mult; ++co)
          bias_pl->push_back({out_off + co, nb++, 1.0});
      }
      bias_placements_ = bias_pl;
      bias_ = Parameter(name + ".bias", {nb});
    }
  }

  IrrepsTensor apply(Tape& tape, const IrrepsTensor& x) {
    if (!(x.spec == in_))
      throw ConfigError("equivariant linear: input spec " + x.spec.str() +
                        " does not match " + in_.str());
    DiffTensor w = tape.leaf(weight_);
    DiffTensor wexp = tape.expand_sparse(w, {in_.dim(), out_.dim()},
                                         placements_);
    DiffTensor y = tape.matmul(x.data, wexp);
    if (has_bias_ && bias_.size() > 0) {
      DiffTensor b = tape.leaf(bias_);
      DiffTensor bexp = tape.expand_sparse(b, {1, out_.dim()},
                                           bias_placements_);
      y = tape.add(y, bexp);
    }
    return {out_, y};
  }

  const IrrepsSpec& in_spec() const { return in_; }
  const IrrepsSpec& out_spec() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p{&weight_};
    if (has_bias_ && bias_.size() > 0) p.push_back(&bias_);
    return p;
  }

 private:
  IrrepsSpec in_, out_;
  bool has_bias_ = false;
  Parameter weight_, bias_;
  std::shared_ptr<const std::vector<Tape::SparsePlacement>> placements_;
  std::shared_ptr<const std::vector<Tape::SparsePlacement>> bias_placements_;
};

// Weighted Clebsch-Gordan tensor product. Channels of each input entry are
// summed before coupling; every output entry carries one learnable scalar
// per (path, output channel). Each path contribution is divided by
// sqrt(n_paths(out entry) * mult_a * mult_b).
class TensorProduct {
 public:
  TensorProduct() = default;

  // path_max_l, when >= 0, drops coupling paths whose inputs exceed that
  // rotation order.
  TensorProduct(const std::string& name, IrrepsSpec in1, IrrepsSpec in2,
                IrrepsSpec out, Rng& rng,
                const CGTable& cg = CGTable::instance(), int path_max_l = -1)
      : in1_(std::move(in1)), in2_(std::move(in2)), out_(std::move(out)) {
    int64_t n_weights = 0;
    for (size_t oe = 0; oe < out_.entries.size(); ++oe) {
      const auto& o = out_.entries[oe];
      std::vector<Path> paths;
      for (size_t a = 0; a < in1_.entries.size(); ++a)
        for (size_t b = 0; b < in2_.entries.size(); ++b) {
          const auto& ea = in1_.entries[a];
          const auto& eb = in2_.entries[b];
          if (ea.ir.parity * eb.ir.parity != o.ir.parity) continue;
          if (!cg.allowed(ea.ir.l, eb.ir.l, o.ir.l)) continue;
          if (path_max_l >= 0 &&
              (ea.ir.l > path_max_l || eb.ir.l > path_max_l))
            continue;
          paths.push_back(Path{a, b, cg.get(ea.ir.l, eb.ir.l, o.ir.l)});
        }
      if (paths.empty())
        throw ConfigError("tensor product \"" + name + "\": output irrep " +
                          o.ir.str() + " unreachable from " + in1_.str() +
                          " x " + in2_.str());
      for (auto& p : paths) {
        p.norm = 1.0 / std::sqrt(static_cast<double>(
                           paths.size() * in1_.entries[p.a].mult *
                           in2_.entries[p.b].mult));
        p.w_offset = n_weights;
        n_weights += o.mult;
      }
      out_paths_.push_back(std::move(paths));
    }
    weight_ = Parameter(name + ".weight", {n_weights});
    for (auto& v : weight_.value) v = rng.normal();
  }

  IrrepsTensor apply(Tape& tape, const IrrepsTensor& x1,
                     const IrrepsTensor& x2) {
    if (!(x1.spec == in1_) || !(x2.spec == in2_))
      throw ConfigError("tensor product: input specs do not match");
    DiffTensor w = tape.leaf(weight_);
    // Channel sums per input entry.
    std::vector<DiffTensor> sum1 = entry_sums(tape, x1, in1_);
    std::vector<DiffTensor> sum2 = entry_sums(tape, x2, in2_);

    std::vector<DiffTensor> blocks;
    for (size_t oe = 0; oe < out_.entries.size(); ++oe) {
      const auto& o = out_.entries[oe];
      const auto& paths = out_paths_[oe];
      int d3 = o.ir.dim();
      std::vector<DiffTensor> contributions;
      for (const auto& p : paths)
        contributions.push_back(
            tape.cg_contract(sum1[p.a], sum2[p.b], d3, p.coeffs));
      DiffTensor stacked = tape.concat_cols(contributions);
      // Expanded weight: ((path,m3) -> (co,m3)) scaled by the path norm.
      auto placements = std::make_shared<std::vector<Tape::SparsePlacement>>();
      int64_t out_cols = o.mult * d3;
      for (size_t pi = 0; pi < paths.size(); ++pi)
        for (int64_t co = 0; co < o.mult; ++co)
          for (int m = 0; m < d3; ++m)
            placements->push_back(
                {(static_cast<int64_t>(pi) * d3 + m) * out_cols +
                     (co * d3 + m),
                 paths[pi].w_offset + co, paths[pi].norm});
      DiffTensor wexp = tape.expand_sparse(
          w, {static_cast<int64_t>(paths.size()) * d3, out_cols}, placements);
      blocks.push_back(tape.matmul(stacked, wexp));
    }
    return {out_, tape.concat_cols(blocks)};
  }

  struct Path {
    size_t a, b;
    std::shared_ptr<const CgCoeffs> coeffs;
    double norm = 1.0;
    int64_t w_offset = 0;
  };

  const IrrepsSpec& in1_spec() const { return in1_; }
  const IrrepsSpec& in2_spec() const { return in2_; }
  const IrrepsSpec& out_spec() const { return out_; }
  // Coupling paths per output entry; lets tests re-evaluate the product by
  // direct summation.
  const std::vector<std::vector<Path>>& paths() const { return out_paths_; }
  Parameter& weight() { return weight_; }
  std::vector<Parameter*> parameters() { return {&weight_}; }

 private:

  static std::vector<DiffTensor> entry_sums(Tape& tape, const IrrepsTensor& x,
                                            const IrrepsSpec& spec) {
    std::vector<DiffTensor> sums;
    int64_t dim = spec.dim();
    for (size_t e = 0; e < spec.entries.size(); ++e) {
      const auto& entry = spec.entries[e];
      int d = entry.ir.dim();
      int64_t off = spec.offset(e);
      // 0/1 matrix summing channels: [dim, d].
      std::vector<double> m(static_cast<size_t>(dim * d), 0.0);
      for (int64_t c = 0; c < entry.mult; ++c)
        for (int k = 0; k < d; ++k) m[(off + c * d + k) * d + k] = 1.0;
      DiffTensor msum = tape.constant({dim, d}, std::move(m));
      sums.push_back(tape.matmul(x.data, msum));
    }
    return sums;
  }

  IrrepsSpec in1_, in2_, out_;
  std::vector<std::vector<Path>> out_paths_;
  Parameter weight_;
};

// Spec of the gate input expected by gate(): the l=0 entries of `base`,
// one extra 0e channel per l>0 channel, then the l>0 entries.
inline IrrepsSpec gate_input_spec(const IrrepsSpec& base) {
  IrrepsSpec in;
  for (const auto& e : base.entries)
    if (e.ir.l == 0) in.entries.push_back(e);
  int64_t n_gates = base.channels_with(-1);
  if (n_gates > 0) in.entries.push_back({n_gates, Irrep{0, 1}});
  for (const auto& e : base.entries)
    if (e.ir.l > 0) in.entries.push_back(e);
  return in;
}

inline IrrepsSpec gate_output_spec(const IrrepsSpec& base) {
  IrrepsSpec out;
  for (const auto& e : base.entries)
    if (e.ir.l == 0) out.entries.push_back(e);
  for (const auto& e : base.entries)
    if (e.ir.l > 0) out.entries.push_back(e);
  return out;
}

// Gate nonlinearity: scalars pass through SiLU; each l>0 channel is scaled
// componentwise by SiLU of its dedicated gate scalar.
inline IrrepsTensor gate(Tape& tape, const IrrepsTensor& x,
                         const IrrepsSpec& base) {
  IrrepsSpec expect = gate_input_spec(base);
  if (!(x.spec == expect))
    throw ConfigError("gate: input spec " + x.spec.str() +
                      " does not match expected " + expect.str());
  int64_t n_scalars = 0;
  for (const auto& e : base.entries)
    if (e.ir.l == 0) n_scalars += e.mult;
  int64_t n_gates = base.channels_with(-1);
  int64_t rest = x.spec.dim() - n_scalars - n_gates;

  std::vector<int64_t> s_idx(n_scalars), g_idx(n_gates), n_idx(rest);
  for (int64_t i = 0; i < n_scalars; ++i) s_idx[i] = i;
  for (int64_t i = 0; i < n_gates; ++i) g_idx[i] = n_scalars + i;
  for (int64_t i = 0; i < rest; ++i) n_idx[i] = n_scalars + n_gates + i;

  std::vector<DiffTensor> parts;
  if (n_scalars > 0)
    parts.push_back(tape.silu(tape.gather_cols(x.data, s_idx)));
  if (n_gates > 0) {
    DiffTensor g = tape.silu(tape.gather_cols(x.data, g_idx));
    // Broadcast each gate over its channel's 2l+1 components.
    std::vector<int64_t> expand;
    int64_t gch = 0;
    for (const auto& e : base.entries) {
      if (e.ir.l == 0) continue;
      for (int64_t c = 0; c < e.mult; ++c, ++gch)
        for (int k = 0; k < e.ir.dim(); ++k) expand.push_back(gch);
    }
    DiffTensor gexp = tape.gather_cols(g, expand);
    DiffTensor n = tape.gather_cols(x.data, n_idx);
    parts.push_back(tape.mul(n, gexp));
  }
  return {gate_output_spec(base), tape.concat_cols(parts)};
}

}  // namespace mlanet
