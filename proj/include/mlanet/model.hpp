#pragma once

// The network: species embedding and input lifting, stacked dual-path
// dynamic-attention message-passing layers (a trunk for energy plus an
// optional extra stack for forces), sum/mean/max pooling, and the energy,
// force, and stress heads. Forces are predicted directly by a head, not as
// an energy gradient.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlanet/equivariant.hpp"
#include "mlanet/graph.hpp"
#include "mlanet/irreps.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/spherical.hpp"
#include "mlanet/tensor.hpp"

namespace mlanet {

struct ModelConfig {
  std::string hidden_irreps = "32x0e+16x1o";
  int n_layers_energy = 1;  // l_E
  int n_layers_force = 0;   // l_F
  int n_mlp_layers = 1;     // l_MLP
  double r_cut = 5.0;
  int n_rbf = 8;
  int n_heads = 1;
  double temperature = 0.0;  // <= 0 selects sqrt(n_0e_channels / n_heads)
  bool use_long_range = false;
  bool use_charge = false;
  bool predict_stress = false;
  std::vector<int> species;  // atomic numbers the model covers
  int embed_dim = 16;
  int mlp_hidden = 64;
  uint64_t seed = 0;
  int tp_path_max_l = -1;  // optional tensor-product path filter; -1 = full

  IrrepsSpec hidden() const { return IrrepsSpec::parse(hidden_irreps); }
  int l_max() const { return hidden().max_l(); }

  void validate() const {
    IrrepsSpec h = hidden();
    if (h.channels_with(0) == 0)
      throw ConfigError("model: hidden irreps need at least one 0e entry");
    if (!h.contains(Irrep{1, -1}))
      throw ConfigError(
          "model: hidden irreps need a 1o entry for the force head");
    int last_l = -1;
    for (const auto& e : h.entries) {
      if (e.ir.l < last_l)
        throw ConfigError("model: hidden irreps must be sorted by l");
      if (e.ir.l == 0 && e.ir.parity != 1)
        throw ConfigError("model: scalar entries must be even parity");
      last_l = e.ir.l;
      if (n_heads > 1 && e.mult % n_heads != 0)
        throw ConfigError(
            "model: every multiplicity must be divisible by n_heads");
    }
    if (n_layers_energy < 1) throw ConfigError("model: l_E must be >= 1");
    if (n_layers_force < 0) throw ConfigError("model: l_F must be >= 0");
    if (n_mlp_layers < 1) throw ConfigError("model: l_MLP must be >= 1");
    if (species.empty()) throw ConfigError("model: species list is empty");
    if (r_cut <= 0) throw ConfigError("model: r_cut must be positive");
    if (n_rbf < 1) throw ConfigError("model: n_rbf must be >= 1");
  }
};

namespace detail {

// Plain dense layer on invariant scalars.
struct Dense {
  Parameter w, b;

  Dense() = default;
  Dense(const std::string& name, int64_t in, int64_t out, Rng& rng)
      : w(name + ".weight", {in, out}), b(name + ".bias", {1, out}) {
    double sigma = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.value) v = rng.normal(0.0, sigma);
  }

  DiffTensor apply(Tape& t, DiffTensor x) {
    return t.add(t.matmul(x, t.leaf(w)), t.leaf(b));
  }
};

}  // namespace detail

// Per-edge/per-node context shared across layers in one forward pass.
struct GraphTensors {
  DiffTensor rbf;        // [E, n_rbf]
  DiffTensor sh;         // [E, (l_max+1)^2]
  std::vector<int64_t> src, dst, graph_index;
  int64_t n_nodes = 0, n_graphs = 0;
};

class MessagePassingLayer {
 public:
  MessagePassingLayer() = default;

  MessagePassingLayer(const std::string& name, const ModelConfig& cfg,
                      Rng& rng)
      : hidden_(cfg.hidden()), n_heads_(cfg.n_heads) {
    IrrepsSpec sh = sh_spec(hidden_.max_l());
    // Restrict sh inputs to irreps present in hidden (a 0e-only hidden
    // would otherwise leave dangling inputs; harmless either way).
    w_q_ = EquivariantLinear(name + ".w_q", hidden_, hidden_, false, rng);
    w_k_ = EquivariantLinear(name + ".w_k", hidden_, hidden_, false, rng);
    w_v_ = EquivariantLinear(name + ".w_v", hidden_, hidden_, false, rng);
    w_edge_sh_ =
        EquivariantLinear(name + ".w_edge_sh", sh, hidden_, false, rng);
    IrrepsSpec rbf_spec{{IrrepsEntry{cfg.n_rbf, Irrep{0, 1}}}};
    IrrepsSpec hidden_0e = scalar_part(hidden_);
    w_edge_raw_ =
        EquivariantLinear(name + ".w_edge_raw", rbf_spec, hidden_0e, false,
                          rng);
    IrrepsSpec attn_out{{IrrepsEntry{cfg.n_heads, Irrep{0, 1}}}};
    IrrepsSpec beta_out{{IrrepsEntry{hidden_.n_channels(), Irrep{0, 1}}}};
    tp_attn_ = TensorProduct(name + ".tp_attn", hidden_, hidden_, attn_out,
                             rng, CGTable::instance(), cfg.tp_path_max_l);
    tp_gate_ = TensorProduct(name + ".tp_gate", hidden_, hidden_, beta_out,
                             rng, CGTable::instance(), cfg.tp_path_max_l);
    w_trans_ = EquivariantLinear(name + ".w_trans", hidden_,
                                 gate_input_spec(hidden_), true, rng);

    double tau = cfg.temperature;
    if (tau <= 0.0)
      tau = std::sqrt(static_cast<double>(hidden_.channels_with(0)) /
                      cfg.n_heads);
    inv_tau_ = 1.0 / tau;

    // Column index of the gate scalar driving each flat component
    // (l>0 channels), and per-column head assignment. In the beta tensor
    // the l>0 gate channels start after the scalar channels.
    int64_t gch = hidden_.channels_with(0);
    for (const auto& e : hidden_.entries) {
      if (e.ir.l == 0) continue;
      for (int64_t c = 0; c < e.mult; ++c, ++gch)
        for (int k = 0; k < e.ir.dim(); ++k) beta_expand_.push_back(gch);
    }
    for (const auto& e : hidden_.entries) {
      int64_t per_head = e.mult / n_heads_;
      for (int64_t c = 0; c < e.mult; ++c)
        for (int k = 0; k < e.ir.dim(); ++k)
          head_of_col_.push_back(per_head > 0 ? c / per_head : 0);
    }
  }

  // e_ij = W_edge_raw(rbf) + W_edge_sh(Y(r_hat)), as a full hidden-irreps
  // feature (the raw part lives in the 0e block).
  IrrepsTensor edge_features(Tape& t, const GraphTensors& g) {
    IrrepsSpec sh = sh_spec(hidden_.max_l());
    IrrepsTensor e_sh = w_edge_sh_.apply(t, {sh, g.sh});
    IrrepsSpec rbf_spec{{IrrepsEntry{g.rbf.cols(), Irrep{0, 1}}}};
    IrrepsTensor e_raw = w_edge_raw_.apply(t, {rbf_spec, g.rbf});
    int64_t rest = hidden_.dim() - e_raw.spec.dim();
    DiffTensor padded =
        rest > 0 ? t.concat_cols({e_raw.data,
                                  t.zeros({e_raw.data.rows(), rest})})
                 : e_raw.data;
    return {hidden_, t.add(e_sh.data, padded)};
  }

  IrrepsTensor forward(Tape& t, const GraphTensors& g, const IrrepsTensor& x) {
    const int64_t E = static_cast<int64_t>(g.src.size());
    IrrepsTensor e = edge_features(t, g);
    IrrepsTensor qx = w_q_.apply(t, x);
    IrrepsTensor kx = w_k_.apply(t, x);
    IrrepsTensor vx = w_v_.apply(t, x);
    DiffTensor q = t.add(t.index_select_rows(qx.data, g.dst), e.data);
    DiffTensor k = t.add(t.index_select_rows(kx.data, g.src), e.data);
    DiffTensor v = t.index_select_rows(vx.data, g.src);

    IrrepsTensor qt{hidden_, q}, kt{hidden_, k}, vt{hidden_, v};

    // Attention: rotation-invariant logits from the 0e tensor-product
    // outputs, softmax over incoming edges per destination node.
    DiffTensor logits = t.scale(tp_attn_.apply(t, qt, kt).data, inv_tau_);
    DiffTensor seg_max = t.segment_max_detached(logits, g.dst, g.n_nodes);
    DiffTensor shifted =
        t.sub(logits, t.index_select_rows(seg_max, g.dst));
    DiffTensor ex = t.exp(shifted);
    DiffTensor denom = t.scatter_add_rows(ex, g.dst, g.n_nodes);
    DiffTensor alpha =
        t.mul(ex, t.index_select_rows(t.reciprocal(denom), g.dst));

    // Dual path: beta gates mix neighbor values against query features.
    DiffTensor beta = t.sigmoid(tp_gate_.apply(t, qt, vt).data);
    DiffTensor beta_exp =
        beta_expand_.empty()
            ? DiffTensor{}
            : t.gather_cols(beta, beta_expand_);
    int64_t n_scalars = hidden_.channels_with(0);
    std::vector<int64_t> scalar_beta(n_scalars);
    for (int64_t i = 0; i < n_scalars; ++i) scalar_beta[i] = i;
    DiffTensor beta_full;
    if (beta_expand_.empty()) {
      beta_full = t.gather_cols(beta, scalar_beta);
    } else {
      beta_full = t.concat_cols(
          {t.gather_cols(beta, scalar_beta), beta_exp});
    }
    DiffTensor m_edge =
        t.add(t.mul(v, beta_full), t.sub(q, t.mul(q, beta_full)));

    DiffTensor alpha_cols = t.gather_cols(alpha, head_of_col_);
    DiffTensor weighted = t.mul(m_edge, alpha_cols);
    DiffTensor m_node = t.scatter_add_rows(weighted, g.dst, g.n_nodes);
    (void)E;

    IrrepsTensor pre = w_trans_.apply(t, {hidden_, m_node});
    IrrepsTensor gated = gate(t, pre, hidden_);
    return {hidden_, t.add(gated.data, x.data)};
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p;
    for (auto* l : {&w_q_, &w_k_, &w_v_, &w_edge_sh_, &w_edge_raw_, &w_trans_})
      for (auto* q : l->parameters()) p.push_back(q);
    for (auto* q : tp_attn_.parameters()) p.push_back(q);
    for (auto* q : tp_gate_.parameters()) p.push_back(q);
    return p;
  }

 private:
  static IrrepsSpec scalar_part(const IrrepsSpec& s) {
    IrrepsSpec out;
    for (const auto& e : s.entries)
      if (e.ir.l == 0) out.entries.push_back(e);
    return out;
  }

  IrrepsSpec hidden_;
  int n_heads_ = 1;
  double inv_tau_ = 1.0;
  EquivariantLinear w_q_, w_k_, w_v_, w_edge_sh_, w_edge_raw_, w_trans_;
  TensorProduct tp_attn_, tp_gate_;
  std::vector<int64_t> beta_expand_;   // gate channel per l>0 component col
  std::vector<int64_t> head_of_col_;   // head per flat feature column
};

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    hidden_ = cfg_.hidden();
    Rng rng(cfg_.seed);

    for (size_t i = 0; i < cfg_.species.size(); ++i)
      species_index_[cfg_.species[i]] = static_cast<int64_t>(i);

    embed_ = Parameter("embedding", {static_cast<int64_t>(cfg_.species.size()),
                                     cfg_.embed_dim});
    for (auto& v : embed_.value) v = rng.normal();

    int64_t in_scalars = cfg_.embed_dim + (cfg_.use_long_range ? 1 : 0) +
                         (cfg_.use_charge ? 1 : 0);
    IrrepsSpec in_spec{{IrrepsEntry{in_scalars, Irrep{0, 1}}}};
    IrrepsSpec hidden_0e;
    for (const auto& e : hidden_.entries)
      if (e.ir.l == 0) hidden_0e.entries.push_back(e);
    lift_ = EquivariantLinear("lift", in_spec, hidden_0e, true, rng);

    for (int i = 0; i < cfg_.n_layers_energy; ++i)
      trunk_.emplace_back("energy_layer" + std::to_string(i), cfg_, rng);
    for (int i = 0; i < cfg_.n_layers_force; ++i)
      force_stack_.emplace_back("force_layer" + std::to_string(i), cfg_, rng);

    // Invariant pooled width: 0e part of v_add and v_mean, plus max-pooled
    // scalars and max-pooled l>0 channel norms.
    int64_t n0 = hidden_.channels_with(0);
    int64_t nl = hidden_.channels_with(-1);
    pooled_inv_dim_ = 2 * n0 + n0 + nl;

    // Energy head MLP.
    int64_t w = cfg_.mlp_hidden;
    int64_t in = pooled_inv_dim_;
    for (int i = 0; i < cfg_.n_mlp_layers; ++i) {
      energy_mlp_.emplace_back("energy_head" + std::to_string(i), in, w, rng);
      in = w;
    }
    energy_out_ = detail::Dense("energy_head_out", in, 1, rng);

    if (cfg_.predict_stress) {
      in = pooled_inv_dim_;
      for (int i = 0; i < cfg_.n_mlp_layers; ++i) {
        stress_mlp_.emplace_back("stress_head" + std::to_string(i), in, w,
                                 rng);
        in = w;
      }
      stress_out_ = detail::Dense("stress_head_out", in, 6, rng);
    }

    // Force head: gated equivariant layers over node features concatenated
    // with the pooled invariants, ending in a single 1o output.
    IrrepsSpec force_in;
    for (const auto& e : hidden_.entries)
      if (e.ir.l == 0) force_in.entries.push_back(e);
    force_in.entries.push_back({pooled_inv_dim_, Irrep{0, 1}});
    for (const auto& e : hidden_.entries)
      if (e.ir.l > 0) force_in.entries.push_back(e);
    IrrepsSpec cur = force_in;
    for (int i = 0; i < cfg_.n_mlp_layers; ++i) {
      force_mlp_.emplace_back("force_head" + std::to_string(i), cur,
                              gate_input_spec(hidden_), true, rng);
      cur = gate_output_spec(hidden_);
    }
    force_out_ = EquivariantLinear(
        "force_head_out", cur, IrrepsSpec{{IrrepsEntry{1, Irrep{1, -1}}}},
        false, rng);

    collect_parameters();
  }

  // Parameter pointers reference members; the model is pinned in place.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  struct Output {
    DiffTensor energy;                  // [G, 1] eV
    DiffTensor forces;                  // [N, 3] eV/A
    std::optional<DiffTensor> stress;   // [G, 6] Voigt
    DiffTensor trunk_features;          // [N, hidden dim], for diagnostics
  };

  Output forward(Tape& t, const AtomGraph& g) {
    GraphTensors gt = graph_tensors(t, g);

    // Input lifting: species embedding (+ optional extra scalar channels)
    // into the hidden 0e block; l>0 channels start at zero.
    std::vector<int64_t> rows;
    rows.reserve(g.n_nodes());
    for (int z : g.node_species) {
      auto it = species_index_.find(z);
      if (it == species_index_.end())
        throw DataError("model: unknown species z=" + std::to_string(z));
      rows.push_back(it->second);
    }
    DiffTensor table = t.leaf(embed_);
    DiffTensor scalars = t.index_select_rows(table, rows);
    std::vector<DiffTensor> in_parts{scalars};
    if (cfg_.use_long_range)
      in_parts.push_back(t.constant(
          {static_cast<int64_t>(g.n_nodes()), 1},
          g.node_long_range.empty()
              ? std::vector<double>(g.n_nodes(), 0.0)
              : g.node_long_range));
    if (cfg_.use_charge)
      in_parts.push_back(t.constant(
          {static_cast<int64_t>(g.n_nodes()), 1},
          g.node_charge.empty() ? std::vector<double>(g.n_nodes(), 0.0)
                                : g.node_charge));
    DiffTensor in_data =
        in_parts.size() > 1 ? t.concat_cols(in_parts) : in_parts[0];
    IrrepsSpec in_spec{{IrrepsEntry{in_data.cols(), Irrep{0, 1}}}};
    IrrepsTensor lifted = lift_.apply(t, {in_spec, in_data});
    int64_t rest = hidden_.dim() - lifted.spec.dim();
    DiffTensor x0 =
        rest > 0
            ? t.concat_cols({lifted.data,
                             t.zeros({lifted.data.rows(), rest})})
            : lifted.data;
    IrrepsTensor x{hidden_, x0};

    for (auto& layer : trunk_) x = layer.forward(t, gt, x);
    IrrepsTensor x_energy = x;
    for (auto& layer : force_stack_) x = layer.forward(t, gt, x);
    IrrepsTensor x_force = x;

    // Multi-perspective pooling on the trunk output.
    DiffTensor pooled_inv = pool_invariants(t, gt, x_energy);

    // Energy head + per-species reference shift.
    DiffTensor h = pooled_inv;
    for (auto& d : energy_mlp_) h = t.silu(d.apply(t, h));
    DiffTensor energy = energy_out_.apply(t, h);
    energy = t.add(energy, reference_shift(t, g));

    // Force head.
    DiffTensor pooled_per_node = t.index_select_rows(pooled_inv, gt.graph_index);
    DiffTensor f_in = assemble_force_input(t, x_force, pooled_per_node);
    IrrepsSpec cur_spec = force_in_spec();
    IrrepsTensor f{cur_spec, f_in};
    for (auto& layer : force_mlp_) {
      IrrepsTensor pre = layer.apply(t, f);
      f = gate(t, pre, hidden_);
    }
    IrrepsTensor f1o = force_out_.apply(t, f);
    // 1o components are ordered (y, z, x); emit Cartesian (x, y, z).
    DiffTensor forces = t.gather_cols(f1o.data, {2, 0, 1});

    Output out{energy, forces, std::nullopt, x_energy.data};
    if (cfg_.predict_stress) {
      DiffTensor hs = pooled_inv;
      for (auto& d : stress_mlp_) hs = t.silu(d.apply(t, hs));
      out.stress = stress_out_.apply(t, hs);
    }
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  const IrrepsSpec& hidden() const { return hidden_; }
  std::vector<Parameter*>& parameters() { return params_; }
  std::map<int, double>& reference_energies() { return e0_; }
  const std::map<int, double>& reference_energies() const { return e0_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto* p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

 private:
  GraphTensors graph_tensors(Tape& t, const AtomGraph& g) const {
    GraphTensors gt;
    const int64_t E = static_cast<int64_t>(g.n_edges());
    if (g.n_rbf != cfg_.n_rbf)
      throw ConfigError("model: graph was built with a different n_rbf");
    gt.rbf = t.constant({E, cfg_.n_rbf}, g.edge_rbf);
    std::vector<double> dirs(3 * E);
    for (int64_t e = 0; e < E; ++e)
      for (int k = 0; k < 3; ++k)
        dirs[3 * e + k] = g.edge_vec[e][k] / g.edge_len[e];
    int lm = hidden_.max_l();
    gt.sh = t.constant({E, (lm + 1) * (lm + 1)}, sh_batch(lm, dirs));
    gt.src = g.edge_src;
    gt.dst = g.edge_dst;
    gt.graph_index = g.graph_index;
    gt.n_nodes = static_cast<int64_t>(g.n_nodes());
    gt.n_graphs = static_cast<int64_t>(g.n_graphs());
    return gt;
  }

  DiffTensor pool_invariants(Tape& t, const GraphTensors& gt,
                             const IrrepsTensor& x) {
    for (int64_t c : gt.graph_index)
      if (c < 0 || c >= gt.n_graphs)
        throw ContractError("pooling: bad graph index");
    DiffTensor v_add = t.scatter_add_rows(x.data, gt.graph_index, gt.n_graphs);
    std::vector<double> inv_count(gt.n_graphs, 0.0);
    for (int64_t b : gt.graph_index) inv_count[b] += 1.0;
    for (auto& v : inv_count) {
      if (v == 0.0) throw ContractError("pooling: empty graph in batch");
      v = 1.0 / v;
    }
    DiffTensor v_mean =
        t.mul(v_add, t.constant({gt.n_graphs, 1}, inv_count));

    std::vector<int64_t> s_cols = hidden_.scalar_cols();
    DiffTensor max_s = t.scatter_max_rows(t.gather_cols(x.data, s_cols),
                                          gt.graph_index, gt.n_graphs);

    std::vector<DiffTensor> parts{t.gather_cols(v_add, s_cols),
                                  t.gather_cols(v_mean, s_cols), max_s};
    int64_t nl = hidden_.channels_with(-1);
    if (nl > 0) {
      // Elementwise max over l>0 channels is not rotation-covariant, so the
      // max slot carries per-channel norms instead.
      DiffTensor sq = t.mul(x.data, x.data);
      std::vector<double> msel(static_cast<size_t>(hidden_.dim() * nl), 0.0);
      int64_t ch = 0;
      int64_t off = 0;
      for (const auto& e : hidden_.entries) {
        if (e.ir.l > 0)
          for (int64_t c = 0; c < e.mult; ++c, ++ch)
            for (int k = 0; k < e.ir.dim(); ++k)
              msel[(off + c * e.ir.dim() + k) * nl + ch] = 1.0;
        off += e.dim();
      }
      DiffTensor norms = t.sqrt_eps(
          t.matmul(sq, t.constant({hidden_.dim(), nl}, std::move(msel))));
      parts.push_back(t.scatter_max_rows(norms, gt.graph_index, gt.n_graphs));
    }
    return t.concat_cols(parts);
  }

  IrrepsSpec force_in_spec() const {
    IrrepsSpec s;
    for (const auto& e : hidden_.entries)
      if (e.ir.l == 0) s.entries.push_back(e);
    s.entries.push_back({pooled_inv_dim_, Irrep{0, 1}});
    for (const auto& e : hidden_.entries)
      if (e.ir.l > 0) s.entries.push_back(e);
    return s;
  }

  DiffTensor assemble_force_input(Tape& t, const IrrepsTensor& x,
                                  DiffTensor pooled_per_node) {
    std::vector<int64_t> s_cols = hidden_.scalar_cols();
    std::vector<int64_t> n_cols;
    for (int64_t c = static_cast<int64_t>(s_cols.size()); c < hidden_.dim();
         ++c)
      n_cols.push_back(c);
    std::vector<DiffTensor> parts{t.gather_cols(x.data, s_cols),
                                  pooled_per_node};
    if (!n_cols.empty()) parts.push_back(t.gather_cols(x.data, n_cols));
    return t.concat_cols(parts);
  }

  DiffTensor reference_shift(Tape& t, const AtomGraph& g) const {
    std::vector<double> shift(g.n_graphs(), 0.0);
    for (size_t i = 0; i < g.n_nodes(); ++i) {
      auto it = e0_.find(g.node_species[i]);
      if (it != e0_.end()) shift[g.graph_index[i]] += it->second;
    }
    return t.constant({static_cast<int64_t>(g.n_graphs()), 1},
                      std::move(shift));
  }

  void collect_parameters() {
    params_.clear();
    params_.push_back(&embed_);
    for (auto* p : lift_.parameters()) params_.push_back(p);
    for (auto& l : trunk_)
      for (auto* p : l.parameters()) params_.push_back(p);
    for (auto& l : force_stack_)
      for (auto* p : l.parameters()) params_.push_back(p);
    for (auto& d : energy_mlp_) {
      params_.push_back(&d.w);
      params_.push_back(&d.b);
    }
    params_.push_back(&energy_out_.w);
    params_.push_back(&energy_out_.b);
    for (auto& l : force_mlp_)
      for (auto* p : l.parameters()) params_.push_back(p);
    for (auto* p : force_out_.parameters()) params_.push_back(p);
    for (auto& d : stress_mlp_) {
      params_.push_back(&d.w);
      params_.push_back(&d.b);
    }
    if (cfg_.predict_stress) {
      params_.push_back(&stress_out_.w);
      params_.push_back(&stress_out_.b);
    }
  }

  ModelConfig cfg_;
  IrrepsSpec hidden_;
  std::map<int, int64_t> species_index_;
  std::map<int, double> e0_;
  int64_t pooled_inv_dim_ = 0;

  Parameter embed_;
  EquivariantLinear lift_;
  std::vector<MessagePassingLayer> trunk_, force_stack_;
  std::vector<detail::Dense> energy_mlp_, stress_mlp_;
  detail::Dense energy_out_, stress_out_;
  std::vector<EquivariantLinear> force_mlp_;
  EquivariantLinear force_out_;
  std::vector<Parameter*> params_;
};

}  // namespace mlanet
