#pragma once

// Dense 64-bit tensors with a reverse-mode autodiff tape. The tape is
// rebuilt for every forward pass; parameters are persistent objects that
// get placed on a tape as leaves and receive accumulated gradients after
// backward().

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mlanet/errors.hpp"

namespace mlanet {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Persistent learnable weight. Lives outside any tape.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s)
      : name(std::move(n)), shape(std::move(s)) {
    value.assign(static_cast<size_t>(numel(shape)), 0.0);
    grad.assign(value.size(), 0.0);
  }
  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct DiffTensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  int64_t rows() const { return shape().at(0); }
  int64_t cols() const { return shape().size() > 1 ? shape().at(1) : 1; }
  const std::vector<double>& value() const;
  bool requires_grad() const;
  const std::vector<double>& grad() const;
  double item() const;
};

class Tape {
  struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily during backward
    std::function<void(Tape&, int)> backprop;  // may be empty (leaf/constant)
  };

 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When disabled, ops still compute values but record no backward rules
  // and mark nothing as differentiable (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  size_t size() const { return nodes_.size(); }

  const Shape& shape(int id) const { return nodes_.at(id).shape; }
  std::vector<double>& value(int id) { return nodes_.at(id).value; }
  const std::vector<double>& value(int id) const { return nodes_.at(id).value; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  std::vector<double>& grad(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  DiffTensor constant(Shape shape, std::vector<double> data) {
    if (static_cast<int64_t>(data.size()) != numel(shape))
      throw DimensionError("constant: data length " +
                           std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    return push(std::move(shape), std::move(data), false, {});
  }

  DiffTensor zeros(Shape shape) {
    std::vector<double> d(static_cast<size_t>(numel(shape)), 0.0);
    return push(std::move(shape), std::move(d), false, {});
  }

  DiffTensor scalar(double v) { return constant({1}, {v}); }

  // Places a parameter as a differentiable leaf. Its gradient is
  // accumulated into p.grad by backward().
  DiffTensor leaf(Parameter& p) {
    DiffTensor t = push(p.shape, p.value, grad_enabled_, {});
    if (grad_enabled_) leaves_.emplace_back(&p, t.id);
    return t;
  }

  // ---- elementwise ----

  DiffTensor add(DiffTensor a, DiffTensor b) {
    check(a);
    check(b);
    const Shape& sa = shape(a.id);
    const Shape& sb = shape(b.id);
    const auto& va = value(a.id);
    const auto& vb = value(b.id);
    enum class Mode { Same, RowVec, Scalar } mode;
    if (sa == sb) {
      mode = Mode::Same;
    } else if (numel(sb) == 1) {
      mode = Mode::Scalar;
    } else if (sa.size() == 2 && sb.size() == 2 && sb[0] == 1 &&
               sb[1] == sa[1]) {
      mode = Mode::RowVec;
    } else {
      throw DimensionError("add: incompatible shapes " + shape_str(sa) +
                           " and " + shape_str(sb));
    }
    std::vector<double> out(va.size());
    switch (mode) {
      case Mode::Same:
        for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
        break;
      case Mode::Scalar:
        for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[0];
        break;
      case Mode::RowVec: {
        int64_t r = sa[0], c = sa[1];
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j)
            out[i * c + j] = va[i * c + j] + vb[j];
        break;
      }
    }
    return record(sa, std::move(out), {a.id, b.id},
                  [mode](Tape& t, int self) {
                    auto [a0, b0] = t.inputs2(self);
                    const auto& g = t.grad(self);
                    if (t.requires_grad(a0)) {
                      auto& ga = t.grad(a0);
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (t.requires_grad(b0)) {
                      auto& gb = t.grad(b0);
                      if (mode == Mode::Same) {
                        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                      } else if (mode == Mode::Scalar) {
                        for (size_t i = 0; i < g.size(); ++i) gb[0] += g[i];
                      } else {
                        int64_t r = t.shape(self)[0], c = t.shape(self)[1];
                        for (int64_t i = 0; i < r; ++i)
                          for (int64_t j = 0; j < c; ++j)
                            gb[j] += g[i * c + j];
                      }
                    }
                  });
  }

  DiffTensor sub(DiffTensor a, DiffTensor b) { return add(a, scale(b, -1.0)); }

  DiffTensor mul(DiffTensor a, DiffTensor b) {
    check(a);
    check(b);
    const Shape& sa = shape(a.id);
    const Shape& sb = shape(b.id);
    const auto& va = value(a.id);
    const auto& vb = value(b.id);
    enum class Mode { Same, ColVec, Scalar } mode;
    if (sa == sb) {
      mode = Mode::Same;
    } else if (numel(sb) == 1) {
      mode = Mode::Scalar;
    } else if (sa.size() == 2 && sb.size() == 2 && sb[0] == sa[0] &&
               sb[1] == 1) {
      mode = Mode::ColVec;
    } else {
      throw DimensionError("mul: incompatible shapes " + shape_str(sa) +
                           " and " + shape_str(sb));
    }
    std::vector<double> out(va.size());
    int64_t r = sa.empty() ? 1 : sa[0];
    int64_t c = sa.size() > 1 ? sa[1] : (numel(sa) / std::max<int64_t>(r, 1));
    switch (mode) {
      case Mode::Same:
        for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
        break;
      case Mode::Scalar:
        for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[0];
        break;
      case Mode::ColVec:
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j)
            out[i * c + j] = va[i * c + j] * vb[i];
        break;
    }
    return record(sa, std::move(out), {a.id, b.id},
                  [mode, r, c](Tape& t, int self) {
                    auto [a0, b0] = t.inputs2(self);
                    const auto& g = t.grad(self);
                    const auto& va = t.value(a0);
                    const auto& vb = t.value(b0);
                    if (t.requires_grad(a0)) {
                      auto& ga = t.grad(a0);
                      if (mode == Mode::Same) {
                        for (size_t i = 0; i < g.size(); ++i)
                          ga[i] += g[i] * vb[i];
                      } else if (mode == Mode::Scalar) {
                        for (size_t i = 0; i < g.size(); ++i)
                          ga[i] += g[i] * vb[0];
                      } else {
                        for (int64_t i = 0; i < r; ++i)
                          for (int64_t j = 0; j < c; ++j)
                            ga[i * c + j] += g[i * c + j] * vb[i];
                      }
                    }
                    if (t.requires_grad(b0)) {
                      auto& gb = t.grad(b0);
                      if (mode == Mode::Same) {
                        for (size_t i = 0; i < g.size(); ++i)
                          gb[i] += g[i] * va[i];
                      } else if (mode == Mode::Scalar) {
                        for (size_t i = 0; i < g.size(); ++i)
                          gb[0] += g[i] * va[i];
                      } else {
                        for (int64_t i = 0; i < r; ++i)
                          for (int64_t j = 0; j < c; ++j)
                            gb[i] += g[i * c + j] * va[i * c + j];
                      }
                    }
                  });
  }

  DiffTensor scale(DiffTensor a, double s) {
    check(a);
    const auto& va = value(a.id);
    std::vector<double> out(va.size());
    for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * s;
    return record(shape(a.id), std::move(out), {a.id},
                  [s](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                  });
  }

  DiffTensor sigmoid(DiffTensor a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double x, double y) { return y * (1.0 - y); });
  }

  DiffTensor silu(DiffTensor a) {
    return unary(a,
                 [](double x) { return x / (1.0 + std::exp(-x)); },
                 [](double x, double) {
                   double s = 1.0 / (1.0 + std::exp(-x));
                   return s * (1.0 + x * (1.0 - s));
                 });
  }

  DiffTensor exp(DiffTensor a) {
    return unary(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
  }

  DiffTensor reciprocal(DiffTensor a) {
    return unary(a, [](double x) { return 1.0 / x; },
                 [](double, double y) { return -y * y; });
  }

  DiffTensor abs(DiffTensor a) {
    return unary(a, [](double x) { return std::fabs(x); },
                 [](double x, double) {
                   return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                 });
  }

  // sqrt(x + eps); the offset keeps the derivative finite at x = 0.
  DiffTensor sqrt_eps(DiffTensor a, double eps = 1e-12) {
    return unary(a, [eps](double x) { return std::sqrt(x + eps); },
                 [](double, double y) { return 0.5 / y; });
  }

  // ---- matmul / reductions ----

  DiffTensor matmul(DiffTensor a, DiffTensor b) {
    check(a);
    check(b);
    const Shape& sa = shape(a.id);
    const Shape& sb = shape(b.id);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw DimensionError("matmul: shapes " + shape_str(sa) + " and " +
                           shape_str(sb) + " do not chain");
    int64_t m = sa[0], k = sa[1], n = sb[1];
    const auto& va = value(a.id);
    const auto& vb = value(b.id);
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        double aip = va[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &vb[p * n];
        double* orow = &out[i * n];
        for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
    return record({m, n}, std::move(out), {a.id, b.id},
                  [m, k, n](Tape& t, int self) {
                    auto [a0, b0] = t.inputs2(self);
                    const auto& g = t.grad(self);
                    const auto& va = t.value(a0);
                    const auto& vb = t.value(b0);
                    if (t.requires_grad(a0)) {
                      auto& ga = t.grad(a0);  // dA = G * B^T
                      for (int64_t i = 0; i < m; ++i)
                        for (int64_t p = 0; p < k; ++p) {
                          double s = 0.0;
                          for (int64_t j = 0; j < n; ++j)
                            s += g[i * n + j] * vb[p * n + j];
                          ga[i * k + p] += s;
                        }
                    }
                    if (t.requires_grad(b0)) {
                      auto& gb = t.grad(b0);  // dB = A^T * G
                      for (int64_t p = 0; p < k; ++p)
                        for (int64_t i = 0; i < m; ++i) {
                          double aip = va[i * k + p];
                          if (aip == 0.0) continue;
                          for (int64_t j = 0; j < n; ++j)
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                  });
  }

  DiffTensor sum_all(DiffTensor a) {
    check(a);
    const auto& va = value(a.id);
    double s = 0.0;
    for (double v : va) s += v;
    return record({1}, {s}, {a.id}, [](Tape& t, int self) {
      int a0 = t.inputs1(self);
      if (!t.requires_grad(a0)) return;
      double g = t.grad(self)[0];
      auto& ga = t.grad(a0);
      for (double& v : ga) v += g;
    });
  }

  DiffTensor mean_all(DiffTensor a) {
    check(a);
    int64_t n = numel(shape(a.id));
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
  }

  // ---- structural ----

  DiffTensor reshape(DiffTensor a, Shape s) {
    check(a);
    if (numel(s) != numel(shape(a.id)))
      throw DimensionError("reshape: cannot reshape " +
                           shape_str(shape(a.id)) + " to " + shape_str(s));
    std::vector<double> out = value(a.id);
    return record(std::move(s), std::move(out), {a.id},
                  [](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  });
  }

  DiffTensor gather_cols(DiffTensor a, std::vector<int64_t> idx) {
    check(a);
    const Shape& sa = shape(a.id);
    if (sa.size() != 2) throw DimensionError("gather_cols: need 2-D input");
    int64_t r = sa[0], c = sa[1];
    for (int64_t j : idx)
      if (j < 0 || j >= c)
        throw IndexError("gather_cols: column index " + std::to_string(j) +
                         " out of range [0," + std::to_string(c) + ")");
    int64_t kk = static_cast<int64_t>(idx.size());
    const auto& va = value(a.id);
    std::vector<double> out(static_cast<size_t>(r * kk));
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < kk; ++j) out[i * kk + j] = va[i * c + idx[j]];
    auto idx_ptr = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return record({r, kk}, std::move(out), {a.id},
                  [idx_ptr, r, c, kk](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < kk; ++j)
                        ga[i * c + (*idx_ptr)[j]] += g[i * kk + j];
                  });
  }

  DiffTensor index_select_rows(DiffTensor a, std::vector<int64_t> idx) {
    check(a);
    const Shape& sa = shape(a.id);
    if (sa.size() != 2)
      throw DimensionError("index_select_rows: need 2-D input");
    int64_t r = sa[0], c = sa[1];
    for (int64_t j : idx)
      if (j < 0 || j >= r)
        throw IndexError("index_select_rows: row index " + std::to_string(j) +
                         " out of range [0," + std::to_string(r) + ")");
    int64_t kk = static_cast<int64_t>(idx.size());
    const auto& va = value(a.id);
    std::vector<double> out(static_cast<size_t>(kk * c));
    for (int64_t i = 0; i < kk; ++i)
      for (int64_t j = 0; j < c; ++j) out[i * c + j] = va[idx[i] * c + j];
    auto idx_ptr = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return record({kk, c}, std::move(out), {a.id},
                  [idx_ptr, c, kk](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (int64_t i = 0; i < kk; ++i)
                      for (int64_t j = 0; j < c; ++j)
                        ga[(*idx_ptr)[i] * c + j] += g[i * c + j];
                  });
  }

  DiffTensor scatter_add_rows(DiffTensor a, std::vector<int64_t> idx,
                              int64_t n_out) {
    check(a);
    const Shape& sa = shape(a.id);
    if (sa.size() != 2)
      throw DimensionError("scatter_add_rows: need 2-D input");
    int64_t r = sa[0], c = sa[1];
    if (static_cast<int64_t>(idx.size()) != r)
      throw DimensionError("scatter_add_rows: index length must equal rows");
    for (int64_t j : idx)
      if (j < 0 || j >= n_out)
        throw IndexError("scatter_add_rows: slot " + std::to_string(j) +
                         " out of range [0," + std::to_string(n_out) + ")");
    const auto& va = value(a.id);
    std::vector<double> out(static_cast<size_t>(n_out * c), 0.0);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out[idx[i] * c + j] += va[i * c + j];
    auto idx_ptr = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return record({n_out, c}, std::move(out), {a.id},
                  [idx_ptr, r, c](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < c; ++j)
                        ga[i * c + j] += g[(*idx_ptr)[i] * c + j];
                  });
  }

  // Per-segment elementwise max; empty segments yield 0. Gradient flows to
  // the first row attaining the max in each segment.
  DiffTensor scatter_max_rows(DiffTensor a, std::vector<int64_t> idx,
                              int64_t n_out) {
    check(a);
    const Shape& sa = shape(a.id);
    if (sa.size() != 2)
      throw DimensionError("scatter_max_rows: need 2-D input");
    int64_t r = sa[0], c = sa[1];
    if (static_cast<int64_t>(idx.size()) != r)
      throw DimensionError("scatter_max_rows: index length must equal rows");
    const auto& va = value(a.id);
    std::vector<double> out(static_cast<size_t>(n_out * c), 0.0);
    auto arg = std::make_shared<std::vector<int64_t>>(
        static_cast<size_t>(n_out * c), -1);
    for (int64_t i = 0; i < r; ++i) {
      int64_t s = idx[i];
      if (s < 0 || s >= n_out)
        throw IndexError("scatter_max_rows: slot out of range");
      for (int64_t j = 0; j < c; ++j) {
        int64_t o = s * c + j;
        if ((*arg)[o] < 0 || va[i * c + j] > out[o]) {
          out[o] = va[i * c + j];
          (*arg)[o] = i;
        }
      }
    }
    return record({n_out, c}, std::move(out), {a.id},
                  [arg, n_out, c](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    auto& ga = t.grad(a0);
                    for (int64_t o = 0; o < n_out * c; ++o) {
                      int64_t i = (*arg)[o];
                      if (i >= 0) ga[i * c + (o % c)] += g[o];
                    }
                  });
  }

  // Per-segment max returned as a constant (no gradient). Used to shift
  // softmax logits; the shift cancels exactly so detaching is exact.
  DiffTensor segment_max_detached(DiffTensor a,
                                  const std::vector<int64_t>& idx,
                                  int64_t n_out) {
    check(a);
    const Shape& sa = shape(a.id);
    int64_t r = sa[0], c = sa[1];
    const auto& va = value(a.id);
    std::vector<double> out(static_cast<size_t>(n_out * c), 0.0);
    std::vector<char> seen(static_cast<size_t>(n_out * c), 0);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) {
        int64_t o = idx[i] * c + j;
        if (!seen[o] || va[i * c + j] > out[o]) {
          out[o] = va[i * c + j];
          seen[o] = 1;
        }
      }
    return constant({n_out, c}, std::move(out));
  }

  DiffTensor concat_cols(const std::vector<DiffTensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    int64_t r = shape(parts[0].id)[0];
    int64_t ctot = 0;
    for (const auto& p : parts) {
      check(p);
      const Shape& s = shape(p.id);
      if (s.size() != 2 || s[0] != r)
        throw DimensionError("concat_cols: row mismatch");
      ctot += s[1];
    }
    std::vector<double> out(static_cast<size_t>(r * ctot));
    std::vector<int> ids;
    auto widths = std::make_shared<std::vector<int64_t>>();
    int64_t off = 0;
    for (const auto& p : parts) {
      int64_t c = shape(p.id)[1];
      const auto& v = value(p.id);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j)
          out[i * ctot + off + j] = v[i * c + j];
      ids.push_back(p.id);
      widths->push_back(c);
      off += c;
    }
    return record({r, ctot}, std::move(out), std::move(ids),
                  [widths, r, ctot](Tape& t, int self) {
                    const auto& g = t.grad(self);
                    const auto& ins = t.inputs(self);
                    int64_t off = 0;
                    for (size_t p = 0; p < ins.size(); ++p) {
                      int64_t c = (*widths)[p];
                      if (t.requires_grad(ins[p])) {
                        auto& ga = t.grad(ins[p]);
                        for (int64_t i = 0; i < r; ++i)
                          for (int64_t j = 0; j < c; ++j)
                            ga[i * c + j] += g[i * ctot + off + j];
                      }
                      off += c;
                    }
                  });
  }

  DiffTensor concat_rows(const std::vector<DiffTensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    int64_t c = shape(parts[0].id)[1];
    int64_t rtot = 0;
    for (const auto& p : parts) {
      check(p);
      const Shape& s = shape(p.id);
      if (s.size() != 2 || s[1] != c)
        throw DimensionError("concat_rows: column mismatch");
      rtot += s[0];
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rtot * c));
    std::vector<int> ids;
    auto heights = std::make_shared<std::vector<int64_t>>();
    for (const auto& p : parts) {
      const auto& v = value(p.id);
      out.insert(out.end(), v.begin(), v.end());
      ids.push_back(p.id);
      heights->push_back(shape(p.id)[0]);
    }
    return record({rtot, c}, std::move(out), std::move(ids),
                  [heights, c](Tape& t, int self) {
                    const auto& g = t.grad(self);
                    const auto& ins = t.inputs(self);
                    int64_t off = 0;
                    for (size_t p = 0; p < ins.size(); ++p) {
                      int64_t r = (*heights)[p];
                      if (t.requires_grad(ins[p])) {
                        auto& ga = t.grad(ins[p]);
                        for (int64_t i = 0; i < r * c; ++i)
                          ga[i] += g[off + i];
                      }
                      off += r * c;
                    }
                  });
  }

  // Scatters a flat weight vector into a larger (mostly zero) tensor:
  // out.flat[pos] += coeff * w[widx]. Builds expanded block-diagonal
  // weight matrices for the equivariant layers.
  struct SparsePlacement {
    int64_t pos;
    int64_t widx;
    double coeff;
  };

  DiffTensor expand_sparse(DiffTensor w, Shape out_shape,
                           std::shared_ptr<const std::vector<SparsePlacement>>
                               placements) {
    check(w);
    const auto& vw = value(w.id);
    std::vector<double> out(static_cast<size_t>(numel(out_shape)), 0.0);
    for (const auto& pl : *placements) {
      if (pl.widx < 0 || pl.widx >= static_cast<int64_t>(vw.size()))
        throw IndexError("expand_sparse: weight index out of range");
      out[pl.pos] += pl.coeff * vw[pl.widx];
    }
    return record(std::move(out_shape), std::move(out), {w.id},
                  [placements](Tape& t, int self) {
                    int w0 = t.inputs1(self);
                    if (!t.requires_grad(w0)) return;
                    const auto& g = t.grad(self);
                    auto& gw = t.grad(w0);
                    for (const auto& pl : *placements)
                      gw[pl.widx] += pl.coeff * g[pl.pos];
                  });
  }

  // Sparse bilinear contraction: out[r,m3] += c * a[r,m1] * b[r,m2] for
  // each coefficient (m1,m2,m3,c). The rowwise kernel of the
  // Clebsch-Gordan tensor product.
  struct BilinearCoeff {
    int m1, m2, m3;
    double c;
  };

  DiffTensor cg_contract(DiffTensor a, DiffTensor b, int64_t d3,
                         std::shared_ptr<const std::vector<BilinearCoeff>>
                             coeffs) {
    check(a);
    check(b);
    const Shape& sa = shape(a.id);
    const Shape& sb = shape(b.id);
    if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0])
      throw DimensionError("cg_contract: row mismatch " + shape_str(sa) +
                           " vs " + shape_str(sb));
    int64_t r = sa[0], d1 = sa[1], d2 = sb[1];
    const auto& va = value(a.id);
    const auto& vb = value(b.id);
    std::vector<double> out(static_cast<size_t>(r * d3), 0.0);
    for (int64_t i = 0; i < r; ++i) {
      const double* ar = &va[i * d1];
      const double* br = &vb[i * d2];
      double* orow = &out[i * d3];
      for (const auto& t3 : *coeffs) orow[t3.m3] += t3.c * ar[t3.m1] * br[t3.m2];
    }
    return record({r, d3}, std::move(out), {a.id, b.id},
                  [coeffs, r, d1, d2, d3](Tape& t, int self) {
                    auto [a0, b0] = t.inputs2(self);
                    const auto& g = t.grad(self);
                    const auto& va = t.value(a0);
                    const auto& vb = t.value(b0);
                    bool na = t.requires_grad(a0), nb = t.requires_grad(b0);
                    for (int64_t i = 0; i < r; ++i) {
                      const double* ar = &va[i * d1];
                      const double* br = &vb[i * d2];
                      const double* gr = &g[i * d3];
                      double* gar = na ? &t.grad(a0)[i * d1] : nullptr;
                      double* gbr = nb ? &t.grad(b0)[i * d2] : nullptr;
                      for (const auto& t3 : *coeffs) {
                        double go = gr[t3.m3] * t3.c;
                        if (na) gar[t3.m1] += go * br[t3.m2];
                        if (nb) gbr[t3.m2] += go * ar[t3.m1];
                      }
                    }
                  });
  }

  // ---- backward ----

  void backward(DiffTensor loss) {
    check(loss);
    if (numel(shape(loss.id)) != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(shape(loss.id)));
    if (!nodes_[loss.id].requires_grad)
      throw ContractError("backward: loss is not on the differentiable tape");
    grad(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(*this, i);
    }
    for (auto& [param, id] : leaves_) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      for (size_t i = 0; i < n.grad.size(); ++i) param->grad[i] += n.grad[i];
    }
  }

  const std::vector<int>& inputs(int id) const { return node_inputs_.at(id); }
  int inputs1(int id) const { return node_inputs_.at(id).at(0); }
  std::pair<int, int> inputs2(int id) const {
    const auto& v = node_inputs_.at(id);
    return {v.at(0), v.at(1)};
  }

 private:
  template <typename F, typename DF>
  DiffTensor unary(DiffTensor a, F f, DF df) {
    check(a);
    const auto& va = value(a.id);
    std::vector<double> out(va.size());
    for (size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
    return record(shape(a.id), std::move(out), {a.id},
                  [df](Tape& t, int self) {
                    int a0 = t.inputs1(self);
                    if (!t.requires_grad(a0)) return;
                    const auto& g = t.grad(self);
                    const auto& va = t.value(a0);
                    const auto& vo = t.value(self);
                    auto& ga = t.grad(a0);
                    for (size_t i = 0; i < g.size(); ++i)
                      ga[i] += g[i] * df(va[i], vo[i]);
                  });
  }

  void check(const DiffTensor& t) const {
    if (t.tape != this || t.id < 0 || t.id >= static_cast<int>(nodes_.size()))
      throw ContractError("tensor handle does not belong to this tape");
  }

  DiffTensor push(Shape shape, std::vector<double> value, bool req,
                  std::function<void(Tape&, int)> bp) {
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = req;
    n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    node_inputs_.emplace_back();
    return DiffTensor{this, static_cast<int>(nodes_.size()) - 1};
  }

  DiffTensor record(Shape shape, std::vector<double> value,
                    std::vector<int> inputs,
                    std::function<void(Tape&, int)> bp) {
    bool req = false;
    if (grad_enabled_)
      for (int i : inputs) req = req || nodes_[i].requires_grad;
    DiffTensor t = push(std::move(shape), std::move(value), req,
                        req ? std::move(bp) : nullptr);
    node_inputs_.back() = std::move(inputs);
    return t;
  }

  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> node_inputs_;
  std::vector<std::pair<Parameter*, int>> leaves_;
};

inline const Shape& DiffTensor::shape() const { return tape->shape(id); }
inline const std::vector<double>& DiffTensor::value() const {
  return tape->value(id);
}
inline bool DiffTensor::requires_grad() const {
  return tape->requires_grad(id);
}
inline const std::vector<double>& DiffTensor::grad() const {
  return tape->grad(id);
}
inline double DiffTensor::item() const {
  if (numel(shape()) != 1)
    throw ContractError("item(): tensor is not scalar");
  return value()[0];
}

}  // namespace mlanet
