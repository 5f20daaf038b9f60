#pragma once

// Irreducible-representation channel layout. A spec like
// "128x0e+64x1o+32x2e+32x3o" lists (multiplicity, l, parity) entries; the
// flat feature dimension of an entry is mult*(2l+1), stored channel-major
// (all 2l+1 components of channel 0, then channel 1, ...).

#include <cctype>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mlanet/errors.hpp"

namespace mlanet {

struct Irrep {
  int l = 0;
  int parity = 1;  // +1 even ("e"), -1 odd ("o")

  int dim() const { return 2 * l + 1; }
  bool operator==(const Irrep& o) const {
    return l == o.l && parity == o.parity;
  }
  bool operator!=(const Irrep& o) const { return !(*this == o); }
  std::string str() const {
    return std::to_string(l) + (parity > 0 ? "e" : "o");
  }
  // Parity of the l-th spherical harmonic block: (-1)^l.
  static Irrep sh(int l) { return Irrep{l, (l % 2 == 0) ? 1 : -1}; }
};

struct IrrepsEntry {
  int64_t mult = 0;
  Irrep ir;

  int64_t dim() const { return mult * ir.dim(); }
  bool operator==(const IrrepsEntry& o) const {
    return mult == o.mult && ir == o.ir;
  }
};

struct IrrepsSpec {
  std::vector<IrrepsEntry> entries;

  IrrepsSpec() = default;
  explicit IrrepsSpec(std::vector<IrrepsEntry> e) : entries(std::move(e)) {}

  static IrrepsSpec parse(const std::string& text) {
    IrrepsSpec spec;
    size_t pos = 0;
    if (text.empty()) throw ParseError("irreps: empty spec string");
    while (pos < text.size()) {
      size_t plus = text.find('+', pos);
      std::string tok = text.substr(
          pos, plus == std::string::npos ? std::string::npos : plus - pos);
      spec.entries.push_back(parse_entry(tok));
      if (plus == std::string::npos) break;
      pos = plus + 1;
      if (pos >= text.size())
        throw ParseError("irreps: trailing '+' in \"" + text + "\"");
    }
    return spec;
  }

  std::string str() const {
    std::ostringstream os;
    for (size_t i = 0; i < entries.size(); ++i) {
      if (i) os << "+";
      os << entries[i].mult << "x" << entries[i].ir.str();
    }
    return os.str();
  }

  int64_t dim() const {
    int64_t d = 0;
    for (const auto& e : entries) d += e.dim();
    return d;
  }

  // Total number of channels across entries (each counted once per
  // multiplicity, regardless of l).
  int64_t n_channels() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.mult;
    return n;
  }

  int max_l() const {
    int m = 0;
    for (const auto& e : entries) m = std::max(m, e.ir.l);
    return m;
  }

  int64_t offset(size_t entry) const {
    int64_t o = 0;
    for (size_t i = 0; i < entry; ++i) o += entries[i].dim();
    return o;
  }

  bool contains(const Irrep& ir) const {
    for (const auto& e : entries)
      if (e.ir == ir) return true;
    return false;
  }

  // Channels with the given l selector; l<0 selects l>0 entries.
  int64_t channels_with(int l) const {
    int64_t n = 0;
    for (const auto& e : entries)
      if ((l >= 0 && e.ir.l == l) || (l < 0 && e.ir.l > 0)) n += e.mult;
    return n;
  }

  bool operator==(const IrrepsSpec& o) const { return entries == o.entries; }

  // Flat column indices of all scalar (l=0) components, in layout order.
  std::vector<int64_t> scalar_cols() const {
    std::vector<int64_t> cols;
    int64_t off = 0;
    for (const auto& e : entries) {
      if (e.ir.l == 0)
        for (int64_t c = 0; c < e.mult; ++c) cols.push_back(off + c);
      off += e.dim();
    }
    return cols;
  }

 private:
  static IrrepsEntry parse_entry(const std::string& tok) {
    size_t x = tok.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= tok.size())
      throw ParseError("irreps: bad entry \"" + tok + "\" (want Mx{l}{e|o})");
    IrrepsEntry e;
    try {
      size_t used = 0;
      e.mult = std::stoll(tok.substr(0, x), &used);
      if (used != x) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("irreps: bad multiplicity in \"" + tok + "\"");
    }
    if (e.mult <= 0)
      throw ParseError("irreps: multiplicity must be positive in \"" + tok +
                       "\"");
    std::string rest = tok.substr(x + 1);
    char p = rest.back();
    if (p != 'e' && p != 'o')
      throw ParseError("irreps: parity must be 'e' or 'o' in \"" + tok +
                       "\"");
    std::string lstr = rest.substr(0, rest.size() - 1);
    if (lstr.empty())
      throw ParseError("irreps: missing l in \"" + tok + "\"");
    for (char ch : lstr)
      if (!std::isdigit(static_cast<unsigned char>(ch)))
        throw ParseError("irreps: bad l in \"" + tok + "\"");
    e.ir.l = std::stoi(lstr);
    e.ir.parity = (p == 'e') ? 1 : -1;
    return e;
  }
};

// Spec of the spherical-harmonic feature 1x0e+1x1o+1x2e+...
inline IrrepsSpec sh_spec(int l_max) {
  IrrepsSpec s;
  for (int l = 0; l <= l_max; ++l)
    s.entries.push_back(IrrepsEntry{1, Irrep::sh(l)});
  return s;
}

}  // namespace mlanet
