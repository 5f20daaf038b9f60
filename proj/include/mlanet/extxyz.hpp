#pragma once

// Extended-XYZ reading and writing. The reader is whitespace-tolerant and
// reports parse failures with 1-based line numbers; the writer emits one
// canonical form that the reader round-trips exactly.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlanet/errors.hpp"
#include "mlanet/structure.hpp"

namespace mlanet {

namespace elements {

inline const std::vector<std::string>& symbols() {
  static const std::vector<std::string> s = {
      "X",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
      "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",
      "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br",
      "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag",
      "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
      "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu",
      "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi",
      "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U"};
  return s;
}

inline int atomic_number(const std::string& sym) {
  const auto& tab = symbols();
  for (size_t z = 1; z < tab.size(); ++z)
    if (tab[z] == sym) return static_cast<int>(z);
  // Numeric species are accepted too ("1" == H).
  try {
    size_t used = 0;
    int z = std::stoi(sym, &used);
    if (used == sym.size() && z >= 1) return z;
  } catch (...) {
  }
  throw ParseError("unknown element symbol '" + sym + "'");
}

inline std::string symbol(int z) {
  const auto& tab = symbols();
  if (z >= 1 && z < static_cast<int>(tab.size())) return tab[z];
  return std::to_string(z);
}

// Masses in amu (standard atomic weights) for the species the bundled
// datasets use; everything else falls back to ~2.2*Z which is close enough
// for synthetic systems.
inline double mass(int z) {
  static const std::map<int, double> m = {
      {1, 1.008},   {2, 4.0026},  {3, 6.94},    {6, 12.011},  {7, 14.007},
      {8, 15.999},  {9, 18.998},  {11, 22.990}, {14, 28.085}, {16, 32.06},
      {17, 35.45},  {18, 39.948}, {29, 63.546}, {79, 196.97}};
  auto it = m.find(z);
  return it != m.end() ? it->second : 2.2 * z;
}

}  // namespace elements

namespace detail {

// Splits a comment line into key=value pairs; values may be double-quoted
// and contain spaces. Bare tokens become key="T".
inline std::map<std::string, std::string> parse_kv(const std::string& line,
                                                   size_t line_no) {
  std::map<std::string, std::string> kv;
  size_t i = 0;
  const size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    size_t key_start = i;
    while (i < n && line[i] != '=' &&
           !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::string key = line.substr(key_start, i - key_start);
    if (i >= n || line[i] != '=') {
      kv[key] = "T";
      continue;
    }
    ++i;  // '='
    std::string val;
    if (i < n && line[i] == '"') {
      ++i;
      size_t close = line.find('"', i);
      if (close == std::string::npos)
        throw ParseError("line " + std::to_string(line_no) +
                         ": unterminated quote in header");
      val = line.substr(i, close - i);
      i = close + 1;
    } else {
      size_t val_start = i;
      while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      val = line.substr(val_start, i - val_start);
    }
    kv[key] = val;
  }
  return kv;
}

inline std::vector<double> parse_floats(const std::string& s, size_t expect,
                                        const std::string& what,
                                        size_t line_no) {
  std::istringstream is(s);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (out.size() != expect)
    throw ParseError("line " + std::to_string(line_no) + ": " + what +
                     " needs " + std::to_string(expect) + " numbers, got " +
                     std::to_string(out.size()));
  return out;
}

struct PropertyColumn {
  std::string name;
  char kind;  // S, R, I, L
  int width;
};

inline std::vector<PropertyColumn> parse_properties(const std::string& spec,
                                                    size_t line_no) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() % 3 != 0)
    throw ParseError("line " + std::to_string(line_no) +
                     ": malformed Properties string '" + spec + "'");
  std::vector<PropertyColumn> cols;
  for (size_t i = 0; i < parts.size(); i += 3) {
    if (parts[i + 1].size() != 1)
      throw ParseError("line " + std::to_string(line_no) +
                       ": bad column type in Properties");
    int w;
    try {
      w = std::stoi(parts[i + 2]);
    } catch (...) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": bad column width in Properties");
    }
    cols.push_back({parts[i], parts[i + 1][0], w});
  }
  return cols;
}

inline bool parse_bool_flag(const std::string& s) {
  return s == "T" || s == "t" || s == "true" || s == "True" || s == "1";
}

}  // namespace detail

inline std::vector<AtomicStructure> parse_extxyz_stream(std::istream& in) {
  std::vector<AtomicStructure> frames;
  std::string line;
  size_t line_no = 0;
  while (true) {
    // Atom-count line (blank lines between frames are tolerated).
    size_t natoms = 0;
    bool got = false;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream is(line);
      long long n;
      if (is >> n) {
        std::string rest;
        if (is >> rest)
          throw ParseError("line " + std::to_string(line_no) +
                           ": expected a bare atom count");
        if (n < 1)
          throw ParseError("line " + std::to_string(line_no) +
                           ": atom count must be >= 1");
        natoms = static_cast<size_t>(n);
        got = true;
        break;
      }
      bool blank = true;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
      if (!blank)
        throw ParseError("line " + std::to_string(line_no) +
                         ": expected atom count, got '" + line + "'");
    }
    if (!got) break;  // clean EOF

    size_t frame_idx = frames.size();
    auto truncated = [&] {
      return ParseError("truncated file inside frame " +
                        std::to_string(frame_idx) + " (line " +
                        std::to_string(line_no) + ")");
    };

    if (!std::getline(in, line)) throw truncated();
    ++line_no;
    auto kv = detail::parse_kv(line, line_no);

    AtomicStructure s;
    if (auto it = kv.find("Lattice"); it != kv.end()) {
      auto v = detail::parse_floats(it->second, 9, "Lattice", line_no);
      Mat3 c;
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) c[r][k] = v[3 * r + k];
      s.cell = c;
    }
    if (auto it = kv.find("pbc"); it != kv.end()) {
      std::istringstream is(it->second);
      std::string tok;
      int ax = 0;
      while (is >> tok && ax < 3) s.pbc[ax++] = detail::parse_bool_flag(tok);
      if (ax == 1) s.pbc[1] = s.pbc[2] = s.pbc[0];
    } else if (s.cell) {
      s.pbc = {true, true, true};
    }
    if (auto it = kv.find("energy"); it != kv.end())
      s.energy = detail::parse_floats(it->second, 1, "energy", line_no)[0];
    if (auto it = kv.find("charge"); it != kv.end()) {
      double q = detail::parse_floats(it->second, 1, "charge", line_no)[0];
      s.total_charge = static_cast<int>(std::lround(q));
    }

    std::vector<detail::PropertyColumn> cols;
    if (auto it = kv.find("Properties"); it != kv.end())
      cols = detail::parse_properties(it->second, line_no);
    else
      cols = {{"species", 'S', 1}, {"pos", 'R', 3}};

    bool has_forces = false;
    for (const auto& c : cols)
      if ((c.name == "forces" || c.name == "force") && c.width == 3)
        has_forces = true;
    if (has_forces) s.forces = std::vector<Vec3>();

    for (size_t a = 0; a < natoms; ++a) {
      if (!std::getline(in, line)) throw truncated();
      ++line_no;
      std::istringstream is(line);
      std::vector<std::string> toks;
      std::string tok;
      while (is >> tok) toks.push_back(tok);
      size_t need = 0;
      for (const auto& c : cols) need += c.width;
      if (toks.size() < need)
        throw ParseError("line " + std::to_string(line_no) + ": atom row has " +
                         std::to_string(toks.size()) + " fields, needs " +
                         std::to_string(need));
      size_t off = 0;
      auto num = [&](size_t k) {
        try {
          size_t used = 0;
          double v = std::stod(toks[off + k], &used);
          if (used != toks[off + k].size()) throw std::invalid_argument("");
          return v;
        } catch (...) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": bad number '" + toks[off + k] + "'");
        }
      };
      for (const auto& c : cols) {
        if (c.name == "species") {
          try {
            s.species.push_back(elements::atomic_number(toks[off]));
          } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " +
                             e.what());
          }
        } else if (c.name == "pos") {
          s.positions.push_back({num(0), num(1), num(2)});
        } else if ((c.name == "forces" || c.name == "force") && c.width == 3) {
          s.forces->push_back({num(0), num(1), num(2)});
        }
        // Unknown per-atom columns are skipped (tolerant read).
        off += c.width;
      }
    }
    if (s.species.size() != natoms || s.positions.size() != natoms)
      throw ParseError("frame " + std::to_string(frame_idx) +
                       ": Properties do not declare species and pos");
    frames.push_back(std::move(s));
  }
  return frames;
}

inline std::vector<AtomicStructure> parse_extxyz(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  try {
    return parse_extxyz_stream(f);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

namespace detail {

// Shortest decimal that reparses to the same double.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::stod(probe) == v) return probe;
  }
  return buf;
}

}  // namespace detail

inline void write_extxyz_stream(std::ostream& out,
                                const std::vector<AtomicStructure>& frames) {
  for (const auto& s : frames) {
    s.validate();
    out << s.size() << "\n";
    if (s.cell) {
      out << "Lattice=\"";
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k)
          out << (r + k ? " " : "") << detail::fmt_double((*s.cell)[r][k]);
      out << "\" ";
    }
    out << "Properties=species:S:1:pos:R:3";
    if (s.forces) out << ":forces:R:3";
    out << " pbc=\"" << (s.pbc[0] ? 'T' : 'F') << " " << (s.pbc[1] ? 'T' : 'F')
        << " " << (s.pbc[2] ? 'T' : 'F') << "\"";
    if (s.energy) out << " energy=" << detail::fmt_double(*s.energy);
    if (s.total_charge) out << " charge=" << *s.total_charge;
    out << "\n";
    for (size_t a = 0; a < s.size(); ++a) {
      out << elements::symbol(s.species[a]);
      for (int k = 0; k < 3; ++k)
        out << " " << detail::fmt_double(s.positions[a][k]);
      if (s.forces)
        for (int k = 0; k < 3; ++k)
          out << " " << detail::fmt_double((*s.forces)[a][k]);
      out << "\n";
    }
  }
}

inline void write_extxyz(const std::string& path,
                         const std::vector<AtomicStructure>& frames) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    write_extxyz_stream(f, frames);
    if (!f) throw IoError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

}  // namespace mlanet
