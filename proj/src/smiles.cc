// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/smiles.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "molstack/error.h"

namespace molstack {
namespace {

constexpr std::array<std::string_view, kElementCount> kSymbols = {
    "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "Si", "Se"};

bool can_be_aromatic(Element e) {
  switch (e) {
    case Element::B:
    case Element::C:
    case Element::N:
    case Element::O:
    case Element::P:
    case Element::S:
    case Element::Se:
      return true;
    default:
      return false;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  MolGraph run() {
    if (text_.empty()) fail(ErrorCode::kEmptyInput, "empty SMILES");
    while (pos_ < text_.size()) step();
    if (!open_rings_.empty()) {
      fail(ErrorCode::kUnmatchedRingClosure,
           "ring closure " + std::to_string(open_rings_.begin()->first) +
               " opened at position " +
               std::to_string(open_rings_.begin()->second.position) +
               " is never closed");
    }
    if (!branches_.empty()) {
      fail(ErrorCode::kUnbalancedParenthesis, "unclosed '(' in SMILES");
    }
    if (pending_) unsupported("dangling bond symbol at end of input");
    if (mol_.atom_count() == 0) fail(ErrorCode::kEmptyInput, "no atoms");
    return std::move(mol_);
  }

 private:
  struct OpenRing {
    int atom;
    std::optional<BondOrder> order;
    std::size_t position;
  };

  [[noreturn]] void unsupported(const std::string& what) const {
    fail(ErrorCode::kUnsupportedToken,
         what + " at position " + std::to_string(pos_));
  }

  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '(':
        if (prev_ < 0 || pending_) unsupported("branch without a preceding atom");
        branches_.push_back(prev_);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) {
          fail(ErrorCode::kUnbalancedParenthesis,
               "unmatched ')' at position " + std::to_string(pos_));
        }
        if (pending_) unsupported("bond symbol before ')'");
        prev_ = branches_.back();
        branches_.pop_back();
        ++pos_;
        return;
      case '-': set_pending(BondOrder::kSingle); return;
      case '=': set_pending(BondOrder::kDouble); return;
      case '#': set_pending(BondOrder::kTriple); return;
      case ':': set_pending(BondOrder::kAromatic); return;
      case '.':
        if (pending_) unsupported("bond symbol before '.'");
        if (!branches_.empty()) unsupported("'.' inside a branch");
        prev_ = -1;
        ++pos_;
        return;
      case '[':
        bracket_atom();
        return;
      case '%':
        ring_closure(percent_number());
        return;
      default:
        break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      ring_closure(c - '0');
      return;
    }
    organic_atom();
  }

  void set_pending(BondOrder order) {
    if (pending_) unsupported("consecutive bond symbols");
    if (prev_ < 0) unsupported("bond symbol without a preceding atom");
    pending_ = order;
    ++pos_;
  }

  int percent_number() {
    if (pos_ + 2 >= text_.size() ||
        !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
        !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
      unsupported("malformed %nn ring closure");
    }
    const int n = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
    pos_ += 3;
    return n;
  }

  BondOrder default_order(int a, int b) const {
    return mol_.atom(a).aromatic && mol_.atom(b).aromatic
               ? BondOrder::kAromatic
               : BondOrder::kSingle;
  }

  void ring_closure(int number) {
    if (prev_ < 0) unsupported("ring closure without a preceding atom");
    auto it = open_rings_.find(number);
    if (it == open_rings_.end()) {
      open_rings_[number] = OpenRing{prev_, pending_, pos_};
      pending_.reset();
      return;
    }
    const OpenRing open = it->second;
    open_rings_.erase(it);
    if (open.order && pending_ && *open.order != *pending_) {
      fail(ErrorCode::kInvalidBond, "conflicting ring-closure bond orders for " +
                                        std::to_string(number));
    }
    const BondOrder order = pending_   ? *pending_
                            : open.order ? *open.order
                                         : default_order(open.atom, prev_);
    if (open.atom == prev_ || mol_.bond_between(open.atom, prev_) >= 0) {
      fail(ErrorCode::kInvalidBond,
           "ring closure " + std::to_string(number) +
               " duplicates an existing bond at position " +
               std::to_string(pos_));
    }
    mol_.add_bond(open.atom, prev_, order);
    pending_.reset();
  }

  void attach(Element element, bool aromatic, int charge) {
    if (aromatic && !can_be_aromatic(element)) {
      unsupported("element cannot be aromatic");
    }
    const int atom = mol_.add_atom(element, aromatic, charge);
    if (prev_ >= 0) {
      const BondOrder order = pending_ ? *pending_ : default_order(prev_, atom);
      mol_.add_bond(prev_, atom, order);
    }
    pending_.reset();
    prev_ = atom;
  }

  void organic_atom() {
    const std::string_view rest = text_.substr(pos_);
    if (rest.starts_with("Cl")) {
      pos_ += 2;
      attach(Element::Cl, false, 0);
      return;
    }
    if (rest.starts_with("Br")) {
      pos_ += 2;
      attach(Element::Br, false, 0);
      return;
    }
    const char c = rest.front();
    const bool lower = std::islower(static_cast<unsigned char>(c)) != 0;
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    std::optional<Element> e;
    switch (upper) {
      case 'B': e = Element::B; break;
      case 'C': e = Element::C; break;
      case 'N': e = Element::N; break;
      case 'O': e = Element::O; break;
      case 'P': e = Element::P; break;
      case 'S': e = Element::S; break;
      case 'F': if (!lower) e = Element::F; break;
      case 'I': if (!lower) e = Element::I; break;
      default: break;
    }
    if (!e) {
      unsupported(std::string("unsupported symbol '") + c + "'");
    }
    ++pos_;
    attach(*e, lower, 0);
  }

  void bracket_atom() {
    const std::size_t close = text_.find(']', pos_);
    if (close == std::string_view::npos) unsupported("unterminated bracket atom");
    std::string_view body = text_.substr(pos_ + 1, close - pos_ - 1);
    std::size_t i = 0;
    if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      unsupported("isotopes are not supported");
    }
    // Element symbol: aromatic two-letter "se" first, then two-letter
    // capitalized symbols, then single letters.
    bool aromatic = false;
    std::optional<Element> element;
    if (body.substr(i).starts_with("se")) {
      element = Element::Se;
      aromatic = true;
      i += 2;
    } else if (i < body.size() &&
               std::islower(static_cast<unsigned char>(body[i]))) {
      const char upper =
          static_cast<char>(std::toupper(static_cast<unsigned char>(body[i])));
      element = element_from_symbol(std::string_view(&upper, 1));
      aromatic = true;
      i += 1;
    } else if (i < body.size()) {
      if (i + 1 < body.size() &&
          std::islower(static_cast<unsigned char>(body[i + 1]))) {
        element = element_from_symbol(body.substr(i, 2));
        if (element) i += 2;
      }
      if (!element) {
        element = element_from_symbol(body.substr(i, 1));
        if (element) i += 1;
      }
    }
    if (!element) {
      unsupported("unsupported bracket atom [" + std::string(body) + "]");
    }
    if (i < body.size() && body[i] == '@') unsupported("stereochemistry is not supported");
    if (i < body.size() && body[i] == 'H') {
      ++i;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    }
    int charge = 0;
    if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
      const char sign = body[i];
      const int unit = sign == '+' ? 1 : -1;
      ++i;
      if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        int magnitude = 0;
        const auto res =
            std::from_chars(body.data() + i, body.data() + body.size(), magnitude);
        i = static_cast<std::size_t>(res.ptr - body.data());
        charge = unit * magnitude;
      } else {
        charge = unit;
        while (i < body.size() && body[i] == sign) {
          charge += unit;
          ++i;
        }
      }
    }
    if (i != body.size()) {
      unsupported("unsupported bracket atom content [" + std::string(body) + "]");
    }
    pos_ = close + 1;
    attach(*element, aromatic, charge);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  MolGraph mol_;
  int prev_ = -1;
  std::optional<BondOrder> pending_;
  std::vector<int> branches_;
  std::map<int, OpenRing> open_rings_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view element_symbol(Element e) {
  return kSymbols[static_cast<int>(e)];
}

std::optional<Element> element_from_symbol(std::string_view symbol) {
  for (int i = 0; i < kElementCount; ++i) {
    if (kSymbols[i] == symbol) return static_cast<Element>(i);
  }
  return std::nullopt;
}

char bond_symbol(BondOrder order) {
  switch (order) {
    case BondOrder::kSingle: return '-';
    case BondOrder::kDouble: return '=';
    case BondOrder::kTriple: return '#';
    case BondOrder::kAromatic: return ':';
  }
  return '?';
}

int MolGraph::add_atom(Element element, bool aromatic, int formal_charge) {
  const int index = atom_count();
  atoms_.push_back(Atom{element, aromatic, formal_charge, index});
  adjacency_.emplace_back();
  return index;
}

int MolGraph::add_bond(int a, int b, BondOrder order) {
  if (a < 0 || b < 0 || a >= atom_count() || b >= atom_count()) {
    fail(ErrorCode::kInvalidBond, "bond endpoint out of range");
  }
  if (a == b) fail(ErrorCode::kInvalidBond, "self bond on atom " + std::to_string(a));
  if (bond_between(a, b) >= 0) {
    fail(ErrorCode::kInvalidBond, "duplicate bond " + std::to_string(a) + "-" +
                                      std::to_string(b));
  }
  bonds_.push_back(Bond{a, b, order});
  auto insert_sorted = [](std::vector<int>& v, int x) {
    v.insert(std::upper_bound(v.begin(), v.end(), x), x);
  };
  insert_sorted(adjacency_[a], b);
  insert_sorted(adjacency_[b], a);
  return bond_count() - 1;
}

int MolGraph::bond_between(int a, int b) const {
  for (int i = 0; i < bond_count(); ++i) {
    const Bond& bond = bonds_[i];
    if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) return i;
  }
  return -1;
}

std::vector<int> MolGraph::components() const {
  std::vector<int> comp(atoms_.size(), -1);
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < atom_count(); ++start) {
    if (comp[start] >= 0) continue;
    comp[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adjacency_[u]) {
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

int MolGraph::component_count() const {
  const auto comp = components();
  return comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
}

MolGraph parse_smiles(std::string_view text) { return Parser(text).run(); }

int cyclomatic_number(const MolGraph& mol) {
  return mol.bond_count() - mol.atom_count() + mol.component_count();
}

MoleculeStats molecule_stats(const MolGraph& mol) {
  MoleculeStats stats;
  stats.heavy_atoms = mol.atom_count();
  stats.degrees.reserve(mol.atom_count());
  for (const Atom& atom : mol.atoms()) {
    stats.degrees.push_back(mol.degree(atom.index));
    ++stats.element_counts[static_cast<int>(atom.element)];
  }
  for (const Bond& bond : mol.bonds()) {
    ++stats.bond_order_counts[static_cast<int>(bond.order)];
  }
  return stats;
}

MolGraph permute_atoms(const MolGraph& mol, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != mol.atom_count()) {
    fail(ErrorCode::kInvalidArgument, "permutation size mismatch");
  }
  std::vector<int> inverse(perm.size(), -1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] < 0 || perm[i] >= mol.atom_count() || inverse[perm[i]] >= 0) {
      fail(ErrorCode::kInvalidArgument, "not a permutation");
    }
    inverse[perm[i]] = static_cast<int>(i);
  }
  MolGraph out;
  for (int k = 0; k < mol.atom_count(); ++k) {
    const Atom& src = mol.atom(inverse[k]);
    out.add_atom(src.element, src.aromatic, src.formal_charge);
  }
  for (const Bond& bond : mol.bonds()) {
    out.add_bond(perm[bond.a], perm[bond.b], bond.order);
  }
  return out;
}

std::vector<SmilesRecord> read_smiles_records(std::string_view content) {
  std::vector<SmilesRecord> records;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') {
      if (end == content.size()) break;
      continue;
    }
    SmilesRecord record;
    record.line = line_no;
    const std::size_t tab = line.find('\t');
    record.smiles = std::string(trim(line.substr(0, tab)));
    if (tab != std::string_view::npos) {
      const std::string_view field = trim(line.substr(tab + 1));
      if (!field.empty()) {
        double value = 0.0;
        const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
        if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
          fail(ErrorCode::kFormat, "line " + std::to_string(line_no) +
                                       ": malformed target '" +
                                       std::string(field) + "'");
        }
        record.target = value;
      }
    }
    records.push_back(std::move(record));
    if (end == content.size()) break;
  }
  return records;
}

std::vector<SmilesRecord> read_smiles_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return read_smiles_records(buffer.str());
}

}  // namespace molstack
