// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLSTACK_SMILES_H_
#define MOLSTACK_SMILES_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace molstack {

// Supported heavy elements. The order is part of the feature encoding and
// of the descriptor index map, so append only.
enum class Element : std::uint8_t { C, N, O, S, P, F, Cl, Br, I, B, Si, Se };
inline constexpr int kElementCount = 12;

std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view symbol);

enum class BondOrder : std::uint8_t { kSingle, kDouble, kTriple, kAromatic };
inline constexpr int kBondOrderCount = 4;

char bond_symbol(BondOrder order);

struct Atom {
  Element element = Element::C;
  bool aromatic = false;
  int formal_charge = 0;
  int index = 0;

  bool operator==(const Atom&) const = default;
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::kSingle;

  bool operator==(const Bond&) const = default;
};

// Heavy-atom molecular graph. Atoms keep SMILES encounter order; hydrogens
// are never materialized.
class MolGraph {
 public:
  MolGraph() = default;

  int add_atom(Element element, bool aromatic, int formal_charge);
  // Returns the new bond index. Throws kInvalidBond on self loops or
  // duplicate pairs.
  int add_bond(int a, int b, BondOrder order);

  int atom_count() const { return static_cast<int>(atoms_.size()); }
  int bond_count() const { return static_cast<int>(bonds_.size()); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const Atom& atom(int i) const { return atoms_[i]; }
  const Bond& bond(int i) const { return bonds_[i]; }

  // Neighbor atom indices of atom i, in ascending order.
  const std::vector<int>& neighbors(int i) const { return adjacency_[i]; }
  int degree(int i) const { return static_cast<int>(adjacency_[i].size()); }
  // Bond index joining a and b, or -1.
  int bond_between(int a, int b) const;

  int component_count() const;
  // Component id per atom, numbered by first atom encountered.
  std::vector<int> components() const;

  bool operator==(const MolGraph&) const = default;

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<int>> adjacency_;
};

// Parses the supported SMILES subset: organic-subset and bracket atoms
// (charge and hydrogen count; hydrogens are dropped), bonds - = # :,
// aromatic lowercase atoms, branches, ring closures including %nn, and '.'
// disconnection. Stereo marks, isotopes and atom classes are rejected with
// kUnsupportedToken.
MolGraph parse_smiles(std::string_view text);

// A cycle of the molecule: atoms in cyclic order, starting at the smallest
// member and heading towards its smaller ring neighbor.
struct Ring {
  std::vector<int> atom_indices;

  int size() const { return static_cast<int>(atom_indices.size()); }
  bool operator==(const Ring&) const = default;
};

// Minimum cycle basis of the heavy-atom graph: exactly
// bonds - atoms + components rings. Output is sorted by size, then by
// smallest member, then lexicographically.
std::vector<Ring> perceive_rings(const MolGraph& mol);

// Cyclomatic number bonds - atoms + components.
int cyclomatic_number(const MolGraph& mol);

struct MoleculeStats {
  int heavy_atoms = 0;
  std::vector<int> degrees;
  std::array<int, kElementCount> element_counts{};
  std::array<int, kBondOrderCount> bond_order_counts{};
};

MoleculeStats molecule_stats(const MolGraph& mol);

// Returns a copy with atom i renamed to perm[i]. Bond list order is kept.
MolGraph permute_atoms(const MolGraph& mol, const std::vector<int>& perm);

// Line-oriented molecule file: "SMILES<TAB>target", target optional, '#'
// comments and blank lines skipped.
struct SmilesRecord {
  int line = 0;  // 1-based line number in the source
  std::string smiles;
  std::optional<double> target;
};

std::vector<SmilesRecord> read_smiles_records(std::string_view content);
std::vector<SmilesRecord> read_smiles_file(const std::string& path);

}  // namespace molstack

#endif  // MOLSTACK_SMILES_H_
