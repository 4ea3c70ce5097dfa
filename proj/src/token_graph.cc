// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/token_graph.h"

#include <algorithm>

#include "molstack/error.h"
#include "molstack/nn.h"

namespace molstack {
namespace {

const char* kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::kMolecule: return "molecule";
    case TokenKind::kAtom: return "atom";
    case TokenKind::kBond: return "bond";
    case TokenKind::kRing: return "ring";
  }
  return "?";
}

const char* table_name(TableId table) {
  switch (table) {
    case TableId::kAtomCount: return "atom_count";
    case TableId::kElement: return "element";
    case TableId::kAromatic: return "aromatic";
    case TableId::kCharge: return "charge";
    case TableId::kDegree: return "degree";
    case TableId::kBondOrder: return "bond_order";
    case TableId::kRingSize: return "ring_size";
  }
  return "?";
}

}  // namespace

std::size_t table_rows(TableId table) {
  switch (table) {
    case TableId::kAtomCount: return kMaxAtomCountIndex + 1;
    case TableId::kElement: return kElementCount;
    case TableId::kAromatic: return 2;
    case TableId::kCharge: return 5;
    case TableId::kDegree: return kMaxDegreeIndex + 1;
    case TableId::kBondOrder: return kBondOrderCount;
    case TableId::kRingSize: return kMaxRingSizeIndex + 1;
  }
  return 0;
}

TokenGraph build_token_graph(const MolGraph& mol, const std::vector<Ring>& rings) {
  TokenGraph g;
  g.atom_count = mol.atom_count();
  g.bond_count = mol.bond_count();
  g.ring_count = static_cast<int>(rings.size());
  g.n_tokens = 1 + g.atom_count + g.bond_count + g.ring_count;

  for (int r = 0; r < g.ring_count; ++r) {
    const auto& members = rings[r].atom_indices;
    if (members.size() < 3) {
      fail(ErrorCode::kInconsistentRings, "ring " + std::to_string(r) + " has fewer than 3 atoms");
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
      const int a = members[k];
      const int b = members[(k + 1) % members.size()];
      if (a < 0 || a >= g.atom_count) {
        fail(ErrorCode::kInconsistentRings,
             "ring " + std::to_string(r) + " references atom " + std::to_string(a));
      }
      if (b >= 0 && b < g.atom_count && mol.bond_between(a, b) < 0) {
        fail(ErrorCode::kInconsistentRings,
             "ring " + std::to_string(r) + " members " + std::to_string(a) + " and " +
                 std::to_string(b) + " are not bonded");
      }
    }
  }

  g.nodes.reserve(g.n_tokens);
  const int heavy = g.atom_count;
  TokenNode molecule;
  molecule.kind = TokenKind::kMolecule;
  molecule.init_spec.embedding_indices.emplace_back(TableId::kAtomCount,
                                                    std::min(heavy, kMaxAtomCountIndex));
  if (heavy > 0) molecule.init_spec.additive_scalars.emplace_back(0, 1.0 / heavy);
  g.nodes.push_back(std::move(molecule));

  for (const Atom& atom : mol.atoms()) {
    TokenNode node;
    node.kind = TokenKind::kAtom;
    node.source_index = atom.index;
    auto& idx = node.init_spec.embedding_indices;
    idx.emplace_back(TableId::kElement, static_cast<int>(atom.element));
    idx.emplace_back(TableId::kAromatic, atom.aromatic ? 1 : 0);
    idx.emplace_back(TableId::kCharge, std::clamp(atom.formal_charge, -2, 2) + 2);
    idx.emplace_back(TableId::kDegree, std::min(mol.degree(atom.index), kMaxDegreeIndex));
    g.nodes.push_back(std::move(node));
  }
  for (int b = 0; b < g.bond_count; ++b) {
    TokenNode node;
    node.kind = TokenKind::kBond;
    node.source_index = b;
    node.init_spec.embedding_indices.emplace_back(TableId::kBondOrder,
                                                  static_cast<int>(mol.bond(b).order));
    g.nodes.push_back(std::move(node));
  }
  for (int r = 0; r < g.ring_count; ++r) {
    TokenNode node;
    node.kind = TokenKind::kRing;
    node.source_index = r;
    node.init_spec.embedding_indices.emplace_back(
        TableId::kRingSize, std::min(rings[r].size(), kMaxRingSizeIndex));
    g.nodes.push_back(std::move(node));
  }

  auto edge = [&](int i, int j) { g.edges.emplace_back(std::min(i, j), std::max(i, j)); };
  for (int b = 0; b < g.bond_count; ++b) {
    const Bond& bond = mol.bond(b);
    edge(g.atom_token(bond.a), g.atom_token(bond.b));
    edge(g.atom_token(bond.a), g.bond_token(b));
    edge(g.atom_token(bond.b), g.bond_token(b));
  }
  for (int r = 0; r < g.ring_count; ++r)
    for (int a : rings[r].atom_indices) edge(g.ring_token(r), g.atom_token(a));
  for (int t = 1; t < g.n_tokens; ++t) edge(0, t);

  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

Tensor build_attention_mask(const TokenGraph& g) {
  const std::size_t n = static_cast<std::size_t>(g.n_tokens);
  Tensor mask({n, n}, kNonEdgeMask);
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = 0.0;
  for (const auto& [i, j] : g.edges) {
    mask(i, j) = 0.0;
    mask(j, i) = 0.0;
  }
  return mask;
}

EmbeddingTables make_embedding_tables(std::size_t width, Rng& rng) {
  EmbeddingTables t;
  for (std::size_t k = 0; k < kTableCount; ++k) {
    t.tables[k] = glorot_uniform(table_rows(static_cast<TableId>(k)), width, rng);
  }
  return t;
}

std::vector<std::vector<Lookup>> token_lookups(const TokenGraph& g) {
  std::vector<std::vector<Lookup>> lookups(g.nodes.size());
  for (std::size_t t = 0; t < g.nodes.size(); ++t) {
    for (const auto& [table, row] : g.nodes[t].init_spec.embedding_indices) {
      lookups[t].push_back(Lookup{static_cast<std::size_t>(table), static_cast<std::size_t>(row)});
    }
  }
  return lookups;
}

Tensor token_additive(const TokenGraph& g, std::size_t width) {
  Tensor out({g.nodes.size(), width});
  for (std::size_t t = 0; t < g.nodes.size(); ++t)
    for (const auto& [dim, value] : g.nodes[t].init_spec.additive_scalars)
      out(t, static_cast<std::size_t>(dim)) += value;
  return out;
}

Tensor token_features(const TokenGraph& g, const EmbeddingTables& tables) {
  const std::size_t width = tables.tables[0].cols();
  Tensor out = token_additive(g, width);
  for (std::size_t t = 0; t < g.nodes.size(); ++t) {
    for (const auto& [table, row] : g.nodes[t].init_spec.embedding_indices) {
      const Tensor& tab = tables.tables[static_cast<std::size_t>(table)];
      for (std::size_t c = 0; c < width; ++c) out(t, c) += tab(static_cast<std::size_t>(row), c);
    }
  }
  return out;
}

Tensor init_token_features(const TokenGraph& g, std::size_t width, std::uint64_t rng_seed) {
  if (width < 1) fail(ErrorCode::kInvalidArgument, "init_token_features: width must be >= 1");
  Rng rng(rng_seed);
  return token_features(g, make_embedding_tables(width, rng));
}

nlohmann::json token_graph_to_json(const TokenGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TokenNode& node : g.nodes) {
    nlohmann::json n;
    n["kind"] = kind_name(node.kind);
    n["source_index"] = node.source_index ? nlohmann::json(*node.source_index) : nlohmann::json();
    nlohmann::json init = nlohmann::json::array();
    for (const auto& [table, row] : node.init_spec.embedding_indices)
      init.push_back({{"table", table_name(table)}, {"index", row}});
    n["init"] = init;
    nlohmann::json add = nlohmann::json::array();
    for (const auto& [dim, value] : node.init_spec.additive_scalars)
      add.push_back({{"dim", dim}, {"value", value}});
    n["additive"] = add;
    nodes.push_back(std::move(n));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : g.edges) edges.push_back({i, j});
  return {{"n_tokens", g.n_tokens}, {"nodes", nodes}, {"edges", edges}};
}

}  // namespace molstack
