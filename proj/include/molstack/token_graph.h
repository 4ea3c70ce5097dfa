// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Token graph over a molecule: one token for the whole molecule, one per
// atom, one per bond and one per ring. Token order is molecule, atoms,
// bonds, rings, each block in source order.
//
// Edges:
//   * atom - atom for every bond,
//   * atom - bond token for both endpoints of every bond,
//   * ring token - atom for every ring member,
//   * molecule token - every other token.

#ifndef MOLSTACK_TOKEN_GRAPH_H_
#define MOLSTACK_TOKEN_GRAPH_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "molstack/rng.h"
#include "molstack/smiles.h"
#include "molstack/tensor.h"

namespace molstack {

enum class TokenKind : std::uint8_t { kMolecule, kAtom, kBond, kRing };

// Embedding tables shared by all token graphs.
enum class TableId : std::uint8_t {
  kAtomCount,  // 21 rows, index min(heavy atoms, 20)
  kElement,    // kElementCount rows
  kAromatic,   // 2 rows
  kCharge,     // 5 rows, charge clamped to [-2, 2] and shifted by 2
  kDegree,     // 12 rows, degree clamped to 11
  kBondOrder,  // kBondOrderCount rows
  kRingSize,   // 16 rows, index min(size, 15)
};
inline constexpr std::size_t kTableCount = 7;
inline constexpr int kMaxAtomCountIndex = 20;
inline constexpr int kMaxRingSizeIndex = 15;
inline constexpr int kMaxDegreeIndex = 11;

std::size_t table_rows(TableId table);

struct FeatureInitSpec {
  std::vector<std::pair<TableId, int>> embedding_indices;
  // Added after the lookup sum: (dimension, value).
  std::vector<std::pair<int, double>> additive_scalars;

  bool operator==(const FeatureInitSpec&) const = default;
};

struct TokenNode {
  TokenKind kind = TokenKind::kMolecule;
  std::optional<int> source_index;  // absent for the molecule token
  FeatureInitSpec init_spec;

  bool operator==(const TokenNode&) const = default;
};

struct TokenGraph {
  std::vector<TokenNode> nodes;
  // Unordered pairs stored as (i, j) with i < j, sorted, unique.
  std::vector<std::pair<int, int>> edges;
  int n_tokens = 0;
  int atom_count = 0;
  int bond_count = 0;
  int ring_count = 0;

  int atom_token(int atom) const { return 1 + atom; }
  int bond_token(int bond) const { return 1 + atom_count + bond; }
  int ring_token(int ring) const { return 1 + atom_count + bond_count + ring; }

  bool operator==(const TokenGraph&) const = default;
};

// Throws kInconsistentRings if a ring references a missing atom or two
// consecutive members are not bonded.
TokenGraph build_token_graph(const MolGraph& mol, const std::vector<Ring>& rings);

// Mask value for token pairs that are not joined by an edge.
inline constexpr double kNonEdgeMask = -10.0;

// n_tokens x n_tokens additive attention mask: 0 on edges and the diagonal,
// kNonEdgeMask elsewhere.
Tensor build_attention_mask(const TokenGraph& g);

// One Glorot-uniform table per TableId, width columns each.
struct EmbeddingTables {
  std::array<Tensor, kTableCount> tables;
};
EmbeddingTables make_embedding_tables(std::size_t width, Rng& rng);

// Lookup list per token, suitable for embedding_bag().
std::vector<std::vector<Lookup>> token_lookups(const TokenGraph& g);
// Dense [n_tokens x width] matrix of the additive scalars.
Tensor token_additive(const TokenGraph& g, std::size_t width);

// Sum of looked-up rows plus additive scalars.
Tensor token_features(const TokenGraph& g, const EmbeddingTables& tables);
// Samples fresh tables from `rng_seed` and returns token_features().
Tensor init_token_features(const TokenGraph& g, std::size_t width,
                           std::uint64_t rng_seed);

nlohmann::json token_graph_to_json(const TokenGraph& g);

}  // namespace molstack

#endif  // MOLSTACK_TOKEN_GRAPH_H_
