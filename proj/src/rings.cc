// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimum cycle basis. Candidates are the shortest cycle through every bond
// plus Horton's cycles P(x,u) + (u,v) + P(v,x) over BFS trees rooted at each
// atom; the Horton set is known to contain a minimum cycle basis. Candidates
// are sorted by length and accepted greedily while linearly independent over
// GF(2) in the bond space.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <set>
#include <tuple>

#include "molstack/smiles.h"

namespace molstack {
namespace {

using EdgeSet = std::vector<std::uint64_t>;

struct Candidate {
  std::vector<int> cycle;   // atoms in cyclic order
  EdgeSet edges;
  std::vector<int> sorted;  // sorted member atoms, for ordering
};

struct BfsTree {
  std::vector<int> parent;
  std::vector<int> depth;
};

BfsTree bfs(const MolGraph& mol, int root) {
  BfsTree tree{std::vector<int>(mol.atom_count(), -1),
               std::vector<int>(mol.atom_count(), -1)};
  std::deque<int> queue{root};
  tree.depth[root] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : mol.neighbors(u)) {
      if (tree.depth[v] < 0) {
        tree.depth[v] = tree.depth[u] + 1;
        tree.parent[v] = u;
        queue.push_back(v);
      }
    }
  }
  return tree;
}

// Path from the BFS root to `to`, root first.
std::vector<int> tree_path(const BfsTree& tree, int to) {
  std::vector<int> path;
  for (int v = to; v >= 0; v = tree.parent[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

void set_bit(EdgeSet& set, int bit) { set[bit / 64] |= std::uint64_t{1} << (bit % 64); }
bool test_bit(const EdgeSet& set, int bit) { return (set[bit / 64] >> (bit % 64)) & 1U; }

std::vector<int> canonical_cycle(const std::vector<int>& cycle) {
  const auto min_it = std::min_element(cycle.begin(), cycle.end());
  std::vector<int> out(cycle.size());
  const std::size_t n = cycle.size();
  const std::size_t start = static_cast<std::size_t>(min_it - cycle.begin());
  const int next = cycle[(start + 1) % n];
  const int prev = cycle[(start + n - 1) % n];
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = next <= prev ? cycle[(start + k) % n] : cycle[(start + n - k) % n];
  }
  return out;
}

std::optional<Candidate> make_candidate(const MolGraph& mol,
                                        std::vector<int> cycle) {
  const std::size_t n = cycle.size();
  if (n < 3) return std::nullopt;
  std::vector<int> sorted = cycle;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    return std::nullopt;
  }
  Candidate c;
  c.edges.assign((mol.bond_count() + 63) / 64, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const int bond = mol.bond_between(cycle[k], cycle[(k + 1) % n]);
    if (bond < 0) return std::nullopt;
    set_bit(c.edges, bond);
  }
  c.cycle = canonical_cycle(cycle);
  c.sorted = std::move(sorted);
  return c;
}

// Shortest cycle through bond (u, v): BFS from u to v avoiding that bond.
std::optional<std::vector<int>> shortest_cycle_through(const MolGraph& mol,
                                                        int u, int v) {
  std::vector<int> parent(mol.atom_count(), -2);
  std::deque<int> queue{u};
  parent[u] = -1;
  while (!queue.empty()) {
    const int x = queue.front();
    queue.pop_front();
    for (int y : mol.neighbors(x)) {
      if (x == u && y == v) continue;
      if (parent[y] != -2) continue;
      parent[y] = x;
      if (y == v) {
        std::vector<int> path;
        for (int w = v; w >= 0; w = parent[w]) path.push_back(w);
        return path;
      }
      queue.push_back(y);
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<Ring> perceive_rings(const MolGraph& mol) {
  const int target = cyclomatic_number(mol);
  if (target <= 0) return {};

  std::vector<Candidate> candidates;
  std::set<EdgeSet> seen;
  auto offer = [&](std::vector<int> cycle) {
    auto c = make_candidate(mol, std::move(cycle));
    if (c && seen.insert(c->edges).second) candidates.push_back(std::move(*c));
  };

  for (const Bond& bond : mol.bonds()) {
    if (auto path = shortest_cycle_through(mol, bond.a, bond.b)) offer(*path);
  }
  for (int root = 0; root < mol.atom_count(); ++root) {
    const BfsTree tree = bfs(mol, root);
    for (const Bond& bond : mol.bonds()) {
      if (tree.depth[bond.a] < 0) continue;
      std::vector<int> left = tree_path(tree, bond.a);
      std::vector<int> right = tree_path(tree, bond.b);
      // Paths must share only the root.
      std::vector<int> ls(left.begin() + 1, left.end());
      std::vector<int> rs(right.begin() + 1, right.end());
      std::sort(ls.begin(), ls.end());
      std::sort(rs.begin(), rs.end());
      std::vector<int> common;
      std::set_intersection(ls.begin(), ls.end(), rs.begin(), rs.end(),
                            std::back_inserter(common));
      if (!common.empty()) continue;
      std::vector<int> cycle = left;
      cycle.insert(cycle.end(), right.rbegin(), right.rend() - 1);
      offer(std::move(cycle));
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& x, const Candidate& y) {
              return std::forward_as_tuple(x.cycle.size(), x.sorted, x.cycle) <
                     std::forward_as_tuple(y.cycle.size(), y.sorted, y.cycle);
            });

  // Greedy GF(2) independence with a reduced row-echelon basis keyed by
  // pivot bit.
  std::vector<std::pair<int, EdgeSet>> basis;
  std::vector<Ring> rings;
  for (const Candidate& c : candidates) {
    EdgeSet v = c.edges;
    for (const auto& [pivot, row] : basis) {
      if (test_bit(v, pivot)) {
        for (std::size_t w = 0; w < v.size(); ++w) v[w] ^= row[w];
      }
    }
    int pivot = -1;
    for (int b = 0; b < mol.bond_count(); ++b) {
      if (test_bit(v, b)) {
        pivot = b;
        break;
      }
    }
    if (pivot < 0) continue;
    for (auto& [other_pivot, row] : basis) {
      if (test_bit(row, pivot)) {
        for (std::size_t w = 0; w < row.size(); ++w) row[w] ^= v[w];
      }
    }
    basis.emplace_back(pivot, v);
    rings.push_back(Ring{c.cycle});
    if (static_cast<int>(rings.size()) == target) break;
  }

  std::sort(rings.begin(), rings.end(), [](const Ring& x, const Ring& y) {
    return std::forward_as_tuple(x.atom_indices.size(), x.atom_indices) <
           std::forward_as_tuple(y.atom_indices.size(), y.atom_indices);
  });
  return rings;
}

}  // namespace molstack
