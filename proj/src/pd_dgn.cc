// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/pd_dgn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "molstack/error.h"

namespace molstack {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::kInvalidArgument, "PDConfig: " + msg);
}

void require_nonempty_graphs(const GraphBatch& batch, const char* op) {
  const std::vector<int> sizes = batch.graph_sizes();
  for (int g = 0; g < batch.n_graphs; ++g) {
    if (sizes[g] == 0) {
      fail(ErrorCode::kEmptyGraph, std::string(op) + ": graph " + std::to_string(g) + " has no nodes");
    }
  }
}

void require_rows(const char* op, Var x, const GraphBatch& batch) {
  if (x.value().rank() != 2 || x.rows() != static_cast<std::size_t>(batch.n_nodes)) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": x is " + shape_string(x.shape()) +
                                        " for " + std::to_string(batch.n_nodes) + " nodes");
  }
}

}  // namespace

std::string_view pooling_name(Pooling pooling) {
  return pooling == Pooling::kMean ? "mean" : "pointwise_dense";
}

Pooling pooling_from_name(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "pointwise_dense") return Pooling::kPointwiseDense;
  fail(ErrorCode::kInvalidArgument, "unknown pooling '" + std::string(name) + "'");
}

void PDConfig::validate() const {
  require(n_layers >= 0, "n_layers must be >= 0");
  require(hidden >= 1, "hidden must be >= 1");
  require(n_heads >= 1 && hidden % n_heads == 0, "n_heads must divide hidden");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_lr > 0.0 && min_lr >= 0.0 && min_lr <= max_lr, "need 0 <= min_lr <= max_lr, max_lr > 0");
}

nlohmann::json PDConfig::to_json() const {
  return {{"n_layers", n_layers},       {"hidden", hidden},
          {"n_heads", n_heads},         {"pooling", std::string(pooling_name(pooling))},
          {"strict_eq5", strict_eq5},   {"edge_features", edge_features},
          {"max_lr", max_lr},           {"min_lr", min_lr},
          {"epochs", epochs},           {"batch_size", batch_size},
          {"seed", seed}};
}

PDConfig PDConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kFormat, "PDConfig: expected a JSON object");
  PDConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.hidden = j.value("hidden", c.hidden);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.pooling = pooling_from_name(j.value("pooling", std::string(pooling_name(c.pooling))));
    c.strict_eq5 = j.value("strict_eq5", c.strict_eq5);
    c.edge_features = j.value("edge_features", c.edge_features);
    c.max_lr = j.value("max_lr", c.max_lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("PDConfig: ") + e.what());
  }
  c.validate();
  return c;
}

const std::array<std::size_t, kNodeFeatureCount>& node_feature_sizes() {
  static const std::array<std::size_t, kNodeFeatureCount> sizes{
      kElementCount, 12, 5, 2, 2, 4, 16, 5, 4};
  return sizes;
}

const std::array<std::size_t, kEdgeFeatureCount>& edge_feature_sizes() {
  static const std::array<std::size_t, kEdgeFeatureCount> sizes{kBondOrderCount, 2, 2};
  return sizes;
}

MolFeatures featurize(const MolGraph& mol) {
  const int n = mol.atom_count();
  std::vector<int> ring_count(n, 0), min_ring(n, 0);
  std::vector<bool> bond_in_ring(mol.bond_count(), false);
  for (const Ring& ring : perceive_rings(mol)) {
    const auto& m = ring.atom_indices;
    for (std::size_t k = 0; k < m.size(); ++k) {
      ++ring_count[m[k]];
      if (min_ring[m[k]] == 0 || ring.size() < min_ring[m[k]]) min_ring[m[k]] = ring.size();
      bond_in_ring[mol.bond_between(m[k], m[(k + 1) % m.size()])] = true;
    }
  }
  MolFeatures f;
  for (int i = 0; i < n; ++i) {
    const Atom& atom = mol.atom(i);
    int hetero = 0, multiple = 0;
    for (int j : mol.neighbors(i)) {
      if (mol.atom(j).element != Element::C) ++hetero;
      const BondOrder order = mol.bond(mol.bond_between(i, j)).order;
      if (order == BondOrder::kDouble || order == BondOrder::kTriple) ++multiple;
    }
    f.nodes.push_back(NodeCodes{static_cast<int>(atom.element),
                                std::min(mol.degree(i), 11),
                                std::clamp(atom.formal_charge, -2, 2) + 2,
                                atom.aromatic ? 1 : 0,
                                ring_count[i] > 0 ? 1 : 0,
                                std::min(ring_count[i], 3),
                                std::min(min_ring[i], 15),
                                std::min(hetero, 4),
                                std::min(multiple, 3)});
  }
  for (int b = 0; b < mol.bond_count(); ++b) {
    const Bond& bond = mol.bond(b);
    const EdgeCodes codes{static_cast<int>(bond.order), bond_in_ring[b] ? 1 : 0,
                          mol.atom(bond.a).aromatic && mol.atom(bond.b).aromatic ? 1 : 0};
    f.edges.emplace_back(bond.a, bond.b);
    f.edge_codes.push_back(codes);
    f.edges.emplace_back(bond.b, bond.a);
    f.edge_codes.push_back(codes);
  }
  return f;
}

void GraphBatch::validate() const {
  if (static_cast<int>(graph_id.size()) != n_nodes) {
    fail(ErrorCode::kShapeMismatch, "GraphBatch: graph_id length differs from n_nodes");
  }
  for (int i = 0; i < n_nodes; ++i) {
    if (graph_id[i] < 0 || graph_id[i] >= n_graphs || (i > 0 && graph_id[i] < graph_id[i - 1])) {
      fail(ErrorCode::kShapeMismatch, "GraphBatch: bad graph id at node " + std::to_string(i));
    }
  }
  for (const auto& [s, d] : edges) {
    if (s < 0 || d < 0 || s >= n_nodes || d >= n_nodes || graph_id[s] != graph_id[d]) {
      fail(ErrorCode::kShapeMismatch,
           "GraphBatch: edge " + std::to_string(s) + "->" + std::to_string(d) + " is invalid");
    }
  }
}

std::vector<int> GraphBatch::graph_sizes() const {
  std::vector<int> sizes(n_graphs, 0);
  for (int g : graph_id) ++sizes[g];
  return sizes;
}

PDBatch make_pd_batch(std::span<const MolFeatures* const> molecules) {
  PDBatch b;
  b.graph.n_graphs = static_cast<int>(molecules.size());
  for (std::size_t g = 0; g < molecules.size(); ++g) {
    const MolFeatures& m = *molecules[g];
    const int offset = b.graph.n_nodes;
    for (const NodeCodes& codes : m.nodes) {
      b.node_codes.push_back(codes);
      b.graph.graph_id.push_back(static_cast<int>(g));
    }
    b.graph.n_nodes += static_cast<int>(m.nodes.size());
    for (std::size_t e = 0; e < m.edges.size(); ++e) {
      b.graph.edges.emplace_back(m.edges[e].first + offset, m.edges[e].second + offset);
      b.edge_codes.push_back(m.edge_codes[e]);
    }
  }
  return b;
}

Var transformer_conv(Var x, const GraphBatch& batch, const ConvVars& conv, int n_heads,
                     const Var* edge_embedding) {
  require_rows("transformer_conv", x, batch);
  const std::size_t d = x.cols();
  if (n_heads < 1 || d % static_cast<std::size_t>(n_heads) != 0) {
    fail(ErrorCode::kShapeMismatch, "transformer_conv: heads do not divide width");
  }
  if (edge_embedding != nullptr && (edge_embedding->rows() != batch.edges.size() ||
                                    edge_embedding->cols() != d)) {
    fail(ErrorCode::kShapeMismatch, "transformer_conv: edge embedding shape");
  }
  const std::size_t n = x.rows();
  const std::size_t hd = d / static_cast<std::size_t>(n_heads);

  // Row i attends over the sources of edges j -> i.
  Tensor mask({n, n}, kNegInf);
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  std::vector<std::size_t> dst_rows;
  for (const auto& [s, t] : batch.edges) {
    mask(t, s) = 0.0;
    positions.emplace_back(t, s);
    dst_rows.push_back(static_cast<std::size_t>(t));
  }

  Var root = matmul(x, conv.w1);
  Var value = matmul(x, conv.w2);
  Var query = matmul(x, conv.w3);
  Var key = matmul(x, conv.w4);
  std::optional<Var> edge_key;
  if (edge_embedding != nullptr && !batch.edges.empty()) edge_key = matmul(*edge_embedding, conv.w4);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> heads;
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * hd;
    Var q = slice_cols(query, off, hd);
    Var scores = matmul(q, transpose(slice_cols(key, off, hd)));
    if (edge_key) {
      // q_i . (e_ij W4) lands on the (i, j) score.
      Var per_edge = sum(mul(gather_rows(q, dst_rows), slice_cols(*edge_key, off, hd)), 1);
      scores = add(scores, scatter_matrix(per_edge, positions, n, n));
    }
    Var alpha = softmax_lastdim(scale(scores, inv_sqrt), &mask);
    heads.push_back(matmul(alpha, slice_cols(value, off, hd)));
  }
  return add(root, concat_cols(heads));
}

Var deep_gcn_layer(Var x, const GraphBatch& batch, const GcnLayerVars& layer, int n_heads,
                   const Var* edge_embedding) {
  Var h = gelu(layer_norm(x, layer.ln_gain, layer.ln_bias));
  return add(x, transformer_conv(h, batch, layer.conv, n_heads, edge_embedding));
}

Var mean_pool(Var x, const GraphBatch& batch) {
  require_rows("mean_pool", x, batch);
  require_nonempty_graphs(batch, "mean_pool");
  const std::vector<int> sizes = batch.graph_sizes();
  const std::size_t n = x.rows();
  Tensor m({static_cast<std::size_t>(batch.n_graphs), n});
  for (std::size_t i = 0; i < n; ++i) {
    const int g = batch.graph_id[i];
    m(static_cast<std::size_t>(g), i) = 1.0 / sizes[g];
  }
  return matmul(x.tape()->constant(std::move(m)), x);
}

Var pd_pool_weights(Var x, const GraphBatch& batch, Var w) {
  require_rows("pd_pool", x, batch);
  require_nonempty_graphs(batch, "pd_pool");
  if (w.rows() != x.cols() || w.cols() != 1) {
    fail(ErrorCode::kShapeMismatch, "pd_pool: W must be [d x 1], got " + shape_string(w.shape()));
  }
  Tape& tape = *x.tape();
  const std::size_t n = x.rows();
  const std::size_t graphs = static_cast<std::size_t>(batch.n_graphs);
  Var scores = transpose(matmul(x, w));  // [1 x n]
  Var tiled = matmul(tape.constant(Tensor({graphs, 1}, 1.0)), scores);
  Tensor mask({graphs, n}, kNegInf);
  for (std::size_t i = 0; i < n; ++i) mask(static_cast<std::size_t>(batch.graph_id[i]), i) = 0.0;
  return softmax_lastdim(tiled, &mask);
}

Var pd_pool(Var x, const GraphBatch& batch, Var w, bool strict) {
  Var pooled = matmul(pd_pool_weights(x, batch, w), x);
  if (!strict) return pooled;
  const std::vector<int> sizes = batch.graph_sizes();
  const std::size_t graphs = static_cast<std::size_t>(batch.n_graphs);
  Tensor inv_n({graphs, graphs});
  for (std::size_t g = 0; g < graphs; ++g) inv_n(g, g) = 1.0 / sizes[g];
  return matmul(x.tape()->constant(std::move(inv_n)), pooled);
}

PDModel::PDModel(const PDConfig& cfg) : config_(cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t d = static_cast<std::size_t>(cfg.hidden);
  for (std::size_t k = 0; k < kNodeFeatureCount; ++k) {
    node_tables_[k] = params_.add("node_emb." + std::to_string(k),
                                  glorot_uniform(node_feature_sizes()[k], d, rng));
  }
  if (cfg.edge_features) {
    for (std::size_t k = 0; k < kEdgeFeatureCount; ++k) {
      edge_tables_[k] = params_.add("edge_emb." + std::to_string(k),
                                    glorot_uniform(edge_feature_sizes()[k], d, rng));
    }
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "L" + std::to_string(l) + ".";
    PDLayerIndex ix{};
    ix.ln_gain = params_.add(p + "ln.g", Tensor({d}, 1.0));
    ix.ln_bias = params_.add(p + "ln.b", Tensor({d}, 0.0));
    ix.w1 = params_.add(p + "conv.w1", glorot_uniform(d, d, rng));
    ix.w2 = params_.add(p + "conv.w2", glorot_uniform(d, d, rng));
    ix.w3 = params_.add(p + "conv.w3", glorot_uniform(d, d, rng));
    ix.w4 = params_.add(p + "conv.w4", glorot_uniform(d, d, rng));
    layers_.push_back(ix);
  }
  final_gain_ = params_.add("final_ln.g", Tensor({d}, 1.0));
  final_bias_ = params_.add("final_ln.b", Tensor({d}, 0.0));
  if (cfg.pooling == Pooling::kPointwiseDense) pool_w_ = params_.add("pool.w", glorot_uniform(d, 1, rng));
  head_w_ = params_.add("head.w", glorot_uniform(d, 1, rng));
  head_b_ = params_.add("head.b", Tensor({1}, 0.0));
}

Var pd_forward_tape(const PDModel& model, const std::vector<Var>& bound, const PDBatch& batch) {
  const PDConfig& cfg = model.config();
  batch.graph.validate();
  auto lookups = [](const auto& codes) {
    std::vector<std::vector<Lookup>> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
      for (std::size_t k = 0; k < codes[i].size(); ++k)
        out[i].push_back(Lookup{k, static_cast<std::size_t>(codes[i][k])});
    return out;
  };
  std::vector<Var> node_tables;
  for (std::size_t ix : model.node_tables()) node_tables.push_back(bound[ix]);
  Var x = embedding_bag(node_tables, lookups(batch.node_codes));

  std::optional<Var> edges;
  if (cfg.edge_features && !batch.edge_codes.empty()) {
    std::vector<Var> edge_tables;
    for (std::size_t ix : model.edge_tables()) edge_tables.push_back(bound[ix]);
    edges = embedding_bag(edge_tables, lookups(batch.edge_codes));
  }
  const Var* edge_ptr = edges ? &*edges : nullptr;

  for (const PDLayerIndex& ix : model.layers()) {
    GcnLayerVars layer{bound[ix.ln_gain], bound[ix.ln_bias],
                       ConvVars{bound[ix.w1], bound[ix.w2], bound[ix.w3], bound[ix.w4]}};
    x = deep_gcn_layer(x, batch.graph, layer, cfg.n_heads, edge_ptr);
  }
  x = gelu(layer_norm(x, bound[model.final_gain()], bound[model.final_bias()]));
  Var pooled = cfg.pooling == Pooling::kMean
                   ? mean_pool(x, batch.graph)
                   : pd_pool(x, batch.graph, bound[*model.pool_weight()], cfg.strict_eq5);
  return linear(pooled, bound[model.head_weight()], bound[model.head_bias()]);
}

std::vector<double> pd_predict(const PDModel& model, const std::vector<MolFeatures>& molecules) {
  std::vector<double> out;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < molecules.size(); start += kChunk) {
    std::vector<const MolFeatures*> chunk;
    for (std::size_t i = start; i < std::min(molecules.size(), start + kChunk); ++i)
      chunk.push_back(&molecules[i]);
    Tape tape;
    const std::vector<Var> bound = model.params().bind(tape);
    const Tensor& pred = pd_forward_tape(model, bound, make_pd_batch(chunk)).value();
    out.insert(out.end(), pred.data.begin(), pred.data.end());
  }
  return out;
}

PDTrainResult pd_train(const std::vector<PDExample>& dataset, const PDConfig& cfg) {
  PDTrainResult result{PDModel(cfg), {}};
  PDModel& model = result.model;
  std::vector<MolFeatures> features;
  for (const PDExample& ex : dataset) features.push_back(ex.features);
  auto eval_mae = [&]() {
    const std::vector<double> pred = pd_predict(model, features);
    double total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) total += std::abs(pred[i] - dataset[i].target);
    return total / static_cast<double>(dataset.size());
  };
  auto batch_loss = [&](Tape& tape, const std::vector<Var>& bound,
                        std::span<const std::size_t> batch, Rng&) {
    std::vector<const MolFeatures*> mols;
    Tensor targets({batch.size(), 1});
    for (std::size_t k = 0; k < batch.size(); ++k) {
      mols.push_back(&dataset[batch[k]].features);
      targets(k, 0) = dataset[batch[k]].target;
    }
    return l1_loss(pd_forward_tape(model, bound, make_pd_batch(mols)), tape.constant(targets));
  };
  TrainLoopOptions loop{cfg.epochs, cfg.batch_size, cfg.min_lr, cfg.max_lr, cfg.seed};
  result.history = run_training(model.params(), dataset.size(), loop, batch_loss, eval_mae);
  return result;
}

}  // namespace molstack
