// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Deep graph transformer over molecular graphs: TransformerConv message
// passing inside pre-activation residual layers,
//
//   x <- x + conv(gelu(LN(x))),
//
// then a final gelu(LN(x)), graph pooling (mean or pointwise dense) and a
// dense head.
//
// Row-vector convention throughout: a node embedding is a row of x, and
// W1..W4 are [d x d] matrices applied as x W.

#ifndef MOLSTACK_PD_DGN_H_
#define MOLSTACK_PD_DGN_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "molstack/nn.h"
#include "molstack/smiles.h"
#include "molstack/tensor.h"

namespace molstack {

enum class Pooling : std::uint8_t { kMean, kPointwiseDense };

std::string_view pooling_name(Pooling pooling);
Pooling pooling_from_name(std::string_view name);  // throws kInvalidArgument

struct PDConfig {
  int n_layers = 3;
  int hidden = 64;
  int n_heads = 4;
  Pooling pooling = Pooling::kPointwiseDense;
  // Keep the 1/N factor of the pointwise dense readout.
  bool strict_eq5 = true;
  // Adds embedded bond features to the key input of every message.
  bool edge_features = false;
  double max_lr = 1e-3;
  double min_lr = 1e-8;
  int epochs = 10;
  int batch_size = 25;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static PDConfig from_json(const nlohmann::json& j);
};

// Integer node codes (9 per atom) and edge codes (3 per bond).
inline constexpr std::size_t kNodeFeatureCount = 9;
inline constexpr std::size_t kEdgeFeatureCount = 3;
using NodeCodes = std::array<int, kNodeFeatureCount>;
using EdgeCodes = std::array<int, kEdgeFeatureCount>;

// Vocabulary size of each code:
//   element, degree (<= 11), charge + 2 (clamped), aromatic, in ring,
//   ring count (<= 3), smallest ring size (0 = none, <= 15),
//   heteroatom neighbours (<= 4), double/triple bond count (<= 3).
const std::array<std::size_t, kNodeFeatureCount>& node_feature_sizes();
//   bond order, in ring, both endpoints aromatic.
const std::array<std::size_t, kEdgeFeatureCount>& edge_feature_sizes();

struct MolFeatures {
  std::vector<NodeCodes> nodes;
  // Directed edges (src, dst); every bond appears in both directions.
  std::vector<std::pair<int, int>> edges;
  std::vector<EdgeCodes> edge_codes;  // parallel to edges
};

MolFeatures featurize(const MolGraph& mol);

// Several graphs laid out block-diagonally.
struct GraphBatch {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // (src, dst) into the batch
  std::vector<int> graph_id;               // per node, non-decreasing
  int n_graphs = 0;

  // Throws kShapeMismatch on out-of-range ids or cross-graph edges.
  void validate() const;
  std::vector<int> graph_sizes() const;
};

struct PDBatch {
  GraphBatch graph;
  std::vector<NodeCodes> node_codes;
  std::vector<EdgeCodes> edge_codes;
};

PDBatch make_pd_batch(std::span<const MolFeatures* const> molecules);

struct ConvVars {
  Var w1;  // root
  Var w2;  // value
  Var w3;  // query
  Var w4;  // key
};

// x'_i = x_i W1 + sum_{j -> i} a_ij x_j W2 with, per head,
// a_ij = softmax_j((x_i W3) . (x_j W4) / sqrt(d_head)). Nodes without
// incoming edges get x_i W1. `edge_embedding` ([edges x d], parallel to
// batch.edges) is added to the key input when given.
Var transformer_conv(Var x, const GraphBatch& batch, const ConvVars& conv, int n_heads,
                     const Var* edge_embedding = nullptr);

struct GcnLayerVars {
  Var ln_gain, ln_bias;
  ConvVars conv;
};

// x + conv(gelu(layer_norm(x))).
Var deep_gcn_layer(Var x, const GraphBatch& batch, const GcnLayerVars& layer, int n_heads,
                   const Var* edge_embedding = nullptr);

// Throws kEmptyGraph if some graph has no nodes.
Var mean_pool(Var x, const GraphBatch& batch);

// [n_graphs x n_nodes] per-graph softmax of x W (zero outside the graph).
Var pd_pool_weights(Var x, const GraphBatch& batch, Var w);
// G_g = (1/N_g) sum_i a_i x_i, or without the 1/N_g when !strict.
Var pd_pool(Var x, const GraphBatch& batch, Var w, bool strict = true);

struct PDLayerIndex {
  std::size_t ln_gain, ln_bias, w1, w2, w3, w4;
};

class PDModel {
 public:
  explicit PDModel(const PDConfig& cfg);

  const PDConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const std::array<std::size_t, kNodeFeatureCount>& node_tables() const { return node_tables_; }
  const std::array<std::size_t, kEdgeFeatureCount>& edge_tables() const { return edge_tables_; }
  const std::vector<PDLayerIndex>& layers() const { return layers_; }
  std::size_t final_gain() const { return final_gain_; }
  std::size_t final_bias() const { return final_bias_; }
  std::optional<std::size_t> pool_weight() const { return pool_w_; }
  std::size_t head_weight() const { return head_w_; }
  std::size_t head_bias() const { return head_b_; }

  bool operator==(const PDModel& other) const { return params_ == other.params_; }

 private:
  PDConfig config_;
  ParamStore params_;
  std::array<std::size_t, kNodeFeatureCount> node_tables_{};
  std::array<std::size_t, kEdgeFeatureCount> edge_tables_{};
  std::vector<PDLayerIndex> layers_;
  std::optional<std::size_t> pool_w_;
  std::size_t final_gain_ = 0, final_bias_ = 0, head_w_ = 0, head_b_ = 0;
};

// [n_graphs x 1] predictions on `tape` with bound = model.params().bind(tape).
Var pd_forward_tape(const PDModel& model, const std::vector<Var>& bound, const PDBatch& batch);

std::vector<double> pd_predict(const PDModel& model, const std::vector<MolFeatures>& molecules);

struct PDExample {
  MolFeatures features;
  double target = 0.0;
};

struct PDTrainResult {
  PDModel model;
  TrainHistory history;
};

// Adam on L1 loss with the sine learning-rate schedule.
PDTrainResult pd_train(const std::vector<PDExample>& dataset, const PDConfig& cfg);

}  // namespace molstack

#endif  // MOLSTACK_PD_DGN_H_
