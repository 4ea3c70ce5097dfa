// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Masked-attention transformer over token graphs. Each layer is pre-norm:
//
//   h = x + MHA(LN1(x), mask [+ structural bias])
//   h = h + FFN1(LN2(h))
//   y = h + FFN2(LN3(h))          FFN(u) = W2 gelu(W1 u + b1) + b2
//
// The prediction is a dense head on the final, layer-normed embedding of
// the molecule token.

#ifndef MOLSTACK_MOL_TRANSFORMER_H_
#define MOLSTACK_MOL_TRANSFORMER_H_

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "molstack/channels.h"
#include "molstack/nn.h"
#include "molstack/smiles.h"
#include "molstack/tensor.h"
#include "molstack/token_graph.h"

namespace molstack {

struct MTConfig {
  int n_layers = 2;
  int width = 64;
  int n_heads = 4;
  int ffn_multiplier = 4;
  double max_lr = 1e-3;
  double min_lr = 1e-8;
  int epochs = 10;
  int batch_size = 25;
  std::uint64_t seed = 0;

  // Structural-channel training (attention bias over atom pairs, optional
  // denoising and fingerprint/descriptor regularization).
  bool structural = false;
  ChannelSpec channels;
  double noise_sigma = 0.2;
  bool denoise = false;
  double kpgt_lambda = 0.0;
  bool kpgt_mse_on_fingerprint = false;
  double stochastic_depth = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static MTConfig from_json(const nlohmann::json& j);
};

struct RegHeadIndex {
  std::size_t fp_weight, fp_bias, d_weight, d_bias;
};

struct MTLayerIndex {
  std::size_t ln1_gain, ln1_bias;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gain, ln2_bias, ffn1_w1, ffn1_b1, ffn1_w2, ffn1_b2;
  std::size_t ln3_gain, ln3_bias, ffn2_w1, ffn2_b1, ffn2_w2, ffn2_b2;
};

class MTModel {
 public:
  // Parameters are drawn from cfg.seed.
  explicit MTModel(const MTConfig& cfg);

  const MTConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t table(TableId id) const { return tables_[static_cast<std::size_t>(id)]; }
  const std::vector<MTLayerIndex>& layers() const { return layers_; }
  std::size_t final_gain() const { return final_gain_; }
  std::size_t final_bias() const { return final_bias_; }
  std::size_t head_weight() const { return head_w_; }
  std::size_t head_bias() const { return head_b_; }

  // Present only when config().structural.
  std::optional<std::size_t> spd_table() const { return spd_; }
  std::optional<std::size_t> kernel_weights() const { return kernel_; }
  std::optional<std::size_t> denoise_weight() const { return denoise_w_; }
  std::optional<std::size_t> denoise_bias() const { return denoise_b_; }
  std::optional<RegHeadIndex> reg_heads() const;

  bool operator==(const MTModel& other) const {
    return params_ == other.params_;
  }

 private:
  MTConfig config_;
  ParamStore params_;
  std::array<std::size_t, kTableCount> tables_{};
  std::vector<MTLayerIndex> layers_;
  std::size_t final_gain_ = 0, final_bias_ = 0, head_w_ = 0, head_b_ = 0;
  std::optional<std::size_t> spd_, kernel_, denoise_w_, denoise_b_;
  std::optional<std::size_t> fp_w_, fp_b_, d_w_, d_b_;
};

struct MTBlockVars {
  Var ln1_gain, ln1_bias;
  Var wq, bq, wk, bk, wv, bv, wo, bo;
  Var ln2_gain, ln2_bias, ffn1_w1, ffn1_b1, ffn1_w2, ffn1_b2;
  Var ln3_gain, ln3_bias, ffn2_w1, ffn2_b1, ffn2_w2, ffn2_b2;
};

MTBlockVars block_vars(const std::vector<Var>& bound, const MTLayerIndex& index);

// softmax(q k^T / sqrt(d) [+ bias], mask) v for one head.
Var attention_head(Var q, Var k, Var v, const Tensor& mask, const Var* bias = nullptr);

Var mt_block(Var x, const Tensor& mask, const MTBlockVars& p, int n_heads,
             const Var* bias = nullptr);

// Mask value for padding rows/columns in a padded batch.
inline constexpr double kPaddingMask = -1e9;

// A token graph padded to a fixed token count: padding tokens have no
// lookups and are masked with kPaddingMask in both directions.
struct PaddedTokens {
  std::vector<std::vector<Lookup>> lookups;
  Tensor additive;
  Tensor mask;
  int n_real = 0;
};

PaddedTokens pad_tokens(const TokenGraph& g, int n_padded, int width);

// Per-example structural inputs used during training.
struct StructuralInputs {
  MolGraph mol;
  Conformer conformer;
  RegTargets reg;
};

struct MTExample {
  TokenGraph graph;
  double target = 0.0;
  std::optional<StructuralInputs> structural;
};

MTExample make_mt_example(const MolGraph& mol, double target, bool with_structural,
                          std::uint64_t conformer_seed);

struct MTForward {
  Var prediction;  // [1 x 1]
  Var hidden;      // [n x width], after the final layer norm
  std::optional<Var> aux_loss;  // denoising + regularization terms
};

// Builds the forward pass on `tape` with `bound` = model.params().bind(tape).
// `rng` enables training behaviour (channel sampling, position noise and
// stochastic depth); without it the 2D channel is used when structural.
MTForward mt_forward_tape(const MTModel& model, const std::vector<Var>& bound,
                          const PaddedTokens& tokens, const StructuralInputs* structural,
                          Rng* rng);

// Inference. `structural` supplies the molecule for the 2D channel bias of
// structural models and is ignored otherwise.
double mt_forward(const MTModel& model, const TokenGraph& g,
                  const StructuralInputs* structural = nullptr);
std::vector<double> mt_predict(const MTModel& model, const std::vector<MTExample>& examples);

struct MTTrainResult {
  MTModel model;
  TrainHistory history;
};

// Adam on L1 loss (plus auxiliary terms when structural) with the sine
// learning-rate schedule over epochs * ceil(n / batch_size) steps. Throws
// kDivergedLoss on a non-finite loss.
MTTrainResult mt_train(const std::vector<MTExample>& dataset, const MTConfig& cfg);

}  // namespace molstack

#endif  // MOLSTACK_MOL_TRANSFORMER_H_
