// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/mol_transformer.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "molstack/error.h"

namespace molstack {
namespace {

constexpr const char* kTableNames[kTableCount] = {
    "atom_count", "element", "aromatic", "charge", "degree", "bond_order", "ring_size"};

Tensor zeros_row(std::size_t n) { return Tensor({n}, 0.0); }
Tensor ones_row(std::size_t n) { return Tensor({n}, 1.0); }

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::kInvalidArgument, "MTConfig: " + msg);
}

std::size_t descriptor_head_width(const MTConfig& cfg) {
  return cfg.kpgt_mse_on_fingerprint ? kFingerprintBits : kDescriptorSize;
}

}  // namespace

void MTConfig::validate() const {
  require(n_layers >= 1, "n_layers must be >= 1");
  require(width >= 1, "width must be >= 1");
  require(n_heads >= 1 && width % n_heads == 0, "n_heads must divide width");
  require(ffn_multiplier >= 1, "ffn_multiplier must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_lr > 0.0 && min_lr >= 0.0 && min_lr <= max_lr, "need 0 <= min_lr <= max_lr, max_lr > 0");
  require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(kpgt_lambda >= 0.0, "kpgt_lambda must be >= 0");
  require(stochastic_depth >= 0.0 && stochastic_depth < 1.0, "stochastic_depth must be in [0, 1)");
  if (structural) channels.validate();
}

nlohmann::json MTConfig::to_json() const {
  return {{"n_layers", n_layers},
          {"width", width},
          {"n_heads", n_heads},
          {"ffn_multiplier", ffn_multiplier},
          {"max_lr", max_lr},
          {"min_lr", min_lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"structural", structural},
          {"mode_probs", channels.mode_probs},
          {"dirichlet", channels.dirichlet},
          {"dirichlet_alpha", channels.dirichlet_alpha},
          {"noise_sigma", noise_sigma},
          {"denoise", denoise},
          {"kpgt_lambda", kpgt_lambda},
          {"kpgt_mse_on_fingerprint", kpgt_mse_on_fingerprint},
          {"stochastic_depth", stochastic_depth}};
}

MTConfig MTConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kFormat, "MTConfig: expected a JSON object");
  MTConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.width = j.value("width", c.width);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
    c.max_lr = j.value("max_lr", c.max_lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.structural = j.value("structural", c.structural);
    c.channels.mode_probs = j.value("mode_probs", c.channels.mode_probs);
    c.channels.dirichlet = j.value("dirichlet", c.channels.dirichlet);
    c.channels.dirichlet_alpha = j.value("dirichlet_alpha", c.channels.dirichlet_alpha);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.denoise = j.value("denoise", c.denoise);
    c.kpgt_lambda = j.value("kpgt_lambda", c.kpgt_lambda);
    c.kpgt_mse_on_fingerprint = j.value("kpgt_mse_on_fingerprint", c.kpgt_mse_on_fingerprint);
    c.stochastic_depth = j.value("stochastic_depth", c.stochastic_depth);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("MTConfig: ") + e.what());
  }
  c.validate();
  return c;
}

MTModel::MTModel(const MTConfig& cfg) : config_(cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t w = static_cast<std::size_t>(cfg.width);
  const std::size_t f = w * static_cast<std::size_t>(cfg.ffn_multiplier);
  for (std::size_t k = 0; k < kTableCount; ++k) {
    tables_[k] = params_.add(std::string("emb.") + kTableNames[k],
                             glorot_uniform(table_rows(static_cast<TableId>(k)), w, rng));
  }
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    return params_.add(name, glorot_uniform(in, out, rng));
  };
  auto bias = [&](const std::string& name, std::size_t n) {
    return params_.add(name, zeros_row(n));
  };
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "L" + std::to_string(l) + ".";
    MTLayerIndex ix{};
    ix.ln1_gain = params_.add(p + "ln1.g", ones_row(w));
    ix.ln1_bias = bias(p + "ln1.b", w);
    ix.wq = dense(p + "attn.wq", w, w);
    ix.bq = bias(p + "attn.bq", w);
    ix.wk = dense(p + "attn.wk", w, w);
    ix.bk = bias(p + "attn.bk", w);
    ix.wv = dense(p + "attn.wv", w, w);
    ix.bv = bias(p + "attn.bv", w);
    ix.wo = dense(p + "attn.wo", w, w);
    ix.bo = bias(p + "attn.bo", w);
    ix.ln2_gain = params_.add(p + "ln2.g", ones_row(w));
    ix.ln2_bias = bias(p + "ln2.b", w);
    ix.ffn1_w1 = dense(p + "ffn1.w1", w, f);
    ix.ffn1_b1 = bias(p + "ffn1.b1", f);
    ix.ffn1_w2 = dense(p + "ffn1.w2", f, w);
    ix.ffn1_b2 = bias(p + "ffn1.b2", w);
    ix.ln3_gain = params_.add(p + "ln3.g", ones_row(w));
    ix.ln3_bias = bias(p + "ln3.b", w);
    ix.ffn2_w1 = dense(p + "ffn2.w1", w, f);
    ix.ffn2_b1 = bias(p + "ffn2.b1", f);
    ix.ffn2_w2 = dense(p + "ffn2.w2", f, w);
    ix.ffn2_b2 = bias(p + "ffn2.b2", w);
    layers_.push_back(ix);
  }
  final_gain_ = params_.add("final_ln.g", ones_row(w));
  final_bias_ = bias("final_ln.b", w);
  head_w_ = dense("head.w", w, 1);
  head_b_ = bias("head.b", 1);

  if (cfg.structural) {
    ChannelBiasParams chan = ChannelBiasParams::init(rng);
    spd_ = params_.add("chan.spd", std::move(chan.spd_table));
    kernel_ = params_.add("chan.kernel", std::move(chan.kernel_weights));
    if (cfg.denoise) {
      denoise_w_ = dense("denoise.w", w, 3);
      denoise_b_ = bias("denoise.b", 3);
    }
    if (cfg.kpgt_lambda > 0.0) {
      fp_w_ = dense("kpgt.fp.w", w, kFingerprintBits);
      fp_b_ = bias("kpgt.fp.b", kFingerprintBits);
      d_w_ = dense("kpgt.d.w", w, descriptor_head_width(cfg));
      d_b_ = bias("kpgt.d.b", descriptor_head_width(cfg));
    }
  }
}

std::optional<RegHeadIndex> MTModel::reg_heads() const {
  if (!fp_w_) return std::nullopt;
  return RegHeadIndex{*fp_w_, *fp_b_, *d_w_, *d_b_};
}

MTBlockVars block_vars(const std::vector<Var>& b, const MTLayerIndex& ix) {
  return MTBlockVars{b[ix.ln1_gain], b[ix.ln1_bias], b[ix.wq],       b[ix.bq],
                     b[ix.wk],       b[ix.bk],       b[ix.wv],       b[ix.bv],
                     b[ix.wo],       b[ix.bo],       b[ix.ln2_gain], b[ix.ln2_bias],
                     b[ix.ffn1_w1],  b[ix.ffn1_b1],  b[ix.ffn1_w2],  b[ix.ffn1_b2],
                     b[ix.ln3_gain], b[ix.ln3_bias], b[ix.ffn2_w1],  b[ix.ffn2_b1],
                     b[ix.ffn2_w2],  b[ix.ffn2_b2]};
}

Var attention_head(Var q, Var k, Var v, const Tensor& mask, const Var* bias) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
  if (bias != nullptr) scores = add(scores, *bias);
  return matmul(softmax_lastdim(scores, &mask), v);
}

Var mt_block(Var x, const Tensor& mask, const MTBlockVars& p, int n_heads, const Var* bias) {
  const std::size_t w = x.cols();
  const std::size_t hd = w / static_cast<std::size_t>(n_heads);
  Var u = layer_norm(x, p.ln1_gain, p.ln1_bias);
  Var q = linear(u, p.wq, p.bq);
  Var k = linear(u, p.wk, p.bk);
  Var v = linear(u, p.wv, p.bv);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * hd;
    heads.push_back(attention_head(slice_cols(q, off, hd), slice_cols(k, off, hd),
                                   slice_cols(v, off, hd), mask, bias));
  }
  Var h = add(x, linear(concat_cols(heads), p.wo, p.bo));
  auto ffn = [](Var in, Var w1, Var b1, Var w2, Var b2) {
    return linear(gelu(linear(in, w1, b1)), w2, b2);
  };
  h = add(h, ffn(layer_norm(h, p.ln2_gain, p.ln2_bias), p.ffn1_w1, p.ffn1_b1, p.ffn1_w2,
                 p.ffn1_b2));
  return add(h, ffn(layer_norm(h, p.ln3_gain, p.ln3_bias), p.ffn2_w1, p.ffn2_b1, p.ffn2_w2,
                    p.ffn2_b2));
}

PaddedTokens pad_tokens(const TokenGraph& g, int n_padded, int width) {
  if (n_padded < g.n_tokens) {
    fail(ErrorCode::kShapeMismatch, "pad_tokens: " + std::to_string(g.n_tokens) +
                                        " tokens do not fit in " + std::to_string(n_padded));
  }
  PaddedTokens out;
  out.n_real = g.n_tokens;
  const std::size_t n = static_cast<std::size_t>(n_padded);
  const std::size_t w = static_cast<std::size_t>(width);
  out.lookups = token_lookups(g);
  out.lookups.resize(n);
  Tensor additive = token_additive(g, w);
  out.additive = Tensor({n, w});
  std::copy(additive.data.begin(), additive.data.end(), out.additive.data.begin());
  const Tensor real_mask = build_attention_mask(g);
  out.mask = Tensor({n, n}, kPaddingMask);
  const std::size_t r = static_cast<std::size_t>(g.n_tokens);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) out.mask(i, j) = real_mask(i, j);
  // Padding rows attend only to themselves so their softmax stays finite.
  for (std::size_t i = r; i < n; ++i) out.mask(i, i) = 0.0;
  return out;
}

MTExample make_mt_example(const MolGraph& mol, double target, bool with_structural,
                          std::uint64_t conformer_seed) {
  MTExample ex;
  ex.graph = build_token_graph(mol, perceive_rings(mol));
  ex.target = target;
  if (with_structural) {
    ex.structural = StructuralInputs{mol, embed_conformer(mol, conformer_seed),
                                     make_reg_targets(mol)};
  }
  return ex;
}

MTForward mt_forward_tape(const MTModel& model, const std::vector<Var>& bound,
                          const PaddedTokens& tokens, const StructuralInputs* structural,
                          Rng* rng) {
  const MTConfig& cfg = model.config();
  Tape& tape = *bound.front().tape();
  const std::size_t n = tokens.mask.rows();
  const bool training = rng != nullptr;
  const bool use_structure = cfg.structural && structural != nullptr;

  std::vector<Var> tables;
  for (std::size_t k = 0; k < kTableCount; ++k)
    tables.push_back(bound[model.table(static_cast<TableId>(k))]);
  Var x = add(embedding_bag(tables, tokens.lookups), tape.constant(tokens.additive));

  // Structural bias over the atom block; the 2D channel at inference.
  std::optional<Var> bias;
  std::optional<NoisedConformer> noised;
  std::size_t n_atoms = 0;
  if (use_structure) {
    const MolGraph& mol = structural->mol;
    n_atoms = static_cast<std::size_t>(mol.atom_count());
    ChannelWeights weights;
    if (training) weights = sample_channel_weights(*rng, cfg.channels);
    const Conformer* conformer = &structural->conformer;
    if (training && weights.uses_3d() && cfg.denoise && cfg.noise_sigma > 0.0 && n_atoms > 0) {
      noised = perturb_positions(structural->conformer, cfg.noise_sigma, *rng);
      conformer = &noised->noised;
    }
    if (n_atoms > 0) {
      Var b = channel_bias(mol, conformer, weights, bound[*model.spd_table()],
                           bound[*model.kernel_weights()]);
      bias = embed_block(b, n, n, 1, 1);
    }
  }
  const Var* bias_ptr = bias ? &*bias : nullptr;

  for (const MTLayerIndex& ix : model.layers()) {
    if (training && cfg.stochastic_depth > 0.0) {
      // Drop the whole layer; survivors are rescaled so eval needs no change.
      if (rng->uniform() < cfg.stochastic_depth) continue;
      Var y = mt_block(x, tokens.mask, block_vars(bound, ix), cfg.n_heads, bias_ptr);
      x = add(x, scale(sub(y, x), 1.0 / (1.0 - cfg.stochastic_depth)));
    } else {
      x = mt_block(x, tokens.mask, block_vars(bound, ix), cfg.n_heads, bias_ptr);
    }
  }
  Var hidden = layer_norm(x, bound[model.final_gain()], bound[model.final_bias()]);
  const std::vector<std::size_t> mol_row{0};
  Var molecule = gather_rows(hidden, mol_row);
  Var pred = linear(molecule, bound[model.head_weight()], bound[model.head_bias()]);

  std::optional<Var> aux;
  auto add_aux = [&](Var term) { aux = aux ? add(*aux, term) : term; };
  if (noised && model.denoise_weight()) {
    bool degenerate = false;
    for (std::size_t i = 0; i < n_atoms && !degenerate; ++i) {
      double norm = 0.0;
      for (std::size_t c = 0; c < 3; ++c) norm += noised->noise(i, c) * noised->noise(i, c);
      degenerate = norm == 0.0;
    }
    if (!degenerate) {
      std::vector<std::size_t> atom_rows(n_atoms);
      for (std::size_t i = 0; i < n_atoms; ++i) atom_rows[i] = 1 + i;
      Var p = linear(gather_rows(hidden, atom_rows), bound[*model.denoise_weight()],
                     bound[*model.denoise_bias()]);
      add_aux(denoise_loss(p, tape.constant(noised->noise)));
    }
  }
  if (training && use_structure && model.reg_heads()) {
    const RegHeadIndex r = *model.reg_heads();
    RegHeads heads{bound[r.fp_weight], bound[r.fp_bias], bound[r.d_weight], bound[r.d_bias]};
    add_aux(kpgt_reg_loss(molecule, heads, structural->reg, cfg.kpgt_lambda, cfg.kpgt_lambda,
                          cfg.kpgt_mse_on_fingerprint));
  }
  return MTForward{pred, hidden, aux};
}

double mt_forward(const MTModel& model, const TokenGraph& g, const StructuralInputs* structural) {
  Tape tape;
  const std::vector<Var> bound = model.params().bind(tape);
  const PaddedTokens tokens = pad_tokens(g, g.n_tokens, model.config().width);
  return mt_forward_tape(model, bound, tokens, structural, nullptr).prediction.value().item();
}

std::vector<double> mt_predict(const MTModel& model, const std::vector<MTExample>& examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const MTExample& ex : examples) {
    out.push_back(mt_forward(model, ex.graph, ex.structural ? &*ex.structural : nullptr));
  }
  return out;
}

MTTrainResult mt_train(const std::vector<MTExample>& dataset, const MTConfig& cfg) {
  MTTrainResult result{MTModel(cfg), {}};
  MTModel& model = result.model;
  if (cfg.structural) {
    for (const MTExample& ex : dataset) {
      if (!ex.structural) {
        fail(ErrorCode::kMissingConformer, "structural training needs conformers for every example");
      }
    }
  }
  auto eval_mae = [&]() {
    const std::vector<double> pred = mt_predict(model, dataset);
    double total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) total += std::abs(pred[i] - dataset[i].target);
    return total / static_cast<double>(dataset.size());
  };
  auto batch_loss = [&](Tape& tape, const std::vector<Var>& bound,
                        std::span<const std::size_t> batch, Rng& rng) {
    int n_max = 0;
    for (std::size_t i : batch) n_max = std::max(n_max, dataset[i].graph.n_tokens);
    std::vector<Var> preds;
    Tensor targets({batch.size(), 1});
    std::optional<Var> aux;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const MTExample& ex = dataset[batch[k]];
      const PaddedTokens tokens = pad_tokens(ex.graph, n_max, cfg.width);
      MTForward f = mt_forward_tape(model, bound, tokens,
                                    ex.structural ? &*ex.structural : nullptr, &rng);
      preds.push_back(f.prediction);
      targets(k, 0) = ex.target;
      if (f.aux_loss) aux = aux ? add(*aux, *f.aux_loss) : *f.aux_loss;
    }
    Var loss = l1_loss(concat_rows(preds), tape.constant(targets));
    if (aux) loss = add(loss, scale(*aux, 1.0 / static_cast<double>(batch.size())));
    return loss;
  };
  TrainLoopOptions loop{cfg.epochs, cfg.batch_size, cfg.min_lr, cfg.max_lr, cfg.seed};
  result.history = run_training(model.params(), dataset.size(), loop, batch_loss, eval_mae);
  return result;
}

}  // namespace molstack
