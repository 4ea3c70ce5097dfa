// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Structural channels for 2D/3D-aware attention: channel sampling, 3D
// position noising and the denoising target, pairwise attention biases, and
// the fingerprint/descriptor regularization targets with their loss.

#ifndef MOLSTACK_CHANNELS_H_
#define MOLSTACK_CHANNELS_H_

#include <array>
#include <bitset>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "molstack/rng.h"
#include "molstack/smiles.h"
#include "molstack/tensor.h"

namespace molstack {

enum class ChannelMode : std::uint8_t { k2D, k3D, k2D3D };

std::string_view channel_mode_name(ChannelMode mode);

struct ChannelSpec {
  // Probabilities of (2D, 3D, 2D+3D) for fixed-mode sampling.
  std::array<double, 3> mode_probs{0.25, 0.5, 0.25};
  bool dirichlet = false;
  // Concentration c * (1/5, 1/5, 3/5) with c = 1 by default.
  std::array<double, 3> dirichlet_alpha{0.2, 0.2, 0.6};

  // Throws kInvalidArgument unless probabilities are non-negative and sum
  // to 1 within 1e-12 and alphas are strictly positive.
  void validate() const;
};

ChannelMode sample_mode(Rng& rng, const ChannelSpec& spec);

// Point on the 2-simplex from normalized Gamma(alpha_k, 1) draws.
std::array<double, 3> sample_dirichlet_weights(Rng& rng, const std::array<double, 3>& alpha);

// Blend weights applied to (b2D, b3D, b2D + b3D).
struct ChannelWeights {
  double w2d = 1.0;
  double w3d = 0.0;
  double w2d3d = 0.0;

  static ChannelWeights from_mode(ChannelMode mode);
  bool uses_2d() const { return w2d != 0.0 || w2d3d != 0.0; }
  bool uses_3d() const { return w3d != 0.0 || w2d3d != 0.0; }
};

// Draws fixed-mode one-hot weights or Dirichlet weights per spec.
ChannelWeights sample_channel_weights(Rng& rng, const ChannelSpec& spec);

struct Conformer {
  Tensor positions;  // [atoms x 3]

  int atom_count() const { return static_cast<int>(positions.rows()); }
  bool operator==(const Conformer&) const = default;
};

// Deterministic 3D spring-layout embedding: bonded pairs relax towards
// 1.5 length units, all pairs repel.
Conformer embed_conformer(const MolGraph& mol, std::uint64_t seed);

struct NoisedConformer {
  Conformer noised;
  Tensor noise;  // noised - original, [atoms x 3]
};

NoisedConformer perturb_positions(const Conformer& c, double sigma, Rng& rng);

// Mean over atoms of 1 - cos(pred_row, true_row).
double denoise_loss(const Tensor& pred_noise, const Tensor& true_noise);
Var denoise_loss(Var pred_noise, Var true_noise);

// Pairwise attention bias over atoms.
inline constexpr int kSpdCap = 8;
inline constexpr int kSpdBuckets = kSpdCap + 2;  // 0..8, then "disconnected"
inline constexpr int kGaussianKernels = 8;

// Shortest-path lengths in bonds; -1 between components.
std::vector<std::vector<int>> shortest_path_lengths(const MolGraph& mol);
int spd_bucket(int distance);

struct ChannelBiasParams {
  Tensor spd_table;       // [kSpdBuckets x 1]
  Tensor kernel_weights;  // [kGaussianKernels x 1]

  static ChannelBiasParams init(Rng& rng);
};

// Centers and shared width of the Gaussian distance kernels.
std::array<double, kGaussianKernels> kernel_means();
inline constexpr double kKernelWidth = 1.0;

// [atoms^2 x kGaussianKernels] kernel responses, row i*A + j.
Tensor gaussian_kernel_features(const Conformer& conformer);

// Fixed mode: the active channels' biases, summed for 2D+3D.
Tensor channel_bias(const MolGraph& mol, const Conformer* conformer, ChannelMode mode,
                    const ChannelBiasParams& params);
// Blend w2d * b2D + w3d * b3D + w2d3d * (b2D + b3D).
Tensor channel_bias(const MolGraph& mol, const Conformer* conformer,
                    const ChannelWeights& weights, const ChannelBiasParams& params);
// Differentiable blend with parameters on a tape.
Var channel_bias(const MolGraph& mol, const Conformer* conformer,
                 const ChannelWeights& weights, Var spd_table, Var kernel_weights);

// Regularization targets.
inline constexpr std::size_t kFingerprintBits = 512;
inline constexpr std::size_t kDescriptorSize = 200;
inline constexpr int kFingerprintMaxBonds = 4;

using Fingerprint = std::bitset<kFingerprintBits>;
using Descriptor = std::array<double, kDescriptorSize>;

std::uint64_t fnv1a64(std::string_view text);

// Label of a path: atom symbols (lowercase when aromatic) joined by bond
// symbols, e.g. "C-C=O". The canonical label is the smaller of the forward
// and reversed label.
std::string path_label(const MolGraph& mol, const std::vector<int>& atoms);

// Sets bit fnv1a64(canonical label) % 512 for every simple path of 0 to 4
// bonds.
Fingerprint fingerprint(const MolGraph& mol);

// Descriptor index map:
//   0  heavy atoms                      1  bonds
//   2  rings                            3..14  element counts (Element order)
//   15..18 bond-order counts (single, double, triple, aromatic)
//   19..30 degree histogram, degree clamped to 11
//   31..46 ring-size histogram, size clamped to 15
//   47 mean degree                      48 max degree
//   49 cyclomatic number                50..199 zero
namespace descriptor_index {
inline constexpr std::size_t kHeavyAtoms = 0;
inline constexpr std::size_t kBonds = 1;
inline constexpr std::size_t kRings = 2;
inline constexpr std::size_t kElements = 3;
inline constexpr std::size_t kBondOrders = kElements + kElementCount;
inline constexpr std::size_t kDegreeHistogram = kBondOrders + kBondOrderCount;
inline constexpr std::size_t kRingSizeHistogram = kDegreeHistogram + 12;
inline constexpr std::size_t kMeanDegree = kRingSizeHistogram + 16;
inline constexpr std::size_t kMaxDegree = kMeanDegree + 1;
inline constexpr std::size_t kCyclomatic = kMaxDegree + 1;
inline constexpr std::size_t kUsed = kCyclomatic + 1;
}  // namespace descriptor_index

Descriptor descriptors(const MolGraph& mol);

struct RegTargets {
  Fingerprint fp;
  Descriptor d{};
};

RegTargets make_reg_targets(const MolGraph& mol);

// Projection heads from the latent width to 512 fingerprint logits and 200
// descriptor outputs.
struct RegHeads {
  Var fp_weight;  // [width x 512]
  Var fp_bias;    // [512]
  Var d_weight;   // [width x 200]
  Var d_bias;     // [200]
};

// lambda_fp * BCE(fp_head(z), y_fp) + lambda_d * MSE(d_head(z), y_d) for a
// [1 x width] latent. With `mse_on_fingerprint` the MSE target is y_fp as
// printed in the original loss, which needs a 512-wide descriptor head.
Var kpgt_reg_loss(Var z, const RegHeads& heads, const RegTargets& targets,
                  double lambda_fp, double lambda_d, bool mse_on_fingerprint = false);

// Versioned text cache of conformers keyed by molecule id.
void write_conformer_cache(const std::string& path,
                           const std::vector<std::pair<std::string, Conformer>>& entries);
std::vector<std::pair<std::string, Conformer>> read_conformer_cache(const std::string& path);

}  // namespace molstack

#endif  // MOLSTACK_CHANNELS_H_
