// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/channels.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "corpus.h"
#include "expect_error.h"
#include "gradcheck.h"
#include "molstack/nn.h"

namespace molstack {
namespace {

// Counts must lie within 3 binomial standard deviations of n * p.
void expect_within_binomial(const std::array<int, 3>& counts, const std::array<double, 3>& p,
                            int n) {
  for (int k = 0; k < 3; ++k) {
    const double sd = std::sqrt(n * p[k] * (1.0 - p[k]));
    EXPECT_LE(std::abs(counts[k] - n * p[k]), 3.0 * sd) << "mode " << k;
  }
}

std::array<int, 3> mode_counts(const ChannelSpec& spec, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_mode(rng, spec))];
  return counts;
}

TEST(ChannelSpecTest, Validate) {
  ChannelSpec spec;
  spec.validate();
  spec.mode_probs = {0.5, 0.5, 0.1};
  EXPECT_MOLSTACK_ERROR(spec.validate(), ErrorCode::kInvalidArgument);
  spec.mode_probs = {0.5, 0.5, 0.0};
  spec.dirichlet_alpha = {1.0, 0.0, 1.0};
  EXPECT_MOLSTACK_ERROR(spec.validate(), ErrorCode::kInvalidArgument);
}

TEST(SampleModeTest, DefaultFrequencies) {
  expect_within_binomial(mode_counts(ChannelSpec{}, 10000, 1), {0.25, 0.5, 0.25}, 10000);
}

TEST(SampleModeTest, AlternativeFrequencies) {
  ChannelSpec spec;
  spec.mode_probs = {0.2, 0.2, 0.6};
  expect_within_binomial(mode_counts(spec, 10000, 2), {0.2, 0.2, 0.6}, 10000);
}

TEST(SampleModeTest, DegenerateSpecs) {
  ChannelSpec spec;
  spec.mode_probs = {1.0, 0.0, 0.0};
  EXPECT_EQ(mode_counts(spec, 100, 3), (std::array<int, 3>{100, 0, 0}));
  spec.dirichlet = true;
  Rng rng(0);
  EXPECT_MOLSTACK_ERROR(sample_mode(rng, spec), ErrorCode::kInvalidArgument);
}

TEST(DirichletTest, MeanMatchesNormalizedAlpha) {
  Rng rng(4);
  const std::array<double, 3> alpha{0.2, 0.2, 0.6};
  std::array<double, 3> mean{};
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const auto w = sample_dirichlet_weights(rng, alpha);
    EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(w[k], 0.0);
      mean[k] += w[k] / kDraws;
    }
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(mean[k], alpha[k], 0.02);
}

TEST(ChannelWeightsTest, FromModeAndUsage) {
  const auto w = ChannelWeights::from_mode(ChannelMode::k2D3D);
  EXPECT_TRUE(w.uses_2d());
  EXPECT_TRUE(w.uses_3d());
  EXPECT_FALSE(ChannelWeights::from_mode(ChannelMode::k2D).uses_3d());
  EXPECT_FALSE(ChannelWeights::from_mode(ChannelMode::k3D).uses_2d());
  ChannelSpec spec;
  spec.dirichlet = true;
  Rng rng(5);
  const auto d = sample_channel_weights(rng, spec);
  EXPECT_NEAR(d.w2d + d.w3d + d.w2d3d, 1.0, 1e-12);
}

TEST(PerturbPositionsTest, NoiseStatistics) {
  Conformer c{Tensor({33334, 3})};
  Rng rng(6);
  const NoisedConformer n = perturb_positions(c, 0.2, rng);
  double s = 0.0, ss = 0.0;
  for (double v : n.noise.data) {
    s += v;
    ss += v * v;
  }
  const double count = static_cast<double>(n.noise.size());
  ASSERT_GE(count, 1e5);
  const double mean = s / count;
  const double sd = std::sqrt(ss / count - mean * mean);
  EXPECT_NEAR(sd, 0.2, 0.002);
  EXPECT_NEAR(mean, 0.0, 0.005);
}

TEST(PerturbPositionsTest, NoiseIsNoisedMinusOriginal) {
  const Conformer c = embed_conformer(parse_smiles(testing::kCaffeine), 1);
  Rng rng(7);
  const NoisedConformer n = perturb_positions(c, 0.2, rng);
  for (std::size_t i = 0; i < c.positions.size(); ++i) {
    EXPECT_EQ(n.noised.positions.data[i] - c.positions.data[i], n.noise.data[i]);
  }
  const NoisedConformer zero = perturb_positions(c, 0.0, rng);
  EXPECT_EQ(zero.noised, c);
  EXPECT_MOLSTACK_ERROR(perturb_positions(c, -1.0, rng), ErrorCode::kInvalidArgument);
}

TEST(EmbedConformerTest, DeterministicAndBondLengthsReasonable) {
  const MolGraph mol = parse_smiles(testing::kCaffeine);
  const Conformer a = embed_conformer(mol, 3);
  EXPECT_EQ(a, embed_conformer(mol, 3));
  EXPECT_EQ(a.atom_count(), 14);
  for (const Bond& b : mol.bonds()) {
    double r2 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = a.positions(b.a, k) - a.positions(b.b, k);
      r2 += d * d;
    }
    EXPECT_GT(std::sqrt(r2), 0.5);
    EXPECT_LT(std::sqrt(r2), 3.0);
  }
}

TEST(DenoiseLossTest, CosineValues) {
  const Tensor a = Tensor::matrix(2, 3, {1, 0, 0, 0, 2, 0});
  EXPECT_NEAR(denoise_loss(a, a), 0.0, 1e-15);
  const Tensor b = Tensor::matrix(2, 3, {-1, 0, 0, 0, 0, 3});
  EXPECT_NEAR(denoise_loss(a, b), (2.0 + 1.0) / 2.0, 1e-15);
  EXPECT_MOLSTACK_ERROR(denoise_loss(a, Tensor({2, 3})), ErrorCode::kDegenerateVector);
}

TEST(ShortestPathTest, BucketsAndDisconnected) {
  const auto d = shortest_path_lengths(parse_smiles("CCCCCCCCCCC.C"));
  EXPECT_EQ(d[0][10], 10);
  EXPECT_EQ(d[0][11], -1);
  EXPECT_EQ(spd_bucket(d[0][10]), kSpdCap);
  EXPECT_EQ(spd_bucket(-1), kSpdCap + 1);
  EXPECT_EQ(spd_bucket(3), 3);
}

TEST(ChannelBiasTest, TwoDLooksUpSpdTable) {
  const MolGraph mol = parse_smiles("CCO");
  Rng rng(8);
  const ChannelBiasParams params = ChannelBiasParams::init(rng);
  const Tensor b = channel_bias(mol, nullptr, ChannelMode::k2D, params);
  EXPECT_EQ(b(0, 2), params.spd_table.data[2]);
  EXPECT_EQ(b(1, 1), params.spd_table.data[0]);
  EXPECT_MOLSTACK_ERROR(channel_bias(mol, nullptr, ChannelMode::k3D, params),
                        ErrorCode::kMissingConformer);
}

TEST(ChannelBiasTest, BlendIsLinearInChannels) {
  const MolGraph mol = parse_smiles(testing::kCaffeine);
  const Conformer conf = embed_conformer(mol, 1);
  Rng rng(9);
  const ChannelBiasParams params = ChannelBiasParams::init(rng);
  const Tensor b2 = channel_bias(mol, &conf, ChannelMode::k2D, params);
  const Tensor b3 = channel_bias(mol, &conf, ChannelMode::k3D, params);
  const Tensor both = channel_bias(mol, &conf, ChannelMode::k2D3D, params);
  const ChannelWeights w{0.2, 0.3, 0.5};
  const Tensor blend = channel_bias(mol, &conf, w, params);
  Tape tape;
  const Tensor taped =
      channel_bias(mol, &conf, w, tape.leaf(params.spd_table), tape.leaf(params.kernel_weights))
          .value();
  for (std::size_t i = 0; i < b2.size(); ++i) {
    EXPECT_NEAR(both.data[i], b2.data[i] + b3.data[i], 1e-14);
    const double expected = 0.2 * b2.data[i] + 0.3 * b3.data[i] + 0.5 * both.data[i];
    EXPECT_NEAR(blend.data[i], expected, 1e-14);
    EXPECT_NEAR(taped.data[i], expected, 1e-14);
  }
}

TEST(GaussianKernelTest, PeaksAtMeans) {
  Conformer c{Tensor::matrix(2, 3, {0, 0, 0, 3, 0, 0})};
  const Tensor phi = gaussian_kernel_features(c);
  ASSERT_EQ(phi.shape, (Shape{4, static_cast<std::size_t>(kGaussianKernels)}));
  EXPECT_DOUBLE_EQ(phi(1, 3), 1.0);
  EXPECT_DOUBLE_EQ(phi(0, 0), 1.0);
  EXPECT_NEAR(phi(1, 2), std::exp(-0.5), 1e-15);
}

TEST(FingerprintTest, PathLabelsAndBits) {
  const MolGraph mol = parse_smiles("OC=C");
  EXPECT_EQ(path_label(mol, {0}), "O");
  EXPECT_EQ(path_label(mol, {0, 1, 2}), "C=C-O");
  EXPECT_EQ(path_label(mol, {2, 1, 0}), "C=C-O");
  EXPECT_EQ(path_label(parse_smiles("cc"), {0, 1}), "c:c");
  const Fingerprint fp = fingerprint(mol);
  EXPECT_TRUE(fp.test(fnv1a64("O") % kFingerprintBits));
  EXPECT_TRUE(fp.test(fnv1a64("C=C-O") % kFingerprintBits));
  EXPECT_LE(fp.count(), 5u);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
}

TEST(FingerprintTest, PathsLimitedToFourBonds) {
  const MolGraph mol = parse_smiles("CCCCCCCC");
  const Fingerprint fp = fingerprint(mol);
  EXPECT_TRUE(fp.test(fnv1a64("C-C-C-C-C") % kFingerprintBits));
  // A linear chain has exactly the labels C, C-C, ..., C-C-C-C-C.
  Fingerprint expected;
  std::string label = "C";
  for (int bonds = 0; bonds <= kFingerprintMaxBonds; ++bonds, label += "-C") {
    expected.set(fnv1a64(label) % kFingerprintBits);
  }
  EXPECT_EQ(fp, expected);
  EXPECT_EQ(fp, fingerprint(permute_atoms(mol, {7, 6, 5, 4, 3, 2, 1, 0})));
}

TEST(DescriptorTest, IndexMap) {
  namespace di = descriptor_index;
  const Descriptor d = descriptors(parse_smiles("OC(=O)c1ccccc1"));
  EXPECT_EQ(d[di::kHeavyAtoms], 9);
  EXPECT_EQ(d[di::kBonds], 9);
  EXPECT_EQ(d[di::kRings], 1);
  EXPECT_EQ(d[di::kElements + static_cast<int>(Element::O)], 2);
  EXPECT_EQ(d[di::kBondOrders + static_cast<int>(BondOrder::kAromatic)], 6);
  EXPECT_EQ(d[di::kDegreeHistogram + 3], 2);
  EXPECT_EQ(d[di::kRingSizeHistogram + 6], 1);
  EXPECT_DOUBLE_EQ(d[di::kMeanDegree], 2.0);
  EXPECT_EQ(d[di::kMaxDegree], 3);
  EXPECT_EQ(d[di::kCyclomatic], 1);
  EXPECT_EQ(di::kUsed, 50u);
  for (std::size_t i = di::kUsed; i < kDescriptorSize; ++i) EXPECT_EQ(d[i], 0.0);
}

RegHeads make_heads(Tape& tape, std::size_t width, std::size_t d_width, std::uint64_t seed) {
  Rng rng(seed);
  return {tape.leaf(glorot_uniform(width, kFingerprintBits, rng)),
          tape.leaf(Tensor({kFingerprintBits})),
          tape.leaf(glorot_uniform(width, d_width, rng)), tape.leaf(Tensor({d_width}))};
}

TEST(KpgtLossTest, ZeroLambdasGiveZero) {
  Tape tape;
  const RegHeads heads = make_heads(tape, 4, kDescriptorSize, 1);
  Var z = tape.leaf(Tensor::matrix(1, 4, {0.1, 0.2, 0.3, 0.4}));
  const RegTargets t = make_reg_targets(parse_smiles("CCO"));
  EXPECT_EQ(kpgt_reg_loss(z, heads, t, 0.0, 0.0).value().item(), 0.0);
  EXPECT_GT(kpgt_reg_loss(z, heads, t, 1.0, 1.0).value().item(), 0.0);
  EXPECT_MOLSTACK_ERROR(kpgt_reg_loss(z, heads, t, 1.0, 1.0, true), ErrorCode::kShapeMismatch);
  const RegHeads wide = make_heads(tape, 4, kFingerprintBits, 2);
  EXPECT_GT(kpgt_reg_loss(z, wide, t, 1.0, 1.0, true).value().item(), 0.0);
}

TEST(KpgtLossTest, GradientCheck) {
  const RegTargets t = make_reg_targets(parse_smiles(testing::kCaffeine));
  Rng rng(10);
  std::vector<Tensor> inputs = {glorot_uniform(1, 3, rng), glorot_uniform(3, kFingerprintBits, rng),
                                glorot_uniform(1, kFingerprintBits, rng),
                                glorot_uniform(3, kDescriptorSize, rng),
                                glorot_uniform(1, kDescriptorSize, rng)};
  inputs[2].shape = {kFingerprintBits};
  inputs[4].shape = {kDescriptorSize};
  const auto r = testing::gradient_check(
      [&](Tape&, const std::vector<Var>& x) {
        return kpgt_reg_loss(x[0], RegHeads{x[1], x[2], x[3], x[4]}, t, 0.7, 0.01);
      },
      inputs);
  EXPECT_LT(r.max_error, 1e-6) << r.worst;
}

TEST(ChannelBiasGradTest, GradientCheck) {
  const MolGraph mol = parse_smiles("C1CC1CO");
  const Conformer conf = embed_conformer(mol, 2);
  Rng rng(11);
  const ChannelBiasParams p = ChannelBiasParams::init(rng);
  const auto r = testing::gradient_check(
      [&](Tape&, const std::vector<Var>& x) {
        return testing::weighted_sum(channel_bias(mol, &conf, {0.3, 0.3, 0.4}, x[0], x[1]), 4);
      },
      {p.spd_table, p.kernel_weights});
  EXPECT_LT(r.max_error, 1e-6) << r.worst;
}

TEST(ConformerCacheTest, RoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "molstack_conf_cache.txt").string();
  const Conformer c = embed_conformer(parse_smiles(testing::kCaffeine), 5);
  write_conformer_cache(path, {{"mol0", c}, {"mol1", Conformer{Tensor({0, 3})}}});
  const auto back = read_conformer_cache(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "mol0");
  EXPECT_EQ(back[0].second, c);
  EXPECT_EQ(back[1].second.atom_count(), 0);
  EXPECT_MOLSTACK_ERROR(write_conformer_cache(path, {{"bad id", c}}), ErrorCode::kInvalidArgument);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace molstack
