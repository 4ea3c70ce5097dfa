// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/channels.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "molstack/error.h"
#include "molstack/io.h"
#include "molstack/nn.h"

namespace molstack {

std::string_view channel_mode_name(ChannelMode mode) {
  switch (mode) {
    case ChannelMode::k2D: return "2D";
    case ChannelMode::k3D: return "3D";
    case ChannelMode::k2D3D: return "2D+3D";
  }
  return "?";
}

void ChannelSpec::validate() const {
  double total = 0.0;
  for (double p : mode_probs) {
    if (!(p >= 0.0)) fail(ErrorCode::kInvalidArgument, "channel probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    fail(ErrorCode::kInvalidArgument, "channel probabilities must sum to 1");
  }
  for (double a : dirichlet_alpha) {
    if (!(a > 0.0)) fail(ErrorCode::kInvalidArgument, "Dirichlet alpha must be > 0");
  }
}

ChannelMode sample_mode(Rng& rng, const ChannelSpec& spec) {
  if (spec.dirichlet) {
    fail(ErrorCode::kInvalidArgument, "sample_mode needs a fixed-probability spec");
  }
  const double u = rng.uniform();
  if (u < spec.mode_probs[0]) return ChannelMode::k2D;
  if (u < spec.mode_probs[0] + spec.mode_probs[1]) return ChannelMode::k3D;
  // Guard against zero-probability 2D+3D when the first two sum to 1.
  if (spec.mode_probs[2] == 0.0) {
    return spec.mode_probs[1] > 0.0 ? ChannelMode::k3D : ChannelMode::k2D;
  }
  return ChannelMode::k2D3D;
}

std::array<double, 3> sample_dirichlet_weights(Rng& rng, const std::array<double, 3>& alpha) {
  for (double a : alpha) {
    if (!(a > 0.0)) fail(ErrorCode::kInvalidArgument, "Dirichlet alpha must be > 0");
  }
  std::array<double, 3> w{};
  double total = 0.0;
  // Gamma draws with tiny shapes can underflow to zero; redraw until the
  // total is positive.
  do {
    total = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      w[k] = rng.gamma(alpha[k]);
      total += w[k];
    }
  } while (!(total > 0.0));
  for (double& x : w) x /= total;
  return w;
}

ChannelWeights ChannelWeights::from_mode(ChannelMode mode) {
  switch (mode) {
    case ChannelMode::k2D: return {1.0, 0.0, 0.0};
    case ChannelMode::k3D: return {0.0, 1.0, 0.0};
    case ChannelMode::k2D3D: return {0.0, 0.0, 1.0};
  }
  return {};
}

ChannelWeights sample_channel_weights(Rng& rng, const ChannelSpec& spec) {
  if (spec.dirichlet) {
    const auto w = sample_dirichlet_weights(rng, spec.dirichlet_alpha);
    return {w[0], w[1], w[2]};
  }
  return ChannelWeights::from_mode(sample_mode(rng, spec));
}

Conformer embed_conformer(const MolGraph& mol, std::uint64_t seed) {
  const int n = mol.atom_count();
  Rng rng(seed);
  Tensor pos({static_cast<std::size_t>(n), 3});
  const double spread = 1.5 * std::cbrt(static_cast<double>(std::max(n, 1)));
  for (double& x : pos.data) x = (2.0 * rng.uniform() - 1.0) * spread;

  constexpr double kBondLength = 1.5;
  constexpr int kIterations = 300;
  constexpr double kStep = 0.05;
  std::vector<double> force(pos.size());
  for (int it = 0; it < kIterations; ++it) {
    std::fill(force.begin(), force.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double d[3];
        double r2 = 0.0;
        for (int k = 0; k < 3; ++k) {
          d[k] = pos(i, k) - pos(j, k);
          r2 += d[k] * d[k];
        }
        const double r = std::sqrt(std::max(r2, 1e-12));
        // Repulsion ~ 1/r^2, spring on bonds.
        double f = 1.0 / std::max(r2, 0.25);
        if (mol.bond_between(i, j) >= 0) f += -(r - kBondLength);
        for (int k = 0; k < 3; ++k) {
          force[i * 3 + k] += f * d[k] / r;
          force[j * 3 + k] -= f * d[k] / r;
        }
      }
    }
    for (std::size_t k = 0; k < pos.size(); ++k) {
      pos.data[k] += kStep * std::clamp(force[k], -5.0, 5.0);
    }
  }
  // Center at the origin.
  for (int k = 0; k < 3 && n > 0; ++k) {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += pos(i, k);
    c /= n;
    for (int i = 0; i < n; ++i) pos(i, k) -= c;
  }
  return Conformer{std::move(pos)};
}

NoisedConformer perturb_positions(const Conformer& c, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  NoisedConformer out{c, Tensor(c.positions.shape)};
  if (sigma == 0.0) return out;
  for (std::size_t i = 0; i < c.positions.size(); ++i) {
    const double eps = rng.normal(0.0, sigma);
    out.noised.positions.data[i] = c.positions.data[i] + eps;
  }
  // Recorded as the realized difference so noised - original == noise.
  for (std::size_t i = 0; i < c.positions.size(); ++i) {
    out.noise.data[i] = out.noised.positions.data[i] - c.positions.data[i];
  }
  return out;
}

double denoise_loss(const Tensor& pred_noise, const Tensor& true_noise) {
  Tape tape;
  return denoise_loss(tape.constant(pred_noise), tape.constant(true_noise)).value().item();
}

Var denoise_loss(Var pred_noise, Var true_noise) {
  return cosine_similarity_loss(pred_noise, true_noise);
}

std::vector<std::vector<int>> shortest_path_lengths(const MolGraph& mol) {
  const int n = mol.atom_count();
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::deque<int> queue{s};
    dist[s][s] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : mol.neighbors(u)) {
        if (dist[s][v] < 0) {
          dist[s][v] = dist[s][u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return dist;
}

int spd_bucket(int distance) {
  return distance < 0 ? kSpdCap + 1 : std::min(distance, kSpdCap);
}

ChannelBiasParams ChannelBiasParams::init(Rng& rng) {
  return {glorot_uniform(kSpdBuckets, 1, rng), glorot_uniform(kGaussianKernels, 1, rng)};
}

std::array<double, kGaussianKernels> kernel_means() {
  std::array<double, kGaussianKernels> means{};
  for (int k = 0; k < kGaussianKernels; ++k) means[k] = static_cast<double>(k);
  return means;
}

Tensor gaussian_kernel_features(const Conformer& conformer) {
  const std::size_t n = conformer.positions.rows();
  const auto means = kernel_means();
  Tensor phi({n * n, static_cast<std::size_t>(kGaussianKernels)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = conformer.positions(i, k) - conformer.positions(j, k);
        r2 += d * d;
      }
      const double r = std::sqrt(r2);
      for (int k = 0; k < kGaussianKernels; ++k) {
        const double z = (r - means[k]) / kKernelWidth;
        phi(i * n + j, k) = std::exp(-0.5 * z * z);
      }
    }
  }
  return phi;
}

namespace {

void require_conformer(const MolGraph& mol, const Conformer* conformer) {
  if (!conformer) fail(ErrorCode::kMissingConformer, "3D channel active without a conformer");
  if (conformer->atom_count() != mol.atom_count() || conformer->positions.cols() != 3) {
    fail(ErrorCode::kShapeMismatch, "conformer does not match the molecule");
  }
}

Tensor bias_2d(const MolGraph& mol, const ChannelBiasParams& params) {
  const auto spd = shortest_path_lengths(mol);
  const std::size_t n = static_cast<std::size_t>(mol.atom_count());
  Tensor b({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = params.spd_table.data[spd_bucket(spd[i][j])];
  return b;
}

Tensor bias_3d(const Conformer& conformer, const ChannelBiasParams& params) {
  const Tensor phi = gaussian_kernel_features(conformer);
  const std::size_t n = conformer.positions.rows();
  Tensor b({n, n});
  for (std::size_t p = 0; p < n * n; ++p) {
    double v = 0.0;
    for (int k = 0; k < kGaussianKernels; ++k) v += phi(p, k) * params.kernel_weights.data[k];
    b.data[p] = v;
  }
  return b;
}

}  // namespace

Tensor channel_bias(const MolGraph& mol, const Conformer* conformer, ChannelMode mode,
                    const ChannelBiasParams& params) {
  switch (mode) {
    case ChannelMode::k2D:
      return bias_2d(mol, params);
    case ChannelMode::k3D:
      require_conformer(mol, conformer);
      return bias_3d(*conformer, params);
    case ChannelMode::k2D3D: {
      require_conformer(mol, conformer);
      Tensor b = bias_2d(mol, params);
      const Tensor b3 = bias_3d(*conformer, params);
      for (std::size_t i = 0; i < b.size(); ++i) b.data[i] += b3.data[i];
      return b;
    }
  }
  return {};
}

Tensor channel_bias(const MolGraph& mol, const Conformer* conformer,
                    const ChannelWeights& weights, const ChannelBiasParams& params) {
  const std::size_t n = static_cast<std::size_t>(mol.atom_count());
  Tensor out({n, n});
  const double c2 = weights.w2d + weights.w2d3d;
  const double c3 = weights.w3d + weights.w2d3d;
  if (c2 != 0.0) {
    const Tensor b2 = bias_2d(mol, params);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += c2 * b2.data[i];
  }
  if (weights.uses_3d()) {
    require_conformer(mol, conformer);
    const Tensor b3 = bias_3d(*conformer, params);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += c3 * b3.data[i];
  }
  return out;
}

Var channel_bias(const MolGraph& mol, const Conformer* conformer,
                 const ChannelWeights& weights, Var spd_table, Var kernel_weights) {
  Tape& tape = *spd_table.tape();
  const std::size_t n = static_cast<std::size_t>(mol.atom_count());
  const auto spd = shortest_path_lengths(mol);
  std::vector<std::size_t> buckets(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) buckets[i * n + j] = spd_bucket(spd[i][j]);
  const double c2 = weights.w2d + weights.w2d3d;
  const double c3 = weights.w3d + weights.w2d3d;
  Var b2 = reshape(gather_rows(spd_table, buckets), {n, n});
  Var out = scale(b2, c2);
  if (weights.uses_3d()) {
    require_conformer(mol, conformer);
    Var phi = tape.constant(gaussian_kernel_features(*conformer));
    Var b3 = reshape(matmul(phi, kernel_weights), {n, n});
    out = add(out, scale(b3, c3));
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string path_label(const MolGraph& mol, const std::vector<int>& atoms) {
  auto atom_label = [&](int i) {
    const Atom& a = mol.atom(i);
    std::string s(element_symbol(a.element));
    if (a.aromatic) {
      for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
  };
  auto build = [&](bool reverse) {
    std::string s;
    const std::size_t n = atoms.size();
    for (std::size_t k = 0; k < n; ++k) {
      const int a = atoms[reverse ? n - 1 - k : k];
      if (k > 0) {
        const int prev = atoms[reverse ? n - k : k - 1];
        s += bond_symbol(mol.bond(mol.bond_between(prev, a)).order);
      }
      s += atom_label(a);
    }
    return s;
  };
  return std::min(build(false), build(true));
}

Fingerprint fingerprint(const MolGraph& mol) {
  Fingerprint fp;
  std::vector<int> path;
  std::vector<char> on_path(mol.atom_count(), 0);
  auto visit = [&](auto&& self, int atom) -> void {
    path.push_back(atom);
    on_path[atom] = 1;
    fp.set(fnv1a64(path_label(mol, path)) % kFingerprintBits);
    if (static_cast<int>(path.size()) <= kFingerprintMaxBonds) {
      for (int next : mol.neighbors(atom))
        if (!on_path[next]) self(self, next);
    }
    on_path[atom] = 0;
    path.pop_back();
  };
  for (int a = 0; a < mol.atom_count(); ++a) visit(visit, a);
  return fp;
}

Descriptor descriptors(const MolGraph& mol) {
  namespace di = descriptor_index;
  Descriptor d{};
  const MoleculeStats stats = molecule_stats(mol);
  const auto rings = perceive_rings(mol);
  d[di::kHeavyAtoms] = stats.heavy_atoms;
  d[di::kBonds] = mol.bond_count();
  d[di::kRings] = static_cast<double>(rings.size());
  for (int e = 0; e < kElementCount; ++e) d[di::kElements + e] = stats.element_counts[e];
  for (int b = 0; b < kBondOrderCount; ++b) d[di::kBondOrders + b] = stats.bond_order_counts[b];
  double degree_sum = 0.0;
  int degree_max = 0;
  for (int deg : stats.degrees) {
    d[di::kDegreeHistogram + std::min(deg, 11)] += 1.0;
    degree_sum += deg;
    degree_max = std::max(degree_max, deg);
  }
  for (const Ring& r : rings) d[di::kRingSizeHistogram + std::min(r.size(), 15)] += 1.0;
  d[di::kMeanDegree] = stats.heavy_atoms > 0 ? degree_sum / stats.heavy_atoms : 0.0;
  d[di::kMaxDegree] = degree_max;
  d[di::kCyclomatic] = cyclomatic_number(mol);
  return d;
}

RegTargets make_reg_targets(const MolGraph& mol) {
  return RegTargets{fingerprint(mol), descriptors(mol)};
}

Var kpgt_reg_loss(Var z, const RegHeads& heads, const RegTargets& targets, double lambda_fp,
                  double lambda_d, bool mse_on_fingerprint) {
  Tape& tape = *z.tape();
  if (z.value().rank() != 2 || z.rows() != 1) {
    fail(ErrorCode::kShapeMismatch, "kpgt_reg_loss: latent must be [1 x width], got " +
                                        shape_string(z.shape()));
  }
  Tensor fp_target({1, kFingerprintBits});
  for (std::size_t i = 0; i < kFingerprintBits; ++i) fp_target.data[i] = targets.fp[i] ? 1.0 : 0.0;
  Tensor d_target = mse_on_fingerprint
                        ? fp_target
                        : Tensor({1, kDescriptorSize},
                                 std::vector<double>(targets.d.begin(), targets.d.end()));
  Var fp_logits = linear(z, heads.fp_weight, heads.fp_bias);
  Var d_pred = linear(z, heads.d_weight, heads.d_bias);
  if (fp_logits.shape() != fp_target.shape) {
    fail(ErrorCode::kShapeMismatch, "fingerprint head must output 512 logits");
  }
  if (d_pred.shape() != d_target.shape) {
    fail(ErrorCode::kShapeMismatch, "descriptor head output " + shape_string(d_pred.shape()) +
                                        " does not match target " + shape_string(d_target.shape));
  }
  Var bce = bce_with_logits_loss(fp_logits, tape.constant(std::move(fp_target)));
  Var mse = mse_loss(d_pred, tape.constant(std::move(d_target)));
  return add(scale(bce, lambda_fp), scale(mse, lambda_d));
}

void write_conformer_cache(const std::string& path,
                           const std::vector<std::pair<std::string, Conformer>>& entries) {
  std::ostringstream out;
  out << "molstack-conformers 1\n";
  for (const auto& [id, conf] : entries) {
    if (id.empty() || id.find_first_of(" \t\n") != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "conformer id must be a non-empty token");
    }
    out << id << ' ' << conf.atom_count() << '\n';
    for (int i = 0; i < conf.atom_count(); ++i) {
      out << format_double(conf.positions(i, 0)) << ' ' << format_double(conf.positions(i, 1))
          << ' ' << format_double(conf.positions(i, 2)) << '\n';
    }
  }
  atomic_write(path, out.str());
}

std::vector<std::pair<std::string, Conformer>> read_conformer_cache(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "molstack-conformers") {
    fail(ErrorCode::kFormat, path + ": not a conformer cache");
  }
  if (version != 1) fail(ErrorCode::kFormat, path + ": unsupported cache version");
  std::vector<std::pair<std::string, Conformer>> entries;
  std::string id;
  int atoms = 0;
  while (in >> id >> atoms) {
    if (atoms < 0) fail(ErrorCode::kFormat, path + ": negative atom count");
    Tensor pos({static_cast<std::size_t>(atoms), 3});
    for (double& x : pos.data) {
      std::string token;
      if (!(in >> token)) fail(ErrorCode::kFormat, path + ": truncated record " + id);
      x = parse_double(token);
    }
    entries.emplace_back(id, Conformer{std::move(pos)});
  }
  if (!in.eof()) fail(ErrorCode::kFormat, path + ": malformed record");
  return entries;
}

}  // namespace molstack
