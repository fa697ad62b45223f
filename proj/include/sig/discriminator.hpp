#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sig/batch.hpp"
#include "sig/nn/graph.hpp"
#include "sig/nn/layers.hpp"

namespace sig {

using nn::Graph;
using nn::Var;

/// One chunk resolution: chunks of `width` frames starting every `stride`
/// frames at 1-based offsets `starts`.
struct ChunkResolution {
  int width = 0;
  int stride = 0;
  int count = 0;
  std::vector<int> starts;
};

struct ChunkPlan {
  int horizon = 0;
  std::vector<ChunkResolution> resolutions;
};

inline constexpr int kSmallestChunk = 5;

/// Chunk layout for a horizon T. Without explicit widths the resolutions
/// are {T, T/2, T/4, 5} (integer division), deduplicated, keeping only
/// widths ≥ 5. Strides are floor(width/2) (at least 1) and
/// K = floor((T − width)/stride) + 1. Throws ConfigError when T < 5 (default
/// widths) or a width falls outside [1, T].
ChunkPlan plan_chunks(int horizon, std::span<const int> widths = {});

enum class DiscKind { local, simple, dense };

DiscKind parse_disc_kind(const std::string& s);
std::string to_string(DiscKind k);

struct DiscriminatorConfig {
  int num_actions = 14;
  int horizon = 40;
  DiscKind kind = DiscKind::local;
  std::vector<int> chunks;  // empty: default plan
  int d_h = 64;
  int d_embed = 64;
  int d_phi = 128;
  int d_psi = 128;
  double lambda_inter = 1.0;
  bool spectral = true;
  double leaky_slope = 0.2;
  bool indiv_on = true;
  bool inter_on = true;

  void validate() const;
};

/// Attenuated projection head:
///   D_proj(c, h) = A( τ^(−1/β) (cᵀ V φ(h)) 𝟙 + ψ(φ(h)) ),  β = exp(raw) > 0.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(nn::ParamStore& store, const std::string& prefix, int d_h, int d_phi, int d_psi, bool spectral,
                 double slope, nn::Rng& rng);

  /// cond, feat: rows × d_h; taus: rows × 1 (1-based chunk offsets).
  Var score(Graph& g, nn::ParamStore& store, Var cond, Var feat, const Mat& taus) const;

  double beta(const nn::ParamStore& store) const;
  void power_iterate(nn::ParamStore& store) const;

 private:
  nn::SpectralLinear phi_, psi_, v_, a_;
  std::string beta_;
  double slope_ = 0.2;
};

/// Per-batch discriminator scores. Invalid Vars mark disabled streams.
struct StreamOutputs {
  Var indiv_person;  // rows × 1, averaged over chunks and resolutions
  Var indiv;         // B × 1, mean over persons
  Var inter;         // B × 1
  Var total;         // B × 1: indiv + λ_inter · inter over the enabled streams
};

/// Conditioning codes h^n = f(x^n) of each stream, rows × d_h.
struct Conditioning {
  Var indiv;
  Var inter;
};

/// Dual-stream discriminator. Each stream owns an embedding, a conditioning
/// encoder over the observed tokens and, per resolution, a chunk LSTM and a
/// projection head. The interaction stream max-pools chunk codes and
/// conditioning codes over persons before its heads.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  const ChunkPlan& plan() const noexcept { return plan_; }
  nn::ParamStore& store() noexcept { return store_; }
  const nn::ParamStore& store() const noexcept { return store_; }

  Conditioning condition(Graph& g, const TokenMat& observed);

  /// `sequence` holds T rows × |A| distribution matrices (one-hot for real
  /// data). Throws DiscError on non-finite scores.
  StreamOutputs score(Graph& g, const Conditioning& cond, std::span<const Var> sequence, int persons,
                      double lambda_inter);
  StreamOutputs score(Graph& g, const Conditioning& cond, std::span<const Var> sequence, int persons) {
    return score(g, cond, sequence, persons, cfg_.lambda_inter);
  }

  void power_iterate();

 private:
  struct Stream {
    bool pooled = false;
    nn::Embedding embed;
    nn::LstmCell cond_encoder;
    std::vector<nn::LstmCell> lstms;  // one per resolution (one for simple/dense)
    std::vector<ProjectionHead> heads;
  };

  Stream make_stream(const std::string& name, bool pooled, nn::Rng& rng);
  Var stream_condition(Graph& g, Stream& s, const TokenMat& observed);
  /// Per-block scores for chunk codes stacked k-major; returns rows × 1
  /// (indiv) or B × 1 (pooled) after averaging over blocks.
  Var head_scores(Graph& g, Stream& s, std::size_t head, Var cond, Var feats, const std::vector<int>& taus,
                  int persons);
  Var stream_score(Graph& g, Stream& s, Var cond, std::span<const Var> embedded, int persons);

  DiscriminatorConfig cfg_;
  ChunkPlan plan_;
  nn::ParamStore store_;
  Stream indiv_;
  Stream inter_;
};

}  // namespace sig
