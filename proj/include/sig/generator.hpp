#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sig/batch.hpp"
#include "sig/nn/graph.hpp"
#include "sig/nn/layers.hpp"

namespace sig {

using nn::Graph;
using nn::Var;

struct GeneratorConfig {
  int num_actions = 14;
  int d_h = 64;
  int d_embed = 64;
  int noise_dim = 64;
  double temperature = 0.1;
  int deep_width = 128;
  bool layer_norm = true;
  bool spectral = true;  // on the deep-output layers
  double leaky_slope = 0.2;
  bool sample = false;  // categorical sampling instead of argmax for hard tokens

  /// Throws ConfigError on inconsistent settings (noise_dim ≠ d_h, P ≤ 0, ...).
  void validate() const;
};

/// Coordinate-wise maximum over consecutive groups of `group` rows.
Mat max_pool(const Mat& vectors, Eigen::Index group);

/// Encoder-decoder generator. Each person's observed tokens are encoded
/// independently; the decoder starts from code + noise and, at every step,
/// sees its own previous relaxed action plus the max-pooled hidden states of
/// all persons from the previous step.
class Generator {
 public:
  struct Output {
    std::vector<Var> relaxed;  // one rows × |A| distribution matrix per step
    TokenMat tokens;           // rows × T hard decisions
  };

  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& store() noexcept { return store_; }
  const nn::ParamStore& store() const noexcept { return store_; }

  /// Final encoder hidden state per row of `observed` (rows × d_h).
  Var encode(Graph& g, const TokenMat& observed);

  /// Runs the decoder for `horizon` steps. `noise` is rows × noise_dim.
  /// `train` selects batch statistics in the deep output. `sampler` is used
  /// only when config().sample is set.
  Output generate(Graph& g, const TokenMat& observed, int persons, int horizon, const Mat& noise, bool train,
                  nn::Rng* sampler = nullptr);

  Mat draw_noise(Eigen::Index rows, nn::Rng& rng) const;

  /// One power-iteration step on every spectrally normalized layer.
  void power_iterate();

 private:
  GeneratorConfig cfg_;
  nn::ParamStore store_;
  nn::Embedding embed_;
  nn::LstmCell encoder_;
  nn::LstmCell decoder_;
  nn::SpectralLinear out1_;
  nn::BatchNorm out_bn_;
  nn::SpectralLinear out2_;
};

}  // namespace sig
