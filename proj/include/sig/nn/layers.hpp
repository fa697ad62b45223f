#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "sig/nn/graph.hpp"
#include "sig/nn/tensor.hpp"

namespace sig::nn {

using Rng = std::mt19937_64;

/// Uniform(−1/√d_in, 1/√d_in) matrix of shape d_out × d_in.
Mat uniform_fan_in(Eigen::Index d_out, Eigen::Index d_in, Rng& rng);
/// Square matrix with orthonormal columns (QR of a Gaussian draw).
Mat random_orthogonal(Eigen::Index d, Rng& rng);
/// Standard normal matrix.
Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0);

/// Fully connected layer y = x·W̄ᵀ + b, where W̄ = W/σ̂ when spectral
/// normalization is enabled. The power-iteration vector u lives in the store
/// as a buffer named "<prefix>.u".
class SpectralLinear {
 public:
  SpectralLinear() = default;
  SpectralLinear(ParamStore& store, std::string prefix, Eigen::Index d_in, Eigen::Index d_out,
                 bool bias, bool spectral, Rng& rng);

  Var forward(Graph& g, ParamStore& store, Var x) const;
  /// The weight as seen by forward().
  Var applied_weight(Graph& g, ParamStore& store) const;
  /// Applied weight computed outside any graph.
  Mat applied_weight(const ParamStore& store) const;

  /// One step: v = normalize(Wᵀu), u = normalize(W v).
  void power_iterate(ParamStore& store) const;
  /// Current σ̂ = ‖Wᵀu‖.
  double sigma_estimate(const ParamStore& store) const;

  bool spectral() const noexcept { return spectral_; }
  Eigen::Index d_in() const noexcept { return d_in_; }
  Eigen::Index d_out() const noexcept { return d_out_; }
  const std::string& weight_name() const noexcept { return w_; }

 private:
  std::string w_, b_, u_;
  Eigen::Index d_in_ = 0, d_out_ = 0;
  bool bias_ = false;
  bool spectral_ = false;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, std::string name, Eigen::Index vocab, Eigen::Index dim, Rng& rng);

  Var lookup(Graph& g, ParamStore& store, std::span<const int> ids) const;
  /// distribution rows (rows × vocab) times the table; one-hot rows select.
  Var project(Graph& g, ParamStore& store, Var distributions) const;

  Eigen::Index vocab() const noexcept { return vocab_; }
  Eigen::Index dim() const noexcept { return dim_; }

 private:
  std::string name_;
  Eigen::Index vocab_ = 0, dim_ = 0;
};

/// LSTM cell with optional per-gate layer normalization. Recurrent kernels
/// start orthogonal per gate block; forget-gate bias starts at 1.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamStore& store, std::string prefix, Eigen::Index d_in, Eigen::Index d_h, bool layer_norm,
           Rng& rng);

  Var step(Graph& g, ParamStore& store, Var x, Var state) const;
  /// rows × 2d zero [h | c].
  Var zero_state(Graph& g, Eigen::Index rows) const;
  /// Runs over inputs in order from `state`; returns the final [h | c].
  Var run(Graph& g, ParamStore& store, std::span<const Var> inputs, Var state) const;
  /// The h half of a [h | c] state.
  Var hidden(Graph& g, Var state) const;

  Eigen::Index d_in() const noexcept { return d_in_; }
  Eigen::Index d_h() const noexcept { return d_h_; }
  bool layer_norm() const noexcept { return ln_; }

 private:
  std::string prefix_;
  Eigen::Index d_in_ = 0, d_h_ = 0;
  bool ln_ = false;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, std::string prefix, Eigen::Index d);

  Var forward(Graph& g, ParamStore& store, Var x, bool train) const;

 private:
  std::string prefix_;
  Eigen::Index d_ = 0;
};

}  // namespace sig::nn
