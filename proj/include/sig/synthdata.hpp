#pragma once

#include <cstdint>
#include <vector>

#include "sig/actionspace.hpp"
#include "sig/nn/tensor.hpp"

namespace sig::synth {

using nn::Mat;

struct SynthConfig {
  int actions = 14;
  int persons = 3;
  /// One row-stochastic actions × actions matrix per persona; person n uses
  /// persona n mod personas. Empty: default_transitions(actions, personas, seed).
  std::vector<Mat> transitions;
  int personas = 3;
  /// Probability that a person's step copies the latest action of a
  /// uniformly chosen other person instead of following its own chain.
  double coupling = 0.3;
  /// Floor on self-transition probability, other entries rescaled.
  double dwell = 0.0;
  /// Self-transition mass of the default matrices.
  double stickiness = 0.85;
  int burn_in = 20;
  std::uint64_t seed = 1;

  /// Throws ConfigError on a non-stochastic row (tolerance 1e-12), ρ or
  /// dwell outside [0, 1], or bad sizes.
  void validate() const;
};

/// Sticky random chains: each row keeps `stickiness` on the diagonal and
/// spreads the rest by a flat Dirichlet draw seeded by (seed, persona).
std::vector<Mat> default_transitions(int actions, int personas, double stickiness, std::uint64_t seed);

/// Matrix after applying the dwell floor to its diagonal.
Mat apply_dwell(const Mat& p, double dwell);

/// Stationary row vector by power iteration from uniform.
nn::RowVec stationary_distribution(const Mat& p, int max_iter = 100000, double tol = 1e-15);

/// Samples of `persons` coupled chains. Within a step persons update in
/// index order, so "latest" includes actions already drawn this step.
/// Sample i is seeded by (seed, i) and starts from the stationary law after
/// burn_in steps.
std::vector<actions::Interaction> simulate(const SynthConfig& cfg, int n_samples, int t_obs, int horizon);

/// A single uncoupled chain of `steps` states, for statistics checks.
std::vector<int> simulate_chain(const Mat& p, int steps, std::uint64_t seed);

}  // namespace sig::synth
