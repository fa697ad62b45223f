#pragma once

#include <span>
#include <vector>

#include "sig/actionspace.hpp"
#include "sig/nn/tensor.hpp"

namespace sig {

using actions::Interaction;
using actions::TokenMat;
using nn::Mat;

/// B interactions with a common person count N stacked person-minor:
/// row b·N + n holds person n of sample b.
struct Batch {
  int samples = 0;
  int persons = 0;
  int t_obs = 0;
  int horizon = 0;
  TokenMat observed;  // rows × t_obs
  TokenMat target;    // rows × horizon

  Eigen::Index rows() const noexcept { return static_cast<Eigen::Index>(samples) * persons; }
};

/// Stacks samples sharing N, t_obs and horizon; throws InputError otherwise.
Batch make_batch(std::span<const Interaction* const> samples);
Batch make_batch(std::span<const Interaction> samples);

/// Column t of a token matrix as a contiguous id list.
std::vector<int> token_column(const TokenMat& tokens, Eigen::Index t);

/// One rows × num_actions one-hot matrix per column of `tokens`.
std::vector<Mat> one_hot_steps(const TokenMat& tokens, int num_actions);

/// Indices of `samples` bucketed by person count, buckets in ascending N.
std::vector<std::vector<std::size_t>> bucket_by_persons(std::span<const Interaction> samples);

}  // namespace sig
