#pragma once

#include "sig/nn/tensor.hpp"

namespace sig::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment update over every parameter of `store`
/// in sorted-name order, then zeroes the gradients and bumps step_count.
/// Throws GradError, before touching anything, if a gradient is non-finite.
void adam_step(ParamStore& store, const AdamConfig& cfg);

}  // namespace sig::nn
