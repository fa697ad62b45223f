#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "sig/nn/tensor.hpp"

namespace sig::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients against central differences.
///
/// `loss(true)` must run forward and backward (adding into the stores'
/// gradients) and return the loss; `loss(false)` only evaluates it. When the
/// stores hold more than `max_coords` scalars a seeded random subset of that
/// size is checked. Relative error uses max(|analytic|, |numeric|, 1e-8) as
/// the denominator. Throws GradError when the loss is non-finite.
GradCheckReport grad_check(std::span<ParamStore* const> stores, const std::function<double(bool)>& loss,
                           double eps = 1e-5, std::size_t max_coords = 400, std::uint64_t seed = 0);

}  // namespace sig::nn
