#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sig/nn/grad_check.hpp"

namespace sig {

struct GradSuiteEntry {
  std::string name;
  nn::GradCheckReport report;
};

/// Tolerance on the maximum relative error of every suite entry.
inline constexpr double kGradTolerance = 1e-4;

/// Central-difference checks of every graph primitive on small random
/// operands.
std::vector<GradSuiteEntry> primitive_grad_suite(std::uint64_t seed);

/// Checks of the discriminator and generator losses on a toy problem
/// (2 persons, 6 observed steps, horizon 8, 5 actions), each against the
/// parameters of both networks.
std::vector<GradSuiteEntry> loss_grad_suite(std::uint64_t seed);

}  // namespace sig
