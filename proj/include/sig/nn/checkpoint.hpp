#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "sig/nn/tensor.hpp"

namespace sig::nn {

/// Binary checkpoint layout (all integers little-endian):
///   "SIGG" | version u32 | tensor count u32 |
///   per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 × rank |
///               f64 payload, row-major.
/// The first tensor is always "__kind__", a one-element vector holding the
/// CheckpointKind code.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : int { gan = 1, inception = 2 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::gan;
  std::map<std::string, Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Adds params, Adam moments, buffers and the step counter under `prefix`.
void export_store(const ParamStore& store, const std::string& prefix, Checkpoint& ckpt);
/// Restores a store exported with export_store. The store must already hold
/// the same names and shapes (it is rebuilt from the model config first).
void import_store(ParamStore& store, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace sig::nn
