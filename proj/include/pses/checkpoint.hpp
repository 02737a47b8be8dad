#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pses/nn.hpp"

namespace pses {

/// PSES checkpoint format: magic "PSES", format version u32, tensor count
/// u32, then per tensor: name length u16, UTF-8 name, rank u8, extents as
/// u32, raw little-endian 32-bit float payload.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedTensor<float>>& tensors);

/// Loads all tensors in file order.
std::vector<std::pair<std::string, Tensor<float>>> load_checkpoint(const std::string& path);

/// Copies checkpoint values into the target tensors. Throws CheckpointError
/// naming the first missing or shape-mismatched tensor; extra checkpoint
/// entries are also an error.
void load_into(const std::string& path, const std::vector<NamedTensor<float>>& target);

}  // namespace pses
