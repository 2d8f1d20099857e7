#pragma once

#include <string>

#include "paser/tensor.hpp"

namespace paser {

/// Reads an IDX file (big-endian magic 0x00000803 for image tensors,
/// 0x00000801 for label vectors) and scales the raw bytes to [0,1].
/// Throws std::runtime_error on a bad magic or a truncated file.
Tensor<float> read_idx(const std::string& path);

}  // namespace paser
