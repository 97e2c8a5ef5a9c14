#pragma once

#include <filesystem>

#include "linkbackdoor/models.hpp"

namespace lbd {

/// Model checkpoint: a text header followed by raw matrices.
///
///   # linkbackdoor checkpoint v1
///   kind=<GAE|VGAE|GIC|ARGA|ARVGA>
///   seed=<uint64>
///   param <key> <rows> <cols>      one line per matrix, key order
///   end
///   <rows*cols little-endian float64 per matrix, row-major, header order>
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace lbd
