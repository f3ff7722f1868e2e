#pragma once

#include <string>

#include "rat/region.hpp"

// Partition file ("RATM"): magic, version u32 = 1, H u64, W u64, L u32, then
// H*W u16 labels row-major, little-endian; every label must be < L.
//
// Multi-mask exchange file ("RATS") for raw segmenter output: magic,
// version u32 = 1, H u64, W u64, count u32, then each mask bit-packed
// MSB-first with rows padded to whole bytes.

namespace rat {

void save_partition(const std::string& path, const RegionPartition& p);
RegionPartition load_partition(const std::string& path);

void save_maskset(const std::string& path, const MaskSet& ms);
MaskSet load_maskset(const std::string& path);

}  // namespace rat
