#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rat/tensor.hpp"

namespace rat {

// Raw segmenter output: L0 binary maps over the same H x W canvas, possibly
// overlapping, possibly leaving pixels uncovered.
struct MaskSet {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::vector<std::uint8_t>> masks;  // each height*width, values 0/1
};

// Exhaustive, exclusive label map: every pixel has exactly one label in
// [0, num_regions) and every label occurs at least once.
struct RegionPartition {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint16_t> labels;  // height*width, row-major
    std::uint32_t num_regions = 0;
};

struct PartitionReport {
    bool ok = true;
    std::string message;
};

// Compact label-vector form of the additive attention bias: the dense matrix
// is 0 where labels match and `lambda` where they differ. Materialized to
// N x N only inside attention or tests.
struct AttentionBias {
    std::vector<std::uint16_t> latent_labels;
    double lambda = -1000.0;
};

// Resolve overlapping masks into an exclusive partition. A pixel under
// several masks goes to the smallest-area one (ties: lowest mask index);
// uncovered pixels form the background region, whose label sorts last.
// Masks that win no pixel are dropped and labels are compacted.
RegionPartition postprocess_masks(const MaskSet& ms);

// Nearest-neighbour downscale with half-pixel centers:
// src = floor((i + 0.5) * H / h2), clamped. Labels that vanish are dropped
// and the rest recompacted in ascending source-label order.
RegionPartition downscale_partition(const RegionPartition& p, std::int64_t h2, std::int64_t w2);

// label(i,j) = (i / win) * (w / win) + (j / win); h, w must be divisible.
RegionPartition grid_partition(std::int64_t h, std::int64_t w, std::int64_t win);

// Edge-extend to a larger canvas (clamped source coordinates). All labels
// survive, so no recompaction happens.
RegionPartition pad_partition(const RegionPartition& p, std::int64_t h2, std::int64_t w2);

// Crop a window; labels that fall outside are dropped and the rest
// recompacted in ascending source-label order.
RegionPartition crop_partition(const RegionPartition& p, std::int64_t y0, std::int64_t x0,
                               std::int64_t h, std::int64_t w);

std::vector<std::int64_t> region_sizes(const RegionPartition& p);

// Checks exhaustiveness (labels < L) and compactness (every label occurs).
PartitionReport validate_partition(const RegionPartition& p);

AttentionBias bias_from_partition(const RegionPartition& p, double lambda);

template <class Real>
Tensor<Real> materialize_bias(const AttentionBias& b) {
    const std::int64_t n = static_cast<std::int64_t>(b.latent_labels.size());
    Tensor<Real> out = Tensor<Real>::zeros({n, n});
    const Real lam = static_cast<Real>(b.lambda);
    for (std::int64_t p = 0; p < n; ++p) {
        Real* row = out.data() + p * n;
        const std::uint16_t lp = b.latent_labels[static_cast<std::size_t>(p)];
        for (std::int64_t q = 0; q < n; ++q)
            row[q] = b.latent_labels[static_cast<std::size_t>(q)] == lp ? Real(0) : lam;
    }
    return out;
}

}  // namespace rat
