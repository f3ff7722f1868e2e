#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rat/region.hpp"

namespace rat {

// binary PGM (P5, maxval 255) for quick visual inspection
void write_pgm(const std::string& path, std::int64_t h, std::int64_t w,
               const std::vector<std::uint8_t>& gray);

// [0,1] image plane -> PGM
template <class Real>
void write_pgm_image(const std::string& path, std::int64_t h, std::int64_t w, const Real* plane) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i) {
        Real v = plane[i];
        if (v < Real(0)) v = Real(0);
        if (v > Real(1)) v = Real(1);
        gray[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v * Real(255) + Real(0.5));
    }
    write_pgm(path, h, w, gray);
}

// labels spread over the gray range
void write_pgm_labels(const std::string& path, const RegionPartition& p);

}  // namespace rat
