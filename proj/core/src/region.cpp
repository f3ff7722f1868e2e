#include "rat/region.hpp"

#include <algorithm>
#include <limits>

#include "rat/error.hpp"

namespace rat {

namespace {

constexpr std::int32_t kNoLabel = -1;

// Compact raw winner ids (ascending order preserved) into [0, L). Raw id
// kNoLabel, when present, becomes the final label L-1.
RegionPartition compact(std::int64_t h, std::int64_t w, const std::vector<std::int32_t>& raw,
                        std::int32_t max_raw) {
    std::vector<std::int32_t> remap(static_cast<std::size_t>(max_raw) + 1, kNoLabel);
    for (auto r : raw)
        if (r != kNoLabel) remap[static_cast<std::size_t>(r)] = 0;
    std::int32_t next = 0;
    for (auto& m : remap)
        if (m == 0) m = next++;
    bool background = false;
    for (auto r : raw)
        if (r == kNoLabel) {
            background = true;
            break;
        }
    const std::int32_t bg = next;
    const std::int64_t total = next + (background ? 1 : 0);
    if (total > std::numeric_limits<std::uint16_t>::max() + 1)
        throw ContractError("partition has too many regions for u16 labels: " + std::to_string(total));

    RegionPartition p;
    p.height = h;
    p.width = w;
    p.num_regions = static_cast<std::uint32_t>(total);
    p.labels.resize(static_cast<std::size_t>(h * w));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::int32_t r = raw[i];
        p.labels[i] = static_cast<std::uint16_t>(r == kNoLabel ? bg : remap[static_cast<std::size_t>(r)]);
    }
    return p;
}

}  // namespace

RegionPartition postprocess_masks(const MaskSet& ms) {
    const std::int64_t h = ms.height, w = ms.width;
    if (h < 1 || w < 1) throw DimensionError("postprocess_masks: empty canvas");
    const std::int64_t n = h * w;
    for (std::size_t m = 0; m < ms.masks.size(); ++m)
        if (static_cast<std::int64_t>(ms.masks[m].size()) != n)
            throw DimensionError("postprocess_masks: mask " + std::to_string(m) + " has " +
                                 std::to_string(ms.masks[m].size()) + " pixels, canvas needs " +
                                 std::to_string(n));

    std::vector<std::int64_t> area(ms.masks.size(), 0);
    for (std::size_t m = 0; m < ms.masks.size(); ++m)
        for (std::int64_t i = 0; i < n; ++i) area[m] += ms.masks[m][static_cast<std::size_t>(i)] ? 1 : 0;

    // winner per pixel: smallest area, ties by lowest mask index
    std::vector<std::int32_t> winner(static_cast<std::size_t>(n), kNoLabel);
    std::vector<std::int64_t> best(static_cast<std::size_t>(n), std::numeric_limits<std::int64_t>::max());
    for (std::size_t m = 0; m < ms.masks.size(); ++m) {
        if (area[m] == 0) continue;  // empty masks are dropped
        const std::uint8_t* mask = ms.masks[m].data();
        for (std::int64_t i = 0; i < n; ++i) {
            if (mask[i] && area[m] < best[static_cast<std::size_t>(i)]) {
                best[static_cast<std::size_t>(i)] = area[m];
                winner[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(m);
            }
        }
    }
    return compact(h, w, winner, static_cast<std::int32_t>(ms.masks.size()));
}

RegionPartition downscale_partition(const RegionPartition& p, std::int64_t h2, std::int64_t w2) {
    if (h2 < 1 || w2 < 1 || h2 > p.height || w2 > p.width)
        throw ContractError("downscale_partition: target " + std::to_string(h2) + "x" +
                            std::to_string(w2) + " invalid for source " + std::to_string(p.height) +
                            "x" + std::to_string(p.width));
    std::vector<std::int32_t> raw(static_cast<std::size_t>(h2 * w2));
    for (std::int64_t i = 0; i < h2; ++i) {
        std::int64_t sy = static_cast<std::int64_t>((static_cast<double>(i) + 0.5) *
                                                    static_cast<double>(p.height) / static_cast<double>(h2));
        sy = std::min(sy, p.height - 1);
        for (std::int64_t j = 0; j < w2; ++j) {
            std::int64_t sx = static_cast<std::int64_t>((static_cast<double>(j) + 0.5) *
                                                        static_cast<double>(p.width) / static_cast<double>(w2));
            sx = std::min(sx, p.width - 1);
            raw[static_cast<std::size_t>(i * w2 + j)] = p.labels[static_cast<std::size_t>(sy * p.width + sx)];
        }
    }
    return compact(h2, w2, raw, static_cast<std::int32_t>(p.num_regions));
}

RegionPartition grid_partition(std::int64_t h, std::int64_t w, std::int64_t win) {
    if (win < 1 || h < 1 || w < 1 || h % win != 0 || w % win != 0)
        throw DimensionError("grid_partition: " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by window " + std::to_string(win));
    RegionPartition p;
    p.height = h;
    p.width = w;
    const std::int64_t gw = w / win;
    const std::int64_t total = (h / win) * gw;
    if (total > std::numeric_limits<std::uint16_t>::max() + 1)
        throw ContractError("grid_partition: too many windows: " + std::to_string(total));
    p.num_regions = static_cast<std::uint32_t>(total);
    p.labels.resize(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
            p.labels[static_cast<std::size_t>(i * w + j)] =
                static_cast<std::uint16_t>((i / win) * gw + j / win);
    return p;
}

RegionPartition pad_partition(const RegionPartition& p, std::int64_t h2, std::int64_t w2) {
    if (h2 < p.height || w2 < p.width)
        throw ContractError("pad_partition: target smaller than source");
    RegionPartition out;
    out.height = h2;
    out.width = w2;
    out.num_regions = p.num_regions;
    out.labels.resize(static_cast<std::size_t>(h2 * w2));
    for (std::int64_t i = 0; i < h2; ++i) {
        const std::int64_t sy = std::min(i, p.height - 1);
        for (std::int64_t j = 0; j < w2; ++j) {
            const std::int64_t sx = std::min(j, p.width - 1);
            out.labels[static_cast<std::size_t>(i * w2 + j)] =
                p.labels[static_cast<std::size_t>(sy * p.width + sx)];
        }
    }
    return out;
}

RegionPartition crop_partition(const RegionPartition& p, std::int64_t y0, std::int64_t x0,
                               std::int64_t h, std::int64_t w) {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > p.height || x0 + w > p.width)
        throw DimensionError("crop_partition: window out of range");
    std::vector<std::int32_t> raw(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
            raw[static_cast<std::size_t>(i * w + j)] =
                p.labels[static_cast<std::size_t>((y0 + i) * p.width + (x0 + j))];
    return compact(h, w, raw, static_cast<std::int32_t>(p.num_regions));
}

std::vector<std::int64_t> region_sizes(const RegionPartition& p) {
    std::vector<std::int64_t> sizes(p.num_regions, 0);
    for (auto l : p.labels) {
        if (l < p.num_regions) sizes[l]++;
    }
    return sizes;
}

PartitionReport validate_partition(const RegionPartition& p) {
    PartitionReport rep;
    if (static_cast<std::int64_t>(p.labels.size()) != p.height * p.width) {
        rep.ok = false;
        rep.message = "label buffer has " + std::to_string(p.labels.size()) + " entries, expected " +
                      std::to_string(p.height * p.width);
        return rep;
    }
    std::vector<bool> seen(p.num_regions, false);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(p.labels.size()); ++i) {
        const std::uint16_t l = p.labels[static_cast<std::size_t>(i)];
        if (l >= p.num_regions) {
            rep.ok = false;
            rep.message = "pixel (" + std::to_string(i / p.width) + "," + std::to_string(i % p.width) +
                          ") has label " + std::to_string(l) + " >= L=" + std::to_string(p.num_regions);
            return rep;
        }
        seen[l] = true;
    }
    for (std::uint32_t l = 0; l < p.num_regions; ++l) {
        if (!seen[l]) {
            rep.ok = false;
            rep.message = "label " + std::to_string(l) + " occurs nowhere (labels not compact)";
            return rep;
        }
    }
    rep.message = "ok: " + std::to_string(p.height) + "x" + std::to_string(p.width) + ", L=" +
                  std::to_string(p.num_regions);
    return rep;
}

AttentionBias bias_from_partition(const RegionPartition& p, double lambda) {
    AttentionBias b;
    b.latent_labels = p.labels;
    b.lambda = lambda;
    return b;
}

}  // namespace rat
