#include "rat/region_io.hpp"

#include <cstring>
#include <fstream>

#include "rat/error.hpp"
#include "rat/tensor_io.hpp"

namespace rat {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    detail::put_bytes(os, b, 2);
}

std::uint16_t get_u16(std::istream& is, const std::string& what) {
    unsigned char b[2];
    detail::get_bytes(is, b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (static_cast<std::uint16_t>(b[1]) << 8));
}

}  // namespace

void save_partition(const std::string& path, const RegionPartition& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    detail::put_bytes(os, "RATM", 4);
    detail::put_u32(os, 1);
    detail::put_u64(os, static_cast<std::uint64_t>(p.height));
    detail::put_u64(os, static_cast<std::uint64_t>(p.width));
    detail::put_u32(os, p.num_regions);
    for (auto l : p.labels) put_u16(os, l);
    if (!os) throw IoError("write failed: " + path);
}

RegionPartition load_partition(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    detail::get_bytes(is, magic, 4, "partition magic");
    if (std::memcmp(magic, "RATM", 4) != 0)
        throw FormatError("bad partition magic in " + path + " (expected RATM)");
    const std::uint32_t version = detail::get_u32(is, "partition version");
    if (version != 1)
        throw FormatError("unsupported partition version " + std::to_string(version) + " in " + path);
    RegionPartition p;
    p.height = static_cast<std::int64_t>(detail::get_u64(is, "partition height"));
    p.width = static_cast<std::int64_t>(detail::get_u64(is, "partition width"));
    p.num_regions = detail::get_u32(is, "partition region count");
    if (p.height < 1 || p.width < 1 || p.height * p.width > (1LL << 32))
        throw FormatError("implausible partition dims in " + path);
    p.labels.resize(static_cast<std::size_t>(p.height * p.width));
    for (auto& l : p.labels) {
        l = get_u16(is, "partition labels");
        if (l >= p.num_regions)
            throw FormatError("label " + std::to_string(l) + " >= L=" + std::to_string(p.num_regions) +
                              " in " + path);
    }
    return p;
}

void save_maskset(const std::string& path, const MaskSet& ms) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    detail::put_bytes(os, "RATS", 4);
    detail::put_u32(os, 1);
    detail::put_u64(os, static_cast<std::uint64_t>(ms.height));
    detail::put_u64(os, static_cast<std::uint64_t>(ms.width));
    detail::put_u32(os, static_cast<std::uint32_t>(ms.masks.size()));
    const std::int64_t row_bytes = (ms.width + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    for (const auto& mask : ms.masks) {
        if (static_cast<std::int64_t>(mask.size()) != ms.height * ms.width)
            throw DimensionError("mask size does not match canvas");
        for (std::int64_t y = 0; y < ms.height; ++y) {
            std::fill(row.begin(), row.end(), 0);
            for (std::int64_t x = 0; x < ms.width; ++x)
                if (mask[static_cast<std::size_t>(y * ms.width + x)])
                    row[static_cast<std::size_t>(x / 8)] |= static_cast<unsigned char>(0x80u >> (x % 8));
            detail::put_bytes(os, row.data(), row.size());
        }
    }
    if (!os) throw IoError("write failed: " + path);
}

MaskSet load_maskset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    detail::get_bytes(is, magic, 4, "maskset magic");
    if (std::memcmp(magic, "RATS", 4) != 0)
        throw FormatError("bad maskset magic in " + path + " (expected RATS)");
    const std::uint32_t version = detail::get_u32(is, "maskset version");
    if (version != 1)
        throw FormatError("unsupported maskset version " + std::to_string(version) + " in " + path);
    MaskSet ms;
    ms.height = static_cast<std::int64_t>(detail::get_u64(is, "maskset height"));
    ms.width = static_cast<std::int64_t>(detail::get_u64(is, "maskset width"));
    const std::uint32_t count = detail::get_u32(is, "maskset count");
    if (ms.height < 1 || ms.width < 1 || ms.height * ms.width > (1LL << 32))
        throw FormatError("implausible maskset dims in " + path);
    const std::int64_t row_bytes = (ms.width + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    ms.masks.resize(count);
    for (auto& mask : ms.masks) {
        mask.assign(static_cast<std::size_t>(ms.height * ms.width), 0);
        for (std::int64_t y = 0; y < ms.height; ++y) {
            detail::get_bytes(is, row.data(), row.size(), "maskset rows");
            for (std::int64_t x = 0; x < ms.width; ++x)
                mask[static_cast<std::size_t>(y * ms.width + x)] =
                    (row[static_cast<std::size_t>(x / 8)] >> (7 - x % 8)) & 1u;
        }
    }
    return ms;
}

}  // namespace rat
