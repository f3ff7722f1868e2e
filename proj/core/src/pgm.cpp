#include "rat/pgm.hpp"

#include <fstream>

#include "rat/error.hpp"

namespace rat {

void write_pgm(const std::string& path, std::int64_t h, std::int64_t w,
               const std::vector<std::uint8_t>& gray) {
    if (static_cast<std::int64_t>(gray.size()) != h * w)
        throw DimensionError("write_pgm: buffer size does not match " + std::to_string(h) + "x" +
                             std::to_string(w));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!os) throw IoError("write failed: " + path);
}

void write_pgm_labels(const std::string& path, const RegionPartition& p) {
    std::vector<std::uint8_t> gray(p.labels.size());
    const std::uint32_t denom = p.num_regions > 1 ? p.num_regions - 1 : 1;
    for (std::size_t i = 0; i < p.labels.size(); ++i)
        gray[i] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(p.labels[i]) * 255u / denom);
    write_pgm(path, p.height, p.width, gray);
}

}  // namespace rat
