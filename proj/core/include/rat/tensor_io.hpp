#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "rat/tensor.hpp"

// Tensor binary format:
//   magic "RATT", version u32 = 1, ndim u32, dims u64 each, dtype u8
//   (1 = f32, 2 = f64), then raw row-major data. All integers and floats
//   little-endian.

namespace rat {

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const std::string& what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw FormatError("truncated file while reading " + what);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    get_bytes(is, b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& what) {
    unsigned char b[8];
    get_bytes(is, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

template <class T>
void put_scalar_le(std::ostream& os, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if constexpr (sizeof(T) == 4) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
    } else {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(os, bits);
    }
}

template <class T>
T get_scalar_le(std::istream& is, const std::string& what) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    T v;
    if constexpr (sizeof(T) == 4) {
        std::uint32_t bits = get_u32(is, what);
        std::memcpy(&v, &bits, 4);
    } else {
        std::uint64_t bits = get_u64(is, what);
        std::memcpy(&v, &bits, 8);
    }
    return v;
}

template <class Real>
constexpr std::uint8_t dtype_code() {
    static_assert(sizeof(Real) == 4 || sizeof(Real) == 8, "only f32/f64 supported");
    return sizeof(Real) == 4 ? 1 : 2;
}

}  // namespace detail

template <class Real>
void write_tensor(std::ostream& os, const Tensor<Real>& t) {
    detail::put_bytes(os, "RATT", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) detail::put_u64(os, static_cast<std::uint64_t>(d));
    const std::uint8_t code = detail::dtype_code<Real>();
    detail::put_bytes(os, &code, 1);
    for (std::int64_t i = 0; i < t.numel(); ++i) detail::put_scalar_le(os, t.data()[i]);
}

template <class Real>
Tensor<Real> read_tensor(std::istream& is) {
    char magic[4];
    detail::get_bytes(is, magic, 4, "tensor magic");
    if (std::memcmp(magic, "RATT", 4) != 0) throw FormatError("bad tensor magic (expected RATT)");
    const std::uint32_t version = detail::get_u32(is, "tensor version");
    if (version != 1) throw FormatError("unsupported tensor version " + std::to_string(version));
    const std::uint32_t ndim = detail::get_u32(is, "tensor ndim");
    if (ndim == 0 || ndim > 16) throw FormatError("bad tensor ndim " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::int64_t>(detail::get_u64(is, "tensor dim"));
    std::uint8_t code;
    detail::get_bytes(is, &code, 1, "tensor dtype");
    if (code != 1 && code != 2) throw FormatError("bad tensor dtype code " + std::to_string(code));
    const std::int64_t n = shape_numel(shape);
    std::vector<Real> values(static_cast<std::size_t>(n));
    if (code == 1) {
        for (auto& v : values) v = static_cast<Real>(detail::get_scalar_le<float>(is, "tensor data"));
    } else {
        for (auto& v : values) v = static_cast<Real>(detail::get_scalar_le<double>(is, "tensor data"));
    }
    return Tensor<Real>::from(std::move(shape), std::move(values));
}

template <class Real>
void save_tensor(const std::string& path, const Tensor<Real>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_tensor(os, t);
    if (!os) throw IoError("write failed: " + path);
}

template <class Real>
Tensor<Real> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    try {
        return read_tensor<Real>(is);
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " in " + path);
    }
}

}  // namespace rat
