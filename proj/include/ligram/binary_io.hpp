#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ligram/error.hpp"

// Little-endian scalar I/O shared by the embedding and checkpoint formats.
namespace ligram::binary {

template <typename U>
void write_uint(std::ostream& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    }
    out.write(bytes, sizeof(U));
}

template <typename U>
U read_uint(std::istream& in, const char* what) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw FormatError(std::string("unexpected end of file while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return value;
}

inline void write_f32(std::ostream& out, float value) {
    write_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(value));
}

inline float read_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(read_uint<std::uint32_t>(in, what));
}

inline void write_f64(std::ostream& out, double value) {
    write_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value));
}

inline double read_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(read_uint<std::uint64_t>(in, what));
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& file) {
    char got[4] = {};
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw FormatError(file + ": bad magic, expected " + std::string(magic, 4));
    }
}

} // namespace ligram::binary
