#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "met/error.hpp"

namespace met::binary {

// Little-endian encoding for the on-disk containers (MVEC, MTIX, MANN).

template <typename UInt>
void write_uint(std::ostream& os, UInt value)
{
    std::array<char, sizeof(UInt)> buf{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffU);
    }
    os.write(buf.data(), buf.size());
}

inline void write_f32(std::ostream& os, float v) { write_uint<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_uint<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

/// u16 length prefix followed by the raw bytes.
inline void write_short_string(std::ostream& os, std::string_view s)
{
    if (s.size() > 0xffffU) {
        throw DataError("string too long for u16 length prefix: " + std::string(s.substr(0, 32)) + "...");
    }
    write_uint<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_f32_span(std::ostream& os, std::span<const float> values)
{
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float v : values) {
            write_f32(os, v);
        }
    }
}

class Reader {
  public:
    Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

    template <typename UInt>
    UInt read_uint()
    {
        std::array<unsigned char, sizeof(UInt)> buf{};
        read_bytes(reinterpret_cast<char*>(buf.data()), buf.size());
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        }
        return static_cast<UInt>(v);
    }

    float read_f32() { return std::bit_cast<float>(read_uint<std::uint32_t>()); }
    double read_f64() { return std::bit_cast<double>(read_uint<std::uint64_t>()); }

    void expect_magic(std::string_view magic)
    {
        std::string got(magic.size(), '\0');
        read_bytes(got.data(), got.size());
        if (got != magic) {
            fail("bad magic, expected \"" + std::string(magic) + "\"");
        }
    }

    std::string read_short_string()
    {
        auto len = read_uint<std::uint16_t>();
        std::string s(len, '\0');
        read_bytes(s.data(), len);
        return s;
    }

    void read_f32_span(std::span<float> out)
    {
        if constexpr (std::endian::native == std::endian::little) {
            read_bytes(reinterpret_cast<char*>(out.data()), out.size_bytes());
        } else {
            for (auto& v : out) {
                v = read_f32();
            }
        }
    }

    void expect_eof()
    {
        if (is_.peek() != std::char_traits<char>::eof()) {
            fail("trailing bytes after last record");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw DataError(source_ + ": " + msg); }

  private:
    void read_bytes(char* dst, std::size_t n)
    {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            fail("unexpected end of file");
        }
    }

    std::istream& is_;
    std::string source_;
};

}  // namespace met::binary
