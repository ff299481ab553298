#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "gaf/errors.hpp"

namespace gaf::io {

using Bytes = std::vector<std::uint8_t>;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void append_le(Bytes& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(raw[sizeof(T) - 1 - i]);
    } else {
        out.insert(out.end(), raw, raw + sizeof(T));
    }
}

template <class T>
void append_le_span(Bytes& out, std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        out.insert(out.end(), p, p + values.size_bytes());
    } else {
        for (const T& v : values) append_le(out, v);
    }
}

inline void append_bytes(Bytes& out, std::string_view s) {
    out.insert(out.end(), s.begin(), s.end());
}

/// Sequential little-endian reader; `section` names what is being read for error messages.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    std::span<const std::uint8_t> take(std::size_t n, const std::string& section) {
        if (remaining() < n) {
            throw ParseError(section, "file truncated: needed " + std::to_string(n) + " bytes, " +
                                          std::to_string(remaining()) + " available");
        }
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <class T>
    T read(const std::string& section) {
        const auto raw = take(sizeof(T), section);
        std::uint8_t buf[sizeof(T)];
        if constexpr (std::endian::native == std::endian::big) {
            for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = raw[sizeof(T) - 1 - i];
        } else {
            std::memcpy(buf, raw.data(), sizeof(T));
        }
        T v;
        std::memcpy(&v, buf, sizeof(T));
        return v;
    }

    template <class T>
    std::vector<T> read_vector(std::size_t count, const std::string& section) {
        std::vector<T> out(count);
        if constexpr (std::endian::native == std::endian::little) {
            const auto raw = take(count * sizeof(T), section);
            std::memcpy(out.data(), raw.data(), raw.size());
        } else {
            for (auto& v : out) v = read<T>(section);
        }
        return out;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

}  // namespace gaf::io
