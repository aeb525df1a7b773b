#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace apex {

/// Raised when a byte buffer is shorter than its declared contents.
class TruncatedInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

}  // namespace detail

/// Appends little-endian scalars to a growable buffer.
class ByteWriter {
public:
    ByteWriter() = default;
    explicit ByteWriter(std::vector<std::uint8_t>& out) : ext_(&out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        v = detail::to_little(v);
        auto& b = buf();
        const auto old = b.size();
        b.resize(old + sizeof(T));
        std::memcpy(b.data() + old, &v, sizeof(T));
    }

    void put_bytes(std::span<const std::uint8_t> bytes) {
        auto& b = buf();
        b.insert(b.end(), bytes.begin(), bytes.end());
    }

    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        auto& b = buf();
        b.insert(b.end(), s.begin(), s.end());
    }

    /// Overwrites a previously written u32 at `offset`.
    void patch_u32(std::size_t offset, std::uint32_t v) {
        v = detail::to_little(v);
        std::memcpy(buf().data() + offset, &v, sizeof(v));
    }

    std::size_t size() const { return ext_ ? ext_->size() : own_.size(); }
    std::vector<std::uint8_t>& buf() { return ext_ ? *ext_ : own_; }
    std::vector<std::uint8_t> take() { return ext_ ? *ext_ : std::move(own_); }

private:
    std::vector<std::uint8_t> own_;
    std::vector<std::uint8_t>* ext_ = nullptr;
};

/// Bounds-checked little-endian reader over a borrowed byte span.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        require(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return detail::to_little(v);
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::string get_string() {
        const auto n = get<std::uint32_t>();
        auto bytes = get_bytes(n);
        return std::string(bytes.begin(), bytes.end());
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    void require(std::size_t n) const {
        if (n > data_.size() - pos_) {
            throw TruncatedInput("input truncated: need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(data_.size() - pos_));
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// FNV-1a over raw bytes. Used for snapshot fingerprints and checkpoint checksums.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace apex
