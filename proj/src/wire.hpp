#pragma once

// Internal little-endian encode/decode helpers shared by the binary
// file and frame codecs. Not part of the public interface.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "sepstream/errors.hpp"

namespace sepstream::wire {

inline void store_u16(std::vector<std::byte>& out, uint16_t v) {
    out.push_back(std::byte(v & 0xff));
    out.push_back(std::byte((v >> 8) & 0xff));
}

inline void store_u64(std::vector<std::byte>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(std::byte((v >> (8 * i)) & 0xff));
}

inline void store_f64(std::vector<std::byte>& out, double v) {
    store_u64(out, std::bit_cast<uint64_t>(v));
}

// Bounds-checked read cursor; overruns throw IntegrityError with the
// supplied context string.
class ByteCursor {
public:
    ByteCursor(std::span<const std::byte> bytes, std::string overrun_message)
        : bytes_(bytes), overrun_(std::move(overrun_message)) {}

    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(bytes_[pos_++]);
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(bytes_[pos_])) |
                     static_cast<uint16_t>(static_cast<uint8_t>(bytes_[pos_ + 1])) << 8;
        pos_ += 2;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void raw(void* dst, size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size())
            throw IntegrityError(overrun_);
    }
    std::span<const std::byte> bytes_;
    std::string overrun_;
    size_t pos_ = 0;
};

} // namespace sepstream::wire
