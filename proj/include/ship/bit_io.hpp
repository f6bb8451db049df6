#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "ship/cpu_features.hpp"

namespace ship {

class BitstreamTruncated : public std::runtime_error {
 public:
  BitstreamTruncated() : std::runtime_error("bitstream truncated") {}
};

/// MSB-first bit packer.
class BitWriter {
 public:
  /// Appends the low `nbits` (<= 32) of value.
  SHIP_ALWAYS_INLINE void put(std::uint32_t value, int nbits) {
    if (nbits == 0) return;
    acc_ = (acc_ << nbits) | (static_cast<std::uint64_t>(value) & low_mask(nbits));
    pending_ += nbits;
    bits_ += static_cast<std::size_t>(nbits);
    if (pending_ >= 32) {
      pending_ -= 32;
      std::uint32_t word = static_cast<std::uint32_t>(acc_ >> pending_);
      if constexpr (std::endian::native == std::endian::little) word = __builtin_bswap32(word);
      if (len_ + 4 > cap_) grow(len_ + 4);
      std::memcpy(buf_.get() + len_, &word, 4);
      len_ += 4;
      acc_ &= low_mask(pending_);
    }
  }

  void put_ones(std::uint64_t count) {
    while (count >= 32) {
      put(0xFFFFFFFFu, 32);
      count -= 32;
    }
    put(static_cast<std::uint32_t>(low_mask(static_cast<int>(count))), static_cast<int>(count));
  }

  /// Unary quotient (ones terminated by a zero), then k remainder bits.
  void put_rice(std::uint32_t u, int k) {
    const std::uint64_t q = static_cast<std::uint64_t>(u) >> k;
    if (q + 1 + static_cast<std::uint64_t>(k) <= 32) {
      const std::uint64_t code = ((low_mask(static_cast<int>(q)) << 1) << k) | (u & low_mask(k));
      put(static_cast<std::uint32_t>(code), static_cast<int>(q) + 1 + k);
      return;
    }
    if (q < 31) {
      put(static_cast<std::uint32_t>(low_mask(static_cast<int>(q)) << 1), static_cast<int>(q) + 1);
    } else {
      put_ones(q);
      put(0, 1);
    }
    put(u, k);
  }

  /// put_rice over a whole run, with the bit state kept in registers.
  SHIP_ALWAYS_INLINE void put_rice_run(std::span<const std::uint32_t> values, int k) {
    // Bits are kept left-aligned in `top`; every codeword stores the whole
    // 8-byte window and the write position advances by complete bytes only.
    const auto uk = static_cast<unsigned>(k);
    const std::uint64_t kmask = low_mask(k);
    std::size_t bits_before = len_ * 8 + static_cast<std::size_t>(pending_);
    if (len_ + values.size() * 4 + 16 > cap_) grow(len_ + values.size() * 4 + 16);
    std::uint8_t* out = buf_.get();
    std::size_t len = len_;
    unsigned used = static_cast<unsigned>(pending_);
    std::uint64_t top = used == 0 ? 0 : acc_ << (64 - used);
    for (const std::uint32_t u : values) {
      const std::uint64_t q = static_cast<std::uint64_t>(u) >> uk;
      if (q + uk >= 32) {
        acc_ = used == 0 ? 0 : top >> (64 - used);
        pending_ = static_cast<int>(used);
        len_ = len;
        put_rice(u, k);
        // put_rice counted these bits already
        bits_before += static_cast<std::size_t>(q + 1 + uk);
        if (len_ + values.size() * 4 + 16 > cap_) grow(len_ + values.size() * 4 + 16);
        out = buf_.get();
        len = len_;
        used = static_cast<unsigned>(pending_);
        top = used == 0 ? 0 : acc_ << (64 - used);
        continue;
      }
      const auto n = static_cast<unsigned>(q) + 1 + uk;
      const std::uint64_t code = (((std::uint64_t{1} << q) - 1) << (uk + 1)) | (u & kmask);
      top |= code << (64 - used - n);
      used += n;
      std::uint64_t be = top;
      if constexpr (std::endian::native == std::endian::little) be = __builtin_bswap64(be);
      std::memcpy(out + len, &be, 8);
      len += used >> 3;
      top <<= used & ~7u;
      used &= 7u;
    }
    acc_ = used == 0 ? 0 : top >> (64 - used);
    pending_ = static_cast<int>(used);
    len_ = len;
    bits_ += len * 8 + used - bits_before;
  }

  std::size_t bit_count() const { return bits_; }

  /// Zero-pads to a byte boundary and hands over the buffer.
  std::vector<std::uint8_t> finish() {
    std::vector<std::uint8_t> out;
    out.reserve(len_ + 8);
    out.assign(buf_.get(), buf_.get() + len_);
    while (pending_ >= 8) {
      pending_ -= 8;
      out.push_back(static_cast<std::uint8_t>(acc_ >> pending_));
    }
    if (pending_ > 0) {
      out.push_back(static_cast<std::uint8_t>(acc_ << (8 - pending_)));
    }
    acc_ = 0;
    pending_ = 0;
    len_ = 0;
    return out;
  }

  void reserve_bytes(std::size_t n) {
    if (cap_ < n + 4) grow(n + 4);
  }

 private:
  static constexpr std::uint64_t low_mask(int n) {
    return n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  }

  void grow(std::size_t need) {
    const std::size_t cap = std::max({need, cap_ * 2, std::size_t{64}});
    auto next = std::make_unique_for_overwrite<std::uint8_t[]>(cap);
    if (len_ > 0) std::memcpy(next.get(), buf_.get(), len_);
    buf_ = std::move(next);
    cap_ = cap;
  }

  std::unique_ptr<std::uint8_t[]> buf_;  // [0, len_) is written
  std::size_t cap_ = 0;
  std::size_t len_ = 0;
  std::uint64_t acc_ = 0;
  int pending_ = 0;
  std::size_t bits_ = 0;
};

/// MSB-first reader bounded by an explicit bit length, so a stream cut
/// inside the final byte is still detected. Throws BitstreamTruncated.
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_limit)
      : bytes_(bytes), limit_(std::min(bit_limit, bytes.size() * 8)) {}

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return limit_ - pos_; }

  std::uint32_t get(int nbits) {
    if (nbits == 0) return 0;
    if (remaining() < static_cast<std::size_t>(nbits)) throw BitstreamTruncated();
    const std::uint64_t w = window();
    pos_ += static_cast<std::size_t>(nbits);
    return static_cast<std::uint32_t>(w >> (64 - nbits));
  }

  /// One Rice codeword with parameter k.
  std::uint64_t get_rice(int k) {
    const std::uint64_t w = window();
    const auto q = static_cast<std::size_t>(std::countl_one(w));
    const std::size_t len = q + 1 + static_cast<std::size_t>(k);
    if (len <= 57 && len <= remaining()) {
      pos_ += len;
      const std::uint64_t low = k == 0 ? 0 : (w << (q + 1)) >> (64 - k);
      return (static_cast<std::uint64_t>(q) << k) | low;
    }
    const std::uint64_t quotient = get_unary();
    // Anything this long cannot be a 32-bit value; the caller rejects it.
    if (quotient > ((std::uint64_t{1} << 32) >> k)) return ~std::uint64_t{0};
    return (quotient << k) | get(k);
  }

  /// Decodes `count` Rice codewords, handing each to `sink(std::uint32_t)`.
  /// Returns false if a value does not fit in 32 bits.
  template <typename Sink>
  SHIP_ALWAYS_INLINE bool get_rice_run(int k, std::size_t count, Sink&& sink) {
    const std::uint8_t* data = bytes_.data();
    const std::size_t size = bytes_.size();
    const std::size_t limit = limit_;
    std::size_t pos = pos_;
    std::size_t i = 0;
    std::uint64_t w = 0;
    std::size_t avail = 0;  // valid bits at the top of w, never past limit
    std::uint64_t wide = 0;  // OR of every value, to catch ones past 32 bits
    const auto uk = static_cast<std::size_t>(k);
    while (i < count) {
      auto q = static_cast<std::size_t>(std::countl_one(w));
      std::size_t len = q + 1 + uk;
      if (len > avail) {
        const std::size_t byte = pos >> 3;
        if (byte + 8 > size) break;
        std::memcpy(&w, data + byte, 8);
        if constexpr (std::endian::native == std::endian::little) w = __builtin_bswap64(w);
        w <<= (pos & 7);
        avail = std::min<std::size_t>(64 - (pos & 7), limit - pos);
        q = static_cast<std::size_t>(std::countl_one(w));
        len = q + 1 + uk;
        if (len > avail) break;
      }
      // after dropping the q ones the terminator is the top bit
      const std::uint64_t v = (static_cast<std::uint64_t>(q) << uk) | ((w << q) >> (63 - uk));
      wide |= v;
      sink(static_cast<std::uint32_t>(v));
      ++i;
      pos += len;
      avail -= len;
      w = (w << (len - 1)) << 1;
    }
    if (wide > 0xFFFFFFFFu) {
      pos_ = pos;
      return false;
    }
    pos_ = pos;
    for (; i < count; ++i) {
      const std::uint64_t v = get_rice(k);
      if (v > 0xFFFFFFFFu) return false;
      sink(static_cast<std::uint32_t>(v));
    }
    return true;
  }

  /// Counts one-bits up to and including the terminating zero.
  std::uint64_t get_unary() {
    std::uint64_t count = 0;
    for (;;) {
      const std::size_t avail = std::min<std::size_t>(57, remaining());
      if (avail == 0) throw BitstreamTruncated();
      const std::uint64_t w = window();
      const auto ones = static_cast<std::size_t>(std::countl_one(w));
      if (ones < avail) {
        pos_ += ones + 1;
        return count + ones;
      }
      count += avail;
      pos_ += avail;
    }
  }

 private:
  // At least 57 valid bits starting at pos_, MSB aligned; bytes past the end read as zero.
  std::uint64_t window() const {
    const std::size_t byte = pos_ >> 3;
    std::uint64_t w = 0;
    if (byte + 8 <= bytes_.size()) {
      std::memcpy(&w, bytes_.data() + byte, 8);
      if constexpr (std::endian::native == std::endian::little) w = __builtin_bswap64(w);
    } else {
      for (std::size_t i = 0; i < 8; ++i) {
        w = (w << 8) | (byte + i < bytes_.size() ? bytes_[byte + i] : 0u);
      }
    }
    return w << (pos_ & 7);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace ship
