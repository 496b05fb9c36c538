#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

#include "mvsketch/hash.hpp"

namespace mvsketch {

// Fixed-width opaque flow key of 1..16 bytes. Bytes past size() are always zero,
// so the defaulted comparisons give bytewise ordering for keys of equal width.
class FlowKey {
 public:
  static constexpr std::size_t kMaxBytes = 16;

  FlowKey() = default;

  // All-zero key of the given width.
  explicit FlowKey(std::size_t width) : size_(checked_width(width)) {}

  static FlowKey from_bytes(std::span<const std::uint8_t> bytes) {
    FlowKey key(bytes.size());
    std::copy(bytes.begin(), bytes.end(), key.bytes_.begin());
    return key;
  }

  // Big-endian: from_uint(1, 4) has bytes 00 00 00 01.
  static FlowKey from_uint(std::uint64_t value, std::size_t width) {
    FlowKey key(width);
    for (std::size_t i = 0; i < width && i < 8; ++i) {
      key.bytes_[width - 1 - i] = static_cast<std::uint8_t>(value >> (8 * i));
    }
    return key;
  }

  // Exactly 2*width hex digits, either case.
  static FlowKey from_hex(std::string_view hex, std::size_t width) {
    FlowKey key(width);
    if (hex.size() != 2 * width) {
      throw std::invalid_argument("flow key hex must have " + std::to_string(2 * width) +
                                  " digits, got " + std::to_string(hex.size()));
    }
    for (std::size_t i = 0; i < width; ++i) {
      key.bytes_[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return key;
  }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(2 * size_, '0');
    for (std::size_t i = 0; i < size_; ++i) {
      out[2 * i] = kDigits[bytes_[i] >> 4];
      out[2 * i + 1] = kDigits[bytes_[i] & 0xf];
    }
    return out;
  }

  // Low 64 bits of the big-endian value.
  std::uint64_t to_uint() const {
    std::uint64_t v = 0;
    for (std::size_t i = size_ > 8 ? size_ - 8 : 0; i < size_; ++i) v = (v << 8) | bytes_[i];
    return v;
  }

  std::span<const std::uint8_t> bytes() const { return {bytes_.data(), size_}; }
  std::size_t size() const { return size_; }
  bool is_zero() const {
    return std::all_of(bytes_.begin(), bytes_.end(), [](std::uint8_t b) { return b == 0; });
  }

  friend bool operator==(const FlowKey&, const FlowKey&) = default;
  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;

 private:
  static std::uint8_t checked_width(std::size_t width) {
    if (width < 1 || width > kMaxBytes) {
      throw std::invalid_argument("flow key width must be in [1, 16], got " + std::to_string(width));
    }
    return static_cast<std::uint8_t>(width);
  }

  static std::uint8_t nibble(char c) {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument(std::string("invalid hex digit '") + c + "'");
  }

  std::array<std::uint8_t, kMaxBytes> bytes_{};
  std::uint8_t size_ = 0;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& key) const noexcept {
    return static_cast<std::size_t>(murmur64a(key.bytes(), 0x6d76736b65746368ULL));
  }
};

// Exact per-flow sums (or changes), keyed by flow.
using FlowCounts = std::unordered_map<FlowKey, std::uint64_t, FlowKeyHash>;

}  // namespace mvsketch
