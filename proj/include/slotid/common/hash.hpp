#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace slotid {

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  void add(std::string_view s) {
    for (unsigned char c : s) byte(c);
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>(v >> (8 * i)));
  }
  void add(std::span<const double> v) {
    for (double x : v) add(x);
  }
  [[nodiscard]] std::uint64_t digest() const { return h_; }
  [[nodiscard]] std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  void byte(unsigned char c) {
    h_ ^= c;
    h_ *= 0x100000001b3ULL;
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_hex(std::span<const double> v) {
  Fnv1a h;
  h.add(v);
  return h.hex();
}

}  // namespace slotid
