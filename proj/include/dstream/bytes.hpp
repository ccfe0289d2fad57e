#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dstream/errors.hpp"

// Explicit little-endian packing so file formats and wire payloads do not
// depend on host byte order.
namespace dstream::bytes {

inline void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::vector<std::byte>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_blob(std::vector<std::byte>& out, const std::byte* p, std::size_t n) {
  out.insert(out.end(), p, p + n);
}

/// Cursor-based reader with bounds checks; throws ProtocolError on overrun.
class Reader {
 public:
  Reader(const std::byte* data, std::size_t size) : data_(data), size_(size) {}
  explicit Reader(const std::vector<std::byte>& buf) : Reader(buf.data(), buf.size()) {}

  std::size_t remaining() const noexcept { return size_ - pos_; }
  bool done() const noexcept { return pos_ == size_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::vector<std::byte> blob(std::size_t n) {
    need(n);
    std::vector<std::byte> out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n)
      throw ProtocolError("buffer underrun: need " + std::to_string(n) + " bytes, have " +
                          std::to_string(size_ - pos_));
  }
  const std::byte* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace dstream::bytes
