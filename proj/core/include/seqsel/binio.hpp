#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "seqsel/errors.hpp"

namespace seqsel::binio {

// Little-endian scalar encoding for the binary artifact containers. Encoding
// is explicit byte-by-byte so the files are identical across hosts.

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data, std::string what)
      : data_(data), what_(std::move(what)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  void expect_magic(std::string_view magic) {
    need(magic.size());
    require(data_.substr(pos_, magic.size()) == magic, ErrorKind::model,
            what_ + ": bad magic, expected '" + std::string(magic) + "'");
    pos_ += magic.size();
  }

  size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    require(pos_ + n <= data_.size(), ErrorKind::model, what_ + ": truncated container");
  }
  std::string_view data_;
  size_t pos_ = 0;
  std::string what_;
};

}  // namespace seqsel::binio
