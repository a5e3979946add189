#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ruleloc/error.hpp"

namespace ruleloc {

// Packed bitset over example ids. Union plus popcount gives exact group
// flip counts under the union-of-flips model.
class Bitset {
 public:
  Bitset() = default;
  explicit Bitset(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const noexcept { return size_; }

  bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1U; }

  void set(std::size_t i) {
    check(i);
    words_[i >> 6] |= std::uint64_t{1} << (i & 63);
  }

  void reset(std::size_t i) {
    check(i);
    words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
  }

  std::size_t count() const noexcept {
    std::size_t total = 0;
    for (std::uint64_t w : words_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
  }

  bool none() const noexcept {
    for (std::uint64_t w : words_)
      if (w != 0) return false;
    return true;
  }

  Bitset& operator|=(const Bitset& other) {
    require(other.size_ == size_, ErrorCode::InvalidArgument, "bitset size mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    return *this;
  }

  Bitset& operator&=(const Bitset& other) {
    require(other.size_ == size_, ErrorCode::InvalidArgument, "bitset size mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
    return *this;
  }

  friend Bitset operator|(Bitset a, const Bitset& b) { return a |= b; }
  friend Bitset operator&(Bitset a, const Bitset& b) { return a &= b; }

  friend bool operator==(const Bitset&, const Bitset&) = default;

  std::vector<std::size_t> ones() const {
    std::vector<std::size_t> out;
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0) {
        out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
        bits &= bits - 1;
      }
    }
    return out;
  }

  // Run-length encoding: alternating run lengths starting with a run of
  // zeros (possibly empty). Runs sum to size().
  std::vector<std::size_t> to_runs() const {
    std::vector<std::size_t> runs;
    bool current = false;
    std::size_t length = 0;
    for (std::size_t i = 0; i < size_; ++i) {
      if (test(i) != current) {
        runs.push_back(length);
        current = !current;
        length = 0;
      }
      ++length;
    }
    runs.push_back(length);
    return runs;
  }

  static Bitset from_runs(std::size_t size, const std::vector<std::size_t>& runs) {
    Bitset out(size);
    std::size_t pos = 0;
    bool value = false;
    for (std::size_t run : runs) {
      require(pos + run <= size, ErrorCode::Parse, "run-length encoding overflows bitset size");
      if (value)
        for (std::size_t i = pos; i < pos + run; ++i) out.set(i);
      pos += run;
      value = !value;
    }
    require(pos == size, ErrorCode::Parse, "run-length encoding does not cover bitset size");
    return out;
  }

 private:
  void check(std::size_t i) const {
    if (i >= size_) fail(ErrorCode::Lookup, "bit index out of range");
  }

  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace ruleloc
