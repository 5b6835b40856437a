#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace tfrelay::gf2 {

// Dense GF(2) vector packed into 64-bit words.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const { return bits_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  void flip(std::size_t i) { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  bool any() const {
    for (auto w : words_) {
      if (w) return true;
    }
    return false;
  }

  std::optional<std::size_t> lowest() const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (words_[w]) return w * 64 + static_cast<std::size_t>(std::countr_zero(words_[w]));
    }
    return std::nullopt;
  }

  BitVector& operator^=(const BitVector& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= o.words_[w];
    return *this;
  }

  bool operator==(const BitVector&) const = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

// Incremental row-echelon basis that remembers, for every basis row, which
// of the inserted generators XOR to it. Pivot = lowest set column, so the
// result is deterministic for a fixed insertion order.
class SpanTracker {
 public:
  SpanTracker(std::size_t columns, std::size_t max_generators)
      : columns_(columns), max_generators_(max_generators), pivot_row_(columns, -1) {}

  // Returns false when the generator was already in the span.
  bool add(const BitVector& v) {
    BitVector combo(max_generators_);
    combo.set(generators_++);
    BitVector row = v;
    reduce(row, combo);
    auto pivot = row.lowest();
    if (!pivot) return false;
    pivot_row_[*pivot] = static_cast<int>(rows_.size());
    rows_.push_back({std::move(row), std::move(combo)});
    return true;
  }

  // Generators XOR-ing to `target`, or nullopt if outside the span.
  std::optional<BitVector> express(const BitVector& target) const {
    BitVector combo(max_generators_);
    BitVector row = target;
    reduce(row, combo);
    if (row.any()) return std::nullopt;
    return combo;
  }

  std::size_t rank() const { return rows_.size(); }

 private:
  struct Row {
    BitVector value;
    BitVector combo;
  };

  void reduce(BitVector& row, BitVector& combo) const {
    while (auto pivot = row.lowest()) {
      int r = pivot_row_[*pivot];
      if (r < 0) return;
      row ^= rows_[static_cast<std::size_t>(r)].value;
      combo ^= rows_[static_cast<std::size_t>(r)].combo;
    }
  }

  std::size_t columns_;
  std::size_t max_generators_;
  std::size_t generators_ = 0;
  std::vector<int> pivot_row_;
  std::vector<Row> rows_;
};

}  // namespace tfrelay::gf2
