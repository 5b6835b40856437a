#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfrelay/error.hpp"

namespace tfrelay {

// A network participant as it appears inside secret names. Alice and Bob sort
// before the intermediaries so that canonical names read K[A,N2], K[B,N1].
class Party {
 public:
  static constexpr Party alice() { return Party(0); }
  static constexpr Party bob() { return Party(1); }
  static constexpr Party relay(int k) { return Party(k + 1); }

  bool is_alice() const { return code_ == 0; }
  bool is_bob() const { return code_ == 1; }
  bool is_endpoint() const { return code_ <= 1; }
  // 1-based intermediary number; 0 for endpoints.
  int relay_number() const { return is_endpoint() ? 0 : code_ - 1; }

  std::string label() const;
  static Party parse(std::string_view label);

  auto operator<=>(const Party&) const = default;

 private:
  constexpr explicit Party(int code) : code_(code) {}
  int code_;
};

// Fixed-length bit string. Bit i lives in byte i/8 at position i%8
// (little-endian by bit index); unused high bits of the last byte stay zero.
class BitString {
 public:
  BitString() = default;
  static BitString zeros(std::size_t n);
  // "1010" -> bit0=1, bit1=0, ...
  static BitString from_bits(std::string_view bits);
  static BitString from_hex(std::string_view hex, std::size_t n);
  static BitString from_bytes(std::span<const std::uint8_t> bytes, std::size_t n);

  std::size_t size() const { return n_; }
  bool get(std::size_t i) const;
  void set(std::size_t i, bool value);
  void flip(std::size_t i);
  bool is_zero() const;
  std::size_t popcount() const;

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::string to_hex() const;
  std::string to_bits() const;

  BitString& operator^=(const BitString& other);
  friend BitString operator^(BitString a, const BitString& b) {
    a ^= b;
    return a;
  }
  bool operator==(const BitString&) const = default;

 private:
  BitString(std::size_t n, std::vector<std::uint8_t> bytes)
      : n_(n), bytes_(std::move(bytes)) {}
  void mask_tail();

  std::size_t n_ = 0;
  std::vector<std::uint8_t> bytes_;
};

enum class SecretKind { TfKey, P2pKey, Nonce };

// Identity of one secret bitstring. Keys name an unordered node pair
// (stored low/high); nonces name an owner and, for multipath runs, the
// 1-based path index.
class SecretId {
 public:
  static SecretId tf_key(Party a, Party b);
  static SecretId p2p_key(Party a, Party b);
  static SecretId nonce(Party owner, int path_index = 0);
  static SecretId parse(std::string_view name);

  SecretKind kind() const { return kind_; }
  bool is_key() const { return kind_ != SecretKind::Nonce; }
  Party first() const { return first_; }
  Party second() const { return second_; }
  Party owner() const { return first_; }
  int path_index() const { return path_index_; }
  bool involves(Party p) const;

  std::string name() const;

  auto operator<=>(const SecretId&) const = default;

 private:
  SecretId(SecretKind kind, Party a, Party b, int path)
      : kind_(kind), first_(a), second_(b), path_index_(path) {}

  SecretKind kind_;
  Party first_;
  Party second_;
  int path_index_;
};

// GF(2) linear combination of secrets. Terms are kept sorted and unique, so
// equality and the text form are canonical.
class SymbolicExpr {
 public:
  SymbolicExpr() = default;
  SymbolicExpr(std::initializer_list<SecretId> ids);
  static SymbolicExpr of(const SecretId& id) { return SymbolicExpr{id}; }
  static SymbolicExpr parse(std::string_view text);

  const std::vector<SecretId>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  bool contains(const SecretId& id) const;

  // "K[A,N2]+X[A]"; "0" for the zero expression.
  std::string to_string() const;

  SymbolicExpr& operator+=(const SymbolicExpr& other);
  SymbolicExpr& operator+=(const SecretId& id);
  friend SymbolicExpr operator+(SymbolicExpr a, const SymbolicExpr& b) {
    a += b;
    return a;
  }
  bool operator==(const SymbolicExpr&) const = default;

 private:
  std::vector<SecretId> terms_;
};

inline SymbolicExpr sym_add(const SymbolicExpr& a, const SymbolicExpr& b) {
  return a + b;
}

// Insert-once map from secret identity to value; all values share length n.
class KeyStore {
 public:
  explicit KeyStore(std::size_t n);

  std::size_t bit_length() const { return n_; }
  void insert(const SecretId& id, BitString value);
  bool contains(const SecretId& id) const { return values_.count(id) != 0; }
  const BitString& at(const SecretId& id) const;
  std::size_t size() const { return values_.size(); }
  const std::map<SecretId, BitString>& entries() const { return values_; }

  bool operator==(const KeyStore&) const = default;

 private:
  std::size_t n_;
  std::map<SecretId, BitString> values_;
};

// Deterministic uniform bits for `id` under `seed`. The value depends only on
// (seed, id, n), never on the order in which secrets are drawn.
BitString derive_secret(const SecretId& id, std::size_t n, std::uint64_t seed);

// Draws the secret and registers it; a second draw of the same id throws.
BitString sample_secret(KeyStore& store, const SecretId& id, std::uint64_t seed);

BitString eval(const SymbolicExpr& expr, const KeyStore& store);

// Stable 64-bit mixing shared by every seeded stream in the library.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view domain);

}  // namespace tfrelay
