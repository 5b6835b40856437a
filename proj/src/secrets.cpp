#include "tfrelay/secrets.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <random>

namespace tfrelay {

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Parse, "invalid " + std::string(what) + ": '" +
                                      std::string(text) + "'");
  }
  return value;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

// ---------------------------------------------------------------- Party

std::string Party::label() const {
  if (is_alice()) return "A";
  if (is_bob()) return "B";
  return "N" + std::to_string(relay_number());
}

Party Party::parse(std::string_view label) {
  if (label == "A") return alice();
  if (label == "B") return bob();
  if (label.size() >= 2 && label[0] == 'N') {
    int k = parse_int(label.substr(1), "node label");
    if (k >= 1) return relay(k);
  }
  throw Error(ErrorCode::Parse, "unknown node label '" + std::string(label) + "'");
}

// ---------------------------------------------------------------- BitString

BitString BitString::zeros(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "bit length must be >= 1");
  return BitString(n, std::vector<std::uint8_t>((n + 7) / 8, 0));
}

BitString BitString::from_bits(std::string_view bits) {
  BitString out = zeros(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') {
      out.set(i, true);
    } else if (bits[i] != '0') {
      throw Error(ErrorCode::Parse, "bit strings contain only '0' and '1'");
    }
  }
  return out;
}

BitString BitString::from_hex(std::string_view hex, std::size_t n) {
  BitString out = zeros(n);
  if (hex.size() != 2 * out.bytes_.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "hex value has " + std::to_string(hex.size()) + " chars, expected " +
                    std::to_string(2 * out.bytes_.size()) + " for n=" +
                    std::to_string(n));
  }
  for (std::size_t i = 0; i < out.bytes_.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::Parse, "invalid hex digit");
    out.bytes_[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  std::uint8_t before = out.bytes_.back();
  out.mask_tail();
  if (before != out.bytes_.back()) {
    throw Error(ErrorCode::Parse, "hex value sets bits beyond length n");
  }
  return out;
}

BitString BitString::from_bytes(std::span<const std::uint8_t> bytes, std::size_t n) {
  BitString out = zeros(n);
  if (bytes.size() != out.bytes_.size()) {
    throw Error(ErrorCode::LengthMismatch, "byte count does not match bit length");
  }
  std::copy(bytes.begin(), bytes.end(), out.bytes_.begin());
  out.mask_tail();
  return out;
}

void BitString::mask_tail() {
  if (n_ % 8 != 0) bytes_.back() &= static_cast<std::uint8_t>((1u << (n_ % 8)) - 1);
}

bool BitString::get(std::size_t i) const {
  if (i >= n_) throw Error(ErrorCode::InvalidArgument, "bit index out of range");
  return (bytes_[i / 8] >> (i % 8)) & 1u;
}

void BitString::set(std::size_t i, bool value) {
  if (i >= n_) throw Error(ErrorCode::InvalidArgument, "bit index out of range");
  auto mask = static_cast<std::uint8_t>(1u << (i % 8));
  if (value) {
    bytes_[i / 8] |= mask;
  } else {
    bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
  }
}

void BitString::flip(std::size_t i) { set(i, !get(i)); }

bool BitString::is_zero() const {
  return std::all_of(bytes_.begin(), bytes_.end(), [](std::uint8_t b) { return b == 0; });
}

std::size_t BitString::popcount() const {
  std::size_t total = 0;
  for (auto b : bytes_) total += static_cast<std::size_t>(std::popcount(b));
  return total;
}

std::string BitString::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes_.size() * 2);
  for (auto b : bytes_) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string BitString::to_bits() const {
  std::string out(n_, '0');
  for (std::size_t i = 0; i < n_; ++i) {
    if (get(i)) out[i] = '1';
  }
  return out;
}

BitString& BitString::operator^=(const BitString& other) {
  if (n_ != other.n_) {
    throw Error(ErrorCode::LengthMismatch, "xor of bit strings with lengths " +
                                               std::to_string(n_) + " and " +
                                               std::to_string(other.n_));
  }
  for (std::size_t i = 0; i < bytes_.size(); ++i) bytes_[i] ^= other.bytes_[i];
  return *this;
}

// ---------------------------------------------------------------- SecretId

SecretId SecretId::tf_key(Party a, Party b) {
  if (a == b) throw Error(ErrorCode::InvalidArgument, "a key needs two distinct nodes");
  return SecretId(SecretKind::TfKey, std::min(a, b), std::max(a, b), 0);
}

SecretId SecretId::p2p_key(Party a, Party b) {
  if (a == b) throw Error(ErrorCode::InvalidArgument, "a key needs two distinct nodes");
  return SecretId(SecretKind::P2pKey, std::min(a, b), std::max(a, b), 0);
}

SecretId SecretId::nonce(Party owner, int path_index) {
  if (path_index < 0) throw Error(ErrorCode::InvalidArgument, "negative path index");
  return SecretId(SecretKind::Nonce, owner, owner, path_index);
}

bool SecretId::involves(Party p) const {
  if (kind_ == SecretKind::Nonce) return first_ == p;
  return first_ == p || second_ == p;
}

std::string SecretId::name() const {
  switch (kind_) {
    case SecretKind::TfKey:
      return "K[" + first_.label() + "," + second_.label() + "]";
    case SecretKind::P2pKey:
      return "P[" + first_.label() + "," + second_.label() + "]";
    case SecretKind::Nonce:
      if (path_index_ > 0) return "X[" + std::to_string(path_index_) + "]";
      return "X[" + first_.label() + "]";
  }
  return {};
}

SecretId SecretId::parse(std::string_view name) {
  auto fail = [&]() -> SecretId {
    throw Error(ErrorCode::Parse, "malformed secret id '" + std::string(name) + "'");
  };
  if (name.size() < 4 || name[1] != '[' || name.back() != ']') return fail();
  std::string_view body = name.substr(2, name.size() - 3);
  char kind = name[0];
  if (kind == 'X') {
    if (!body.empty() && body[0] >= '0' && body[0] <= '9') {
      int path = parse_int(body, "path index");
      if (path < 1) return fail();
      return nonce(Party::alice(), path);
    }
    return nonce(Party::parse(body));
  }
  auto comma = body.find(',');
  if (comma == std::string_view::npos) return fail();
  Party a = Party::parse(body.substr(0, comma));
  Party b = Party::parse(body.substr(comma + 1));
  if (kind == 'K') return tf_key(a, b);
  if (kind == 'P') return p2p_key(a, b);
  return fail();
}

// ---------------------------------------------------------------- SymbolicExpr

SymbolicExpr::SymbolicExpr(std::initializer_list<SecretId> ids) {
  for (const auto& id : ids) *this += id;
}

SymbolicExpr SymbolicExpr::parse(std::string_view text) {
  SymbolicExpr out;
  if (text == "0") return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto plus = text.find('+', start);
    auto token = text.substr(start, plus == std::string_view::npos ? std::string_view::npos
                                                                   : plus - start);
    out += SecretId::parse(token);
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return out;
}

bool SymbolicExpr::contains(const SecretId& id) const {
  return std::binary_search(terms_.begin(), terms_.end(), id);
}

std::string SymbolicExpr::to_string() const {
  if (terms_.empty()) return "0";
  std::string out;
  for (const auto& id : terms_) {
    if (!out.empty()) out.push_back('+');
    out += id.name();
  }
  return out;
}

SymbolicExpr& SymbolicExpr::operator+=(const SecretId& id) {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), id);
  if (it != terms_.end() && *it == id) {
    terms_.erase(it);
  } else {
    terms_.insert(it, id);
  }
  return *this;
}

SymbolicExpr& SymbolicExpr::operator+=(const SymbolicExpr& other) {
  std::vector<SecretId> merged;
  merged.reserve(terms_.size() + other.terms_.size());
  std::set_symmetric_difference(terms_.begin(), terms_.end(), other.terms_.begin(),
                                other.terms_.end(), std::back_inserter(merged));
  terms_ = std::move(merged);
  return *this;
}

// ---------------------------------------------------------------- KeyStore

KeyStore::KeyStore(std::size_t n) : n_(n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "bit length must be >= 1");
}

void KeyStore::insert(const SecretId& id, BitString value) {
  if (value.size() != n_) {
    throw Error(ErrorCode::LengthMismatch, "value for " + id.name() + " has length " +
                                               std::to_string(value.size()) +
                                               ", store holds n=" + std::to_string(n_));
  }
  if (!values_.emplace(id, std::move(value)).second) {
    throw Error(ErrorCode::DuplicateSecret, "secret " + id.name() + " already present");
  }
}

const BitString& KeyStore::at(const SecretId& id) const {
  auto it = values_.find(id);
  if (it == values_.end()) {
    throw Error(ErrorCode::MissingSecret, "secret " + id.name() + " not in store");
  }
  return it->second;
}

// ---------------------------------------------------------------- sampling

std::uint64_t mix_seed(std::uint64_t seed, std::string_view domain) {
  // FNV-1a over the domain string, folded into a splitmix64 finalizer.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : domain) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

BitString derive_secret(const SecretId& id, std::size_t n, std::uint64_t seed) {
  BitString out = BitString::zeros(n);
  std::mt19937_64 engine(mix_seed(seed, id.name()));
  std::vector<std::uint8_t> bytes(out.bytes().size());
  for (std::size_t i = 0; i < bytes.size(); i += 8) {
    std::uint64_t word = engine();
    for (std::size_t j = 0; j < 8 && i + j < bytes.size(); ++j) {
      bytes[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
    }
  }
  return BitString::from_bytes(bytes, n);
}

BitString sample_secret(KeyStore& store, const SecretId& id, std::uint64_t seed) {
  if (store.contains(id)) {
    throw Error(ErrorCode::DuplicateSecret, "secret " + id.name() + " already sampled");
  }
  BitString value = derive_secret(id, store.bit_length(), seed);
  store.insert(id, value);
  return value;
}

BitString eval(const SymbolicExpr& expr, const KeyStore& store) {
  BitString out = BitString::zeros(store.bit_length());
  for (const auto& id : expr.terms()) out ^= store.at(id);
  return out;
}

}  // namespace tfrelay
