#include "tfrelay/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "tfrelay/keyplan.hpp"

namespace tfrelay::wire {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// ------------------------------------------------------------------ framing

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void hmac_sha256(std::span<const std::uint8_t> key, const std::uint8_t* data, std::size_t len,
                 std::uint8_t* out) {
  unsigned int out_len = 0;
  static const std::uint8_t kEmpty = 0;
  const std::uint8_t* key_ptr = key.empty() ? &kEmpty : key.data();
  if (!HMAC(EVP_sha256(), key_ptr, static_cast<int>(key.size()), data, len, out, &out_len) ||
      out_len != kTagSize) {
    throw Error(ErrorCode::Io, "HMAC-SHA256 failed");
  }
}

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x04; }

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame, std::span<const std::uint8_t> key) {
  const std::uint64_t payload = 2 + frame.body.size();
  if (payload > kMaxPayload) throw Error(ErrorCode::LimitExceeded, "frame payload too large");
  const auto length = static_cast<std::uint32_t>(1 + payload + kTagSize);
  std::vector<std::uint8_t> out;
  out.reserve(4 + length);
  put_u32(out, length);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  out.push_back(static_cast<std::uint8_t>(frame.index >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.index & 0xff));
  out.insert(out.end(), frame.body.begin(), frame.body.end());
  std::uint8_t tag[kTagSize];
  hmac_sha256(key, out.data() + 4, out.size() - 4, tag);
  out.insert(out.end(), tag, tag + kTagSize);
  return out;
}

std::string decode_status_name(DecodeStatus status) {
  switch (status) {
    case DecodeStatus::Ok: return "OK";
    case DecodeStatus::Incomplete: return "INCOMPLETE";
    case DecodeStatus::BadLength: return "BAD_LENGTH";
    case DecodeStatus::BadTag: return "BAD_TAG";
    case DecodeStatus::UnknownType: return "UNKNOWN_TYPE";
  }
  return "?";
}

namespace {

// Status of the length prefix at the front of `bytes`.
DecodeStatus check_length(std::span<const std::uint8_t> bytes, std::size_t max_length,
                          std::uint32_t& length) {
  if (bytes.size() < 4) return DecodeStatus::Incomplete;
  length = get_u32(bytes.data());
  if (length < kMinFrameLength || length > max_length) return DecodeStatus::BadLength;
  if (bytes.size() < 4 + std::size_t{length}) return DecodeStatus::Incomplete;
  return DecodeStatus::Ok;
}

DecodeResult decode_body(std::span<const std::uint8_t> frame, std::span<const std::uint8_t> key) {
  DecodeResult r;
  r.consumed = frame.size();
  const std::size_t signed_len = frame.size() - 4 - kTagSize;
  std::uint8_t tag[kTagSize];
  hmac_sha256(key, frame.data() + 4, signed_len, tag);
  if (CRYPTO_memcmp(tag, frame.data() + 4 + signed_len, kTagSize) != 0) {
    r.status = DecodeStatus::BadTag;
    return r;
  }
  if (!known_type(frame[4])) {
    r.status = DecodeStatus::UnknownType;
    return r;
  }
  r.frame.type = static_cast<FrameType>(frame[4]);
  r.frame.index = static_cast<std::uint16_t>((frame[5] << 8) | frame[6]);
  r.frame.body.assign(frame.begin() + 7, frame.begin() + 4 + static_cast<long>(signed_len));
  r.status = DecodeStatus::Ok;
  return r;
}

}  // namespace

DecodeResult decode_frame(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> key,
                          std::size_t max_length) {
  std::uint32_t length = 0;
  DecodeStatus s = check_length(bytes, max_length, length);
  if (s == DecodeStatus::Incomplete || (s == DecodeStatus::Ok && bytes.size() != 4 + length)) {
    s = DecodeStatus::BadLength;
  }
  if (s != DecodeStatus::Ok) return {s, {}, 0};
  return decode_body(bytes, key);
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

DecodeResult FrameReader::next(std::span<const std::uint8_t> key) {
  std::uint32_t length = 0;
  DecodeStatus s = check_length(buffer_, max_length_, length);
  if (s != DecodeStatus::Ok) return {s, {}, 0};
  DecodeResult r = decode_body(std::span(buffer_).first(4 + std::size_t{length}), key);
  buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + length);
  return r;
}

DecodeStatus FrameReader::peek(std::span<const std::uint8_t>& frame) const {
  std::uint32_t length = 0;
  DecodeStatus s = check_length(buffer_, max_length_, length);
  if (s == DecodeStatus::Ok) frame = std::span(buffer_).first(4 + std::size_t{length});
  return s;
}

void FrameReader::drop(std::size_t bytes) {
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(std::min(bytes, buffer_.size())));
}

std::string abort_reason_name(AbortReason reason) {
  switch (reason) {
    case AbortReason::BadTag: return "BAD_TAG";
    case AbortReason::BadLength: return "BAD_LENGTH";
    case AbortReason::UnknownType: return "UNKNOWN_TYPE";
    case AbortReason::PositionMismatch: return "POSITION_MISMATCH";
    case AbortReason::MissingKey: return "MISSING_KEY";
    case AbortReason::UnexpectedMessage: return "UNEXPECTED_MESSAGE";
    case AbortReason::PeerLost: return "PEER_LOST";
    case AbortReason::Timeout: return "TIMEOUT";
    case AbortReason::Io: return "IO";
  }
  return "UNKNOWN";
}

namespace {

std::optional<AbortReason> parse_abort_reason(std::string_view name) {
  for (int r = 1; r <= 9; ++r) {
    auto reason = static_cast<AbortReason>(r);
    if (abort_reason_name(reason) == name) return reason;
  }
  return std::nullopt;
}

}  // namespace

// ----------------------------------------------------------- keys and config

LinkKey derive_link_key(Party a, Party b, std::uint64_t seed) {
  if (b < a) std::swap(a, b);
  std::mt19937_64 rng(mix_seed(seed, "link:" + a.label() + "-" + b.label()));
  LinkKey key(kTagSize);
  for (std::size_t i = 0; i < key.size(); i += 8) {
    std::uint64_t word = rng();
    for (std::size_t j = 0; j < 8; ++j) key[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
  }
  return key;
}

KeyStore key_slice(const KeyStore& store, Party node) {
  KeyStore out(store.bit_length());
  for (const auto& [id, value] : store.entries()) {
    if (id.involves(node)) out.insert(id, value);
  }
  return out;
}

namespace {

std::string bytes_to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 15]);
  }
  return out;
}

LinkKey hex_to_bytes(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::Parse, "odd-length hex string");
  return BitString::from_hex(hex, hex.size() * 4).bytes();
}

std::uint16_t parse_port(const std::string& text) {
  long v = 0;
  try {
    std::size_t used = 0;
    v = std::stol(text, &used);
    if (used != text.size()) throw Error(ErrorCode::Parse, "");
  } catch (...) {
    throw Error(ErrorCode::Parse, "bad port '" + text + "'");
  }
  if (v < 1 || v > 65535) throw Error(ErrorCode::Parse, "port out of range: " + text);
  return static_cast<std::uint16_t>(v);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out.flush()) throw Error(ErrorCode::Io, "write failed: " + path);
}

}  // namespace

Config NodeConfig::to_config() const {
  Config c;
  c.set("node", node.label());
  c.set("variant", variant);
  const Config shape = topology.to_config();
  for (const auto& [k, v] : shape.entries()) c.set(k, v);
  c.set("n", std::to_string(n));
  c.set("host", host);
  c.set("listen_port", std::to_string(listen_port));
  for (const auto& [peer, port] : peer_ports) c.set("peer." + peer.label(), std::to_string(port));
  for (const auto& [peer, key] : link_keys) c.set("link_key." + peer.label(), bytes_to_hex(key));
  c.set("keys_file", keys_file);
  if (!output_file.empty()) c.set("output_file", output_file);
  c.set("transcript_file", transcript_file);
  if (tamper_message) c.set("tamper_message", std::to_string(*tamper_message));
  c.set("timeout_ms", std::to_string(timeout_ms));
  return c;
}

NodeConfig NodeConfig::from_config(const Config& c) {
  NodeConfig cfg;
  cfg.node = Party::parse(c.require("node"));
  cfg.variant = c.require("variant");
  cfg.topology = Topology::from_config(c);
  auto n = c.get_int("n");
  if (!n || *n < 1) throw Error(ErrorCode::Parse, "node config needs n >= 1");
  cfg.n = static_cast<std::size_t>(*n);
  cfg.host = c.get("host").value_or("127.0.0.1");
  cfg.listen_port = parse_port(c.require("listen_port"));
  for (const auto& [key, value] : c.entries()) {
    if (key.rfind("peer.", 0) == 0) {
      cfg.peer_ports.emplace_back(Party::parse(key.substr(5)), parse_port(value));
    } else if (key.rfind("link_key.", 0) == 0) {
      cfg.link_keys.emplace_back(Party::parse(key.substr(9)), hex_to_bytes(value));
    }
  }
  cfg.keys_file = c.require("keys_file");
  cfg.output_file = c.get("output_file").value_or("");
  cfg.transcript_file = c.require("transcript_file");
  if (auto t = c.get_int("tamper_message")) cfg.tamper_message = static_cast<int>(*t);
  if (auto t = c.get_int("timeout_ms")) {
    if (*t < 1) throw Error(ErrorCode::Parse, "timeout_ms must be positive");
    cfg.timeout_ms = static_cast<int>(*t);
  }
  if (!cfg.topology.contains(cfg.node)) {
    throw Error(ErrorCode::Parse, "node " + cfg.node.label() + " is not in the topology");
  }
  for (Party peer : cfg.topology.neighbors(cfg.node)) {
    auto has = [&](const auto& list) {
      for (const auto& entry : list) {
        if (entry.first == peer) return true;
      }
      return false;
    };
    if (!has(cfg.peer_ports) || !has(cfg.link_keys)) {
      throw Error(ErrorCode::Parse, "node config lacks port or link key for " + peer.label());
    }
  }
  if (cfg.node.is_endpoint() && cfg.output_file.empty()) {
    throw Error(ErrorCode::Parse, "endpoint config needs output_file");
  }
  return cfg;
}

NodeConfig NodeConfig::load(const std::string& path) { return from_config(Config::load(path)); }

// --------------------------------------------------------------------- node

namespace {

int open_listener(const std::string& host, std::uint16_t port, std::string& error) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) {
    error = std::strerror(errno);
    return -1;
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    error = "bad host " + host;
    ::close(fd);
    return -1;
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 16) != 0) {
    error = "port " + std::to_string(port) + ": " + std::strerror(errno);
    ::close(fd);
    return -1;
  }
  return fd;
}

struct NodeAbort {
  AbortReason reason;
  std::string detail;
  bool relayed = false;  // came in as an ABORT frame and was already flooded
};

struct Conn {
  int fd = -1;
  std::optional<Party> peer;
  bool hello_sent = false;
  bool hello_received = false;
  bool done_received = false;
  FrameReader reader;
};

class Node {
 public:
  Node(const NodeConfig& cfg, int listen_fd) : cfg_(cfg), listen_fd_(listen_fd) {}

  ~Node() {
    for (auto& c : conns_) {
      if (c.fd >= 0) ::close(c.fd);
    }
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }

  int run();

 private:
  // Setup failures before any peer is contacted.
  struct ConfigFailure {
    std::string what;
  };

  void log(const std::string& line) { transcript_ += line + "\n"; }
  void flush_transcript() {
    try {
      write_file(cfg_.transcript_file, transcript_);
    } catch (const Error&) {
    }
  }

  void setup();
  void connect_out(Party peer);
  void event_loop();
  void handle_readable(Conn& c);
  void handle_frame(Conn& c, const Frame& f);
  void handle_hello(Conn& c, const Frame& f);
  void on_ready();
  void progress();
  bool script_complete() const;
  void send_frame(Conn& c, const Frame& f, bool tamper = false);
  void send_done(Party origin, std::optional<Party> except);
  void finish_endpoint();
  void abort_all(AbortReason reason, const std::string& origin, std::optional<Party> except);

  DecodeResult identify(Conn& c);
  std::string hello_text(Party who) const;
  const LinkKey& link_key(Party peer) const;
  Conn* conn_to(Party peer);

  const NodeConfig& cfg_;
  int listen_fd_;
  std::string transcript_;
  Clock::time_point deadline_;

  std::optional<Schedule> schedule_;
  std::optional<KeyStore> keys_;
  std::string topo_signature_;
  std::vector<Party> neighbors_;
  std::size_t expected_incoming_ = 0;
  std::size_t accepted_ = 0;
  std::vector<Conn> conns_;

  bool ready_ = false;
  std::map<int, BitString> received_;
  std::set<int> sent_;
  bool own_done_sent_ = false;
  std::set<Party> done_from_;  // endpoints: neighbors that delivered the peer's DONE
  std::vector<std::pair<Party, Party>> pending_done_;  // (origin, arrived from)
  std::set<Party> forwarded_done_;
  bool complete_ = false;
};

std::string Node::hello_text(Party who) const {
  const NodeId& id = cfg_.topology.node(who);
  return who.label() + " " + cfg_.variant + " " + std::to_string(id.path_index) + " " +
         std::to_string(id.chain_position) + " " + topo_signature_;
}

const LinkKey& Node::link_key(Party peer) const {
  for (const auto& [p, key] : cfg_.link_keys) {
    if (p == peer) return key;
  }
  throw Error(ErrorCode::InvalidArgument, "no link key for " + peer.label());
}

Conn* Node::conn_to(Party peer) {
  for (auto& c : conns_) {
    if (c.fd >= 0 && c.peer == peer) return &c;
  }
  return nullptr;
}

void Node::setup() {
  try {
    auto variant = ProtocolVariant::parse(cfg_.variant, cfg_.topology);
    variant.check_compatible(cfg_.topology);
    schedule_ = build_schedule(cfg_.topology, variant);
    keys_ = parse_key_oracle(read_file(cfg_.keys_file), cfg_.n, cfg_.node, &cfg_.topology);
  } catch (const Error& e) {
    throw ConfigFailure{e.what()};
  }
  const Config shape = cfg_.topology.to_config();
  for (const auto& [k, v] : shape.entries()) {
    if (!topo_signature_.empty()) topo_signature_ += ';';
    topo_signature_ += k + '=' + v;
  }
  neighbors_ = cfg_.topology.neighbors(cfg_.node);
  for (Party p : neighbors_) {
    if (p < cfg_.node) ++expected_incoming_;
  }
  if (listen_fd_ < 0) {
    std::string error;
    listen_fd_ = open_listener(cfg_.host, cfg_.listen_port, error);
    if (listen_fd_ < 0) throw ConfigFailure{"cannot listen: " + error};
  }
}

void Node::connect_out(Party peer) {
  std::uint16_t port = 0;
  for (const auto& [p, pt] : cfg_.peer_ports) {
    if (p == peer) port = pt;
  }
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  ::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr);
  while (true) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw NodeAbort{AbortReason::Io, std::strerror(errno)};
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      Conn c;
      c.fd = fd;
      c.peer = peer;
      conns_.push_back(std::move(c));
      log("connect " + peer.label());
      send_frame(conns_.back(), {FrameType::Hello, 0, {}});
      return;
    }
    ::close(fd);
    if (Clock::now() >= deadline_) {
      throw NodeAbort{AbortReason::Timeout, "cannot reach " + peer.label()};
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

void Node::send_frame(Conn& c, const Frame& f, bool tamper) {
  Frame out = f;
  if (f.type == FrameType::Hello) {
    std::string text = hello_text(cfg_.node);
    out.body.assign(text.begin(), text.end());
    c.hello_sent = true;
  }
  auto bytes = encode_frame(out, link_key(*c.peer));
  if (tamper) bytes[4 + 1 + 2] ^= 0x01;  // first body byte, after the tag was computed
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t w = ::send(c.fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw NodeAbort{AbortReason::PeerLost, "send to " + c.peer->label() + ": " +
                                                 std::strerror(errno)};
    }
    off += static_cast<std::size_t>(w);
  }
}

// An accepted connection names its peer through whichever link key of a
// not-yet-connected lower neighbor authenticates the first frame.
DecodeResult Node::identify(Conn& c) {
  std::span<const std::uint8_t> raw;
  DecodeStatus s = c.reader.peek(raw);
  if (s != DecodeStatus::Ok) return {s, {}, 0};
  DecodeResult r{DecodeStatus::BadTag, {}, 0};
  for (Party p : neighbors_) {
    if (!(p < cfg_.node) || conn_to(p)) continue;
    DecodeResult attempt = decode_frame(raw, link_key(p));
    if (attempt.status == DecodeStatus::BadTag) continue;
    c.peer = p;
    r = std::move(attempt);
    break;
  }
  c.reader.drop(raw.size());
  if (r.status == DecodeStatus::Ok && r.frame.type != FrameType::Hello) {
    throw NodeAbort{AbortReason::UnexpectedMessage, "first frame from " + c.peer->label() +
                                                        " is not a hello"};
  }
  return r;
}

void Node::handle_hello(Conn& c, const Frame& f) {
  std::string text(f.body.begin(), f.body.end());
  std::string expected = hello_text(*c.peer);
  if (text != expected) {
    throw NodeAbort{AbortReason::PositionMismatch,
                    "hello from " + c.peer->label() + " says '" + text + "'"};
  }
  if (c.hello_received) {
    throw NodeAbort{AbortReason::UnexpectedMessage, "second hello from " + c.peer->label()};
  }
  c.hello_received = true;
  log("hello " + c.peer->label() + " ok");
  if (!c.hello_sent) send_frame(c, {FrameType::Hello, 0, {}});
}

void Node::handle_readable(Conn& c) {
  std::uint8_t buf[65536];
  ssize_t got = ::recv(c.fd, buf, sizeof buf, 0);
  if (got < 0 && errno == EINTR) return;
  if (got <= 0) {
    std::string who = c.peer ? c.peer->label() : "unidentified peer";
    ::close(c.fd);
    c.fd = -1;
    if (c.done_received || complete_) {
      log("closed " + who);
      return;
    }
    throw NodeAbort{AbortReason::PeerLost, "connection to " + who + " lost"};
  }
  c.reader.feed(std::span(buf, static_cast<std::size_t>(got)));
  while (c.fd >= 0) {
    DecodeResult r;
    if (c.peer) {
      r = c.reader.next(link_key(*c.peer));
    } else {
      r = identify(c);
    }
    if (r.status == DecodeStatus::Incomplete) return;
    if (r.status == DecodeStatus::BadLength) {
      throw NodeAbort{AbortReason::BadLength, "frame from " +
                                                  (c.peer ? c.peer->label() : "?")};
    }
    if (r.status == DecodeStatus::BadTag) {
      throw NodeAbort{AbortReason::BadTag, "frame from " + (c.peer ? c.peer->label() : "?")};
    }
    if (r.status == DecodeStatus::UnknownType) {
      throw NodeAbort{AbortReason::UnknownType, "frame from " + c.peer->label()};
    }
    handle_frame(c, r.frame);
  }
}

void Node::handle_frame(Conn& c, const Frame& f) {
  const Party peer = *c.peer;
  if (f.type == FrameType::Abort) {
    auto reason = f.body.empty() ? AbortReason::PeerLost : static_cast<AbortReason>(f.body[0]);
    std::string origin = f.body.size() > 1 ? std::string(f.body.begin() + 1, f.body.end()) : "?";
    log("abort reason=" + abort_reason_name(reason) + " origin=" + origin + " via=" +
        peer.label());
    abort_all(reason, origin, peer);
    throw NodeAbort{reason, {}, true};
  }
  if (f.type == FrameType::Hello) {
    handle_hello(c, f);
    if (!ready_) {
      bool all = conns_.size() == neighbors_.size();
      for (const auto& other : conns_) all = all && other.hello_received && other.hello_sent;
      if (all) on_ready();
    }
    return;
  }
  if (!c.hello_received) {
    throw NodeAbort{AbortReason::UnexpectedMessage, "frame before hello from " + peer.label()};
  }
  if (f.type == FrameType::RelayMsg) {
    const ScheduledMessage* step = nullptr;
    for (const auto& m : schedule_->messages) {
      if (m.index == f.index && m.sender == peer && m.receiver == cfg_.node) step = &m;
    }
    if (!step || received_.count(f.index)) {
      throw NodeAbort{AbortReason::UnexpectedMessage,
                      "M" + std::to_string(f.index) + " from " + peer.label()};
    }
    if (f.body.size() != (cfg_.n + 7) / 8) {
      throw NodeAbort{AbortReason::BadLength, "M" + std::to_string(f.index) + " body size"};
    }
    BitString bits = BitString::from_bytes(f.body, cfg_.n);
    log("recv M" + std::to_string(f.index) + " <- " + peer.label() + " bits=" + bits.to_hex());
    received_.emplace(f.index, std::move(bits));
    if (ready_) progress();
    return;
  }
  // DONE
  Party origin = Party::parse(std::string(f.body.begin(), f.body.end()));
  c.done_received = true;
  log("done origin=" + origin.label() + " via=" + peer.label());
  if (cfg_.node.is_endpoint()) {
    if (origin == cfg_.node || !origin.is_endpoint()) {
      throw NodeAbort{AbortReason::UnexpectedMessage, "DONE of " + origin.label()};
    }
    done_from_.insert(peer);
  } else {
    pending_done_.emplace_back(origin, peer);
  }
  if (ready_) progress();
}

void Node::on_ready() {
  ready_ = true;
  std::vector<SecretId> needed;
  for (const auto& m : schedule_->messages) {
    if (m.sender != cfg_.node) continue;
    if (m.nonce) needed.push_back(*m.nonce);
    needed.insert(needed.end(), m.keys.begin(), m.keys.end());
  }
  if (cfg_.node.is_endpoint()) {
    const auto& recipe = schedule_->output_of(cfg_.node);
    needed.insert(needed.end(), recipe.nonces.begin(), recipe.nonces.end());
    for (const auto& [idx, ks] : recipe.decrypts) needed.insert(needed.end(), ks.begin(), ks.end());
  }
  for (const auto& id : needed) {
    if (!keys_->contains(id)) throw NodeAbort{AbortReason::MissingKey, id.name()};
  }
  log("ready keys=" + std::to_string(keys_->size()));
  progress();
}

bool Node::script_complete() const {
  for (const auto& m : schedule_->messages) {
    if (m.sender == cfg_.node && !sent_.count(m.index)) return false;
    if (m.receiver == cfg_.node && !received_.count(m.index)) return false;
  }
  return true;
}

void Node::send_done(Party origin, std::optional<Party> except) {
  std::string label = origin.label();
  Frame f{FrameType::Done, 0, std::vector<std::uint8_t>(label.begin(), label.end())};
  for (Party p : neighbors_) {
    if (except && p == *except) continue;
    Conn* c = conn_to(p);
    if (!c) throw NodeAbort{AbortReason::PeerLost, "no connection to " + p.label()};
    send_frame(*c, f);
    log("send DONE origin=" + label + " -> " + p.label());
  }
}

void Node::progress() {
  for (const auto& m : schedule_->messages) {
    if (m.sender != cfg_.node || sent_.count(m.index)) continue;
    BitString bits = BitString::zeros(cfg_.n);
    if (m.input) {
      auto it = received_.find(*m.input);
      if (it == received_.end()) continue;
      bits ^= it->second;
    }
    if (m.nonce) bits ^= keys_->at(*m.nonce);
    for (const auto& k : m.keys) bits ^= keys_->at(k);
    Conn* c = conn_to(m.receiver);
    if (!c) throw NodeAbort{AbortReason::PeerLost, "no connection to " + m.receiver.label()};
    const bool tamper = cfg_.tamper_message && *cfg_.tamper_message == m.index;
    send_frame(*c, {FrameType::RelayMsg, static_cast<std::uint16_t>(m.index), bits.bytes()},
               tamper);
    sent_.insert(m.index);
    log("send M" + std::to_string(m.index) + " -> " + m.receiver.label() + " bits=" +
        bits.to_hex() + (tamper ? " tampered" : ""));
  }
  if (!script_complete()) return;

  if (cfg_.node.is_endpoint()) {
    if (!own_done_sent_) {
      send_done(cfg_.node, std::nullopt);
      own_done_sent_ = true;
    }
    if (done_from_.size() == neighbors_.size()) finish_endpoint();
    return;
  }
  for (const auto& [origin, from] : pending_done_) {
    if (forwarded_done_.count(origin)) {
      throw NodeAbort{AbortReason::UnexpectedMessage, "repeated DONE of " + origin.label()};
    }
    send_done(origin, from);
    forwarded_done_.insert(origin);
  }
  pending_done_.clear();
  if (forwarded_done_.count(Party::alice()) && forwarded_done_.count(Party::bob())) {
    complete_ = true;
    log("complete");
  }
}

void Node::finish_endpoint() {
  const OutputRecipe& recipe = schedule_->output_of(cfg_.node);
  BitString out = BitString::zeros(cfg_.n);
  for (const auto& id : recipe.nonces) out ^= keys_->at(id);
  for (const auto& [idx, ks] : recipe.decrypts) {
    out ^= received_.at(idx);
    for (const auto& k : ks) out ^= keys_->at(k);
  }
  const std::string tmp = cfg_.output_file + ".partial";
  try {
    write_file(tmp, out.to_hex() + "\n");
    fs::rename(tmp, cfg_.output_file);
  } catch (const std::exception& e) {
    throw NodeAbort{AbortReason::Io, e.what()};
  }
  complete_ = true;
  log("output written bits=" + std::to_string(cfg_.n));
  log("complete");
}

void Node::abort_all(AbortReason reason, const std::string& origin, std::optional<Party> except) {
  std::vector<std::uint8_t> body{static_cast<std::uint8_t>(reason)};
  body.insert(body.end(), origin.begin(), origin.end());
  for (auto& c : conns_) {
    if (c.fd < 0 || !c.peer || (except && *c.peer == *except)) continue;
    try {
      send_frame(c, {FrameType::Abort, 0, body});
    } catch (const NodeAbort&) {
      // The peer is gone already; the others still get the notice.
    }
  }
}

void Node::event_loop() {
  for (Party p : neighbors_) {
    if (cfg_.node < p) connect_out(p);
  }
  while (!complete_) {
    std::vector<pollfd> fds;
    std::vector<std::size_t> owners;
    if (accepted_ < expected_incoming_) fds.push_back({listen_fd_, POLLIN, 0});
    for (std::size_t i = 0; i < conns_.size(); ++i) {
      if (conns_[i].fd < 0) continue;
      fds.push_back({conns_[i].fd, POLLIN, 0});
      owners.push_back(i);
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline_ - Clock::now());
    if (left.count() <= 0) throw NodeAbort{AbortReason::Timeout, "node deadline passed"};
    int ready = ::poll(fds.data(), fds.size(), static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw NodeAbort{AbortReason::Io, std::string("poll: ") + std::strerror(errno)};
    }
    std::size_t base = 0;
    if (accepted_ < expected_incoming_) {
      base = 1;
      if (fds[0].revents & POLLIN) {
        int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd >= 0) {
          ++accepted_;
          Conn c;
          c.fd = fd;
          conns_.push_back(std::move(c));
        }
      }
    }
    for (std::size_t k = base; k < fds.size(); ++k) {
      if (!(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      Conn& c = conns_[owners[k - base]];
      if (c.fd >= 0) handle_readable(c);
      if (complete_) break;
    }
  }
}

int Node::run() {
  deadline_ = Clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
  log("node " + cfg_.node.label() + " variant=" + cfg_.variant + " n=" + std::to_string(cfg_.n));
  try {
    setup();
  } catch (const ConfigFailure& f) {
    log("config-error " + f.what);
    flush_transcript();
    return kExitConfig;
  }
  try {
    event_loop();
  } catch (const NodeAbort& a) {
    if (!a.relayed) {
      log("abort reason=" + abort_reason_name(a.reason) + " origin=" + cfg_.node.label() +
          " detail=" + a.detail);
      abort_all(a.reason, cfg_.node.label(), std::nullopt);
    }
    flush_transcript();
    return kExitAbort;
  } catch (const std::exception& e) {
    log("abort reason=IO origin=" + cfg_.node.label() + " detail=" + e.what());
    abort_all(AbortReason::Io, cfg_.node.label(), std::nullopt);
    flush_transcript();
    return kExitAbort;
  }
  flush_transcript();
  return kExitOk;
}

}  // namespace

int run_node(const NodeConfig& cfg, int listen_fd) {
  Node node(cfg, listen_fd);
  return node.run();
}

int run_node_from_file(const std::string& config_path) {
  NodeConfig cfg;
  try {
    cfg = NodeConfig::load(config_path);
  } catch (const Error&) {
    return kExitConfig;
  }
  return run_node(cfg);
}

// -------------------------------------------------------------- orchestrate

int WireResult::exit_code() const {
  switch (status) {
    case WireStatus::Ok: return kExitOk;
    case WireStatus::Abort: return kExitAbort;
    case WireStatus::ConfigError: return kExitConfig;
  }
  return kExitConfig;
}

namespace {

std::string field(const std::string& line, const std::string& key) {
  auto pos = line.find(" " + key + "=");
  if (pos == std::string::npos) return {};
  pos += key.size() + 2;
  auto end = line.find(' ', pos);
  return line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

}  // namespace

WireResult orchestrate(const Topology& topo, const ProtocolVariant& variant, std::size_t n,
                       std::uint64_t seed, std::uint16_t base_port, const std::string& work_dir,
                       const OrchestrateOptions& options) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  variant.check_compatible(topo);
  const Schedule schedule = build_schedule(topo, variant);
  const KeyStore store = prepare_store(topo, schedule, n, seed);
  const auto& nodes = topo.nodes();
  if (std::size_t{base_port} + nodes.size() > 65536 || base_port == 0) {
    throw Error(ErrorCode::InvalidArgument, "port range does not fit below 65536");
  }
  fs::create_directories(work_dir);
  const fs::path dir(work_dir);

  WireResult result;
  std::vector<NodeConfig> configs;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Party p = nodes[i].party;
    const std::string label = p.label();
    KeyStore slice = key_slice(store, p);
    if (options.drop_key && options.drop_key->first == p) {
      if (!slice.contains(options.drop_key->second)) {
        throw Error(ErrorCode::InvalidArgument,
                    options.drop_key->second.name() + " is not in the slice of " + label);
      }
      KeyStore kept(n);
      for (const auto& [id, value] : slice.entries()) {
        if (id != options.drop_key->second) kept.insert(id, value);
      }
      slice = std::move(kept);
    }
    NodeConfig cfg;
    cfg.node = p;
    cfg.topology = topo;
    cfg.variant = variant.name();
    if (options.misconfigure && options.misconfigure->first == p) {
      cfg.variant = options.misconfigure->second;
    }
    cfg.n = n;
    cfg.listen_port = static_cast<std::uint16_t>(base_port + i);
    for (Party q : topo.neighbors(p)) {
      std::size_t j = 0;
      while (nodes[j].party != q) ++j;
      cfg.peer_ports.emplace_back(q, static_cast<std::uint16_t>(base_port + j));
      cfg.link_keys.emplace_back(q, derive_link_key(p, q, seed));
    }
    cfg.keys_file = (dir / ("keys_" + label + ".txt")).string();
    cfg.transcript_file = (dir / ("transcript_" + label + ".txt")).string();
    if (p.is_endpoint()) cfg.output_file = (dir / ("key_" + label + ".txt")).string();
    cfg.tamper_message = options.tamper_message;
    cfg.timeout_ms = options.timeout_ms;

    write_file(cfg.keys_file, format_key_oracle(slice));
    write_file((dir / ("node_" + label + ".conf")).string(), cfg.to_config().emit());
    fs::remove(cfg.transcript_file);
    if (!cfg.output_file.empty()) fs::remove(cfg.output_file);
    configs.push_back(std::move(cfg));
  }

  std::vector<int> listeners;
  for (const auto& cfg : configs) {
    std::string error;
    int fd = open_listener(cfg.host, cfg.listen_port, error);
    if (fd < 0) {
      for (int l : listeners) ::close(l);
      result.status = WireStatus::ConfigError;
      result.report = "config error: " + error + "\n";
      return result;
    }
    listeners.push_back(fd);
  }

  std::fflush(nullptr);
  std::vector<pid_t> pids;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    pid_t pid = ::fork();
    if (pid == 0) {
      for (std::size_t j = 0; j < listeners.size(); ++j) {
        if (j != i) ::close(listeners[j]);
      }
      int code = kExitConfig;
      try {
        code = run_node(configs[i], listeners[i]);
      } catch (...) {
      }
      ::_exit(code);
    }
    if (pid < 0) {
      for (pid_t started : pids) ::kill(started, SIGKILL);
      for (pid_t started : pids) ::waitpid(started, nullptr, 0);
      for (int l : listeners) ::close(l);
      throw Error(ErrorCode::Io, std::string("fork failed: ") + std::strerror(errno));
    }
    pids.push_back(pid);
  }
  for (int l : listeners) ::close(l);

  std::vector<int> codes(pids.size(), -1);
  const auto deadline = Clock::now() + std::chrono::milliseconds(options.timeout_ms + 5000);
  std::size_t remaining = pids.size();
  while (remaining > 0) {
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (codes[i] != -1 || pids[i] == 0) continue;
      int status = 0;
      if (::waitpid(pids[i], &status, WNOHANG) == pids[i]) {
        codes[i] = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        --remaining;
      }
    }
    if (remaining == 0) break;
    if (Clock::now() > deadline) {
      for (std::size_t i = 0; i < pids.size(); ++i) {
        if (codes[i] != -1) continue;
        ::kill(pids[i], SIGKILL);
        ::waitpid(pids[i], nullptr, 0);
        codes[i] = 128 + SIGKILL;
      }
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }

  bool any_config = false;
  bool all_ok = true;
  std::string first_cause;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& cfg = configs[i];
    NodeOutcome outcome{cfg.node, codes[i], std::nullopt, {}};
    std::string text;
    try {
      text = read_file(cfg.transcript_file);
    } catch (const Error&) {
    }
    result.transcript += "== " + cfg.node.label() + " exit=" + std::to_string(codes[i]) + " ==\n";
    result.transcript += text;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind("recv M", 0) == 0) ++result.relay_frames;
      if (line.rfind("config-error ", 0) == 0) outcome.detail = line.substr(13);
      if (line.rfind("abort ", 0) == 0) {
        outcome.reason = parse_abort_reason(field(line, "reason"));
        std::string origin = field(line, "origin");
        outcome.detail = "origin=" + origin;
        auto d = line.find(" detail=");
        if (d != std::string::npos) outcome.detail += " " + line.substr(d + 1);
        if (origin == cfg.node.label() && first_cause.empty()) {
          first_cause = cfg.node.label() + " " + field(line, "reason") +
                        (d != std::string::npos ? " (" + line.substr(d + 8) + ")" : "");
        }
      }
    }
    if (codes[i] == kExitConfig) any_config = true;
    if (codes[i] != kExitOk) all_ok = false;

    result.report += cfg.node.label() + ": ";
    if (codes[i] == kExitOk) {
      result.report += "ok";
    } else if (codes[i] == kExitConfig) {
      result.report += "config error " + outcome.detail;
      if (first_cause.empty()) first_cause = cfg.node.label() + " config error";
    } else if (outcome.reason) {
      result.report += "abort " + abort_reason_name(*outcome.reason) + " " + outcome.detail;
    } else {
      result.report += "failed exit=" + std::to_string(codes[i]);
      if (first_cause.empty()) first_cause = cfg.node.label() + " exit " + std::to_string(codes[i]);
    }
    result.report += "\n";
    result.nodes.push_back(std::move(outcome));
  }

  auto read_key = [&](Party p) -> std::optional<BitString> {
    for (const auto& cfg : configs) {
      if (cfg.node != p || !fs::exists(cfg.output_file)) continue;
      std::string hex = read_file(cfg.output_file);
      while (!hex.empty() && (hex.back() == '\n' || hex.back() == '\r')) hex.pop_back();
      return BitString::from_hex(hex, n);
    }
    return std::nullopt;
  };

  if (all_ok) {
    result.key_a = read_key(Party::alice());
    result.key_b = read_key(Party::bob());
    if (result.key_a && result.key_b && *result.key_a == *result.key_b) {
      result.status = WireStatus::Ok;
      result.report += "verdict: ok, endpoint keys equal (" + std::to_string(n) + " bits)\n";
    } else {
      result.status = WireStatus::Abort;
      result.key_a.reset();
      result.key_b.reset();
      result.report += "verdict: abort, endpoint keys missing or different\n";
    }
  } else {
    result.status = any_config ? WireStatus::ConfigError : WireStatus::Abort;
    result.report += "verdict: " + std::string(any_config ? "config error" : "abort") +
                     ", cause: " + (first_cause.empty() ? "unknown" : first_cause) + "\n";
  }
  write_file((dir / "wire_transcript.txt").string(), result.transcript);
  write_file((dir / "wire_report.txt").string(), result.report);
  return result;
}

}  // namespace tfrelay::wire
