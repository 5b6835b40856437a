#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfrelay/protocol.hpp"

namespace tfrelay::wire {

// Frame layout on the socket:
//   u32 length (big-endian) = bytes of type + payload + tag
//   u8  type
//   u16 message index (big-endian), then the raw body
//   32-byte HMAC-SHA256 over type + payload
enum class FrameType : std::uint8_t { Hello = 0x01, RelayMsg = 0x02, Done = 0x03, Abort = 0x04 };

constexpr std::size_t kTagSize = 32;
constexpr std::size_t kMinFrameLength = 1 + 2 + kTagSize;
constexpr std::uint64_t kMaxPayload = (std::uint64_t{1} << 32) - 64;
// Receivers refuse anything larger.
constexpr std::size_t kDefaultMaxFrameLength = std::size_t{1} << 24;

struct Frame {
  FrameType type = FrameType::RelayMsg;
  std::uint16_t index = 0;
  std::vector<std::uint8_t> body;

  bool operator==(const Frame&) const = default;
};

using LinkKey = std::vector<std::uint8_t>;

std::vector<std::uint8_t> encode_frame(const Frame& frame, std::span<const std::uint8_t> key);

enum class DecodeStatus { Ok, Incomplete, BadLength, BadTag, UnknownType };
std::string decode_status_name(DecodeStatus status);

struct DecodeResult {
  DecodeStatus status = DecodeStatus::Incomplete;
  Frame frame;
  std::size_t consumed = 0;
};

// Decodes one complete frame; `bytes` must hold exactly one frame, so
// truncated or overlong input is BadLength. The tag is checked before the
// type is looked at.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> key,
                          std::size_t max_length = kDefaultMaxFrameLength);

// Stream reassembly over a TCP byte stream.
class FrameReader {
 public:
  explicit FrameReader(std::size_t max_length = kDefaultMaxFrameLength)
      : max_length_(max_length) {}

  void feed(std::span<const std::uint8_t> bytes);
  // Incomplete until a whole frame is buffered.
  DecodeResult next(std::span<const std::uint8_t> key);
  // The first buffered frame, still undecoded; Ok only once it is complete.
  DecodeStatus peek(std::span<const std::uint8_t>& frame) const;
  void drop(std::size_t bytes);
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::size_t max_length_;
  std::vector<std::uint8_t> buffer_;
};

// Reasons carried in ABORT frames and node transcripts.
enum class AbortReason : std::uint8_t {
  BadTag = 1,
  BadLength = 2,
  UnknownType = 3,
  PositionMismatch = 4,
  MissingKey = 5,
  UnexpectedMessage = 6,
  PeerLost = 7,
  Timeout = 8,
  Io = 9,
};
std::string abort_reason_name(AbortReason reason);

// Per-link pre-shared authentication key, derived from the run seed.
LinkKey derive_link_key(Party a, Party b, std::uint64_t seed);

// Secrets of `store` that `node` may hold: keys it is an endpoint of and
// nonces it owns.
KeyStore key_slice(const KeyStore& store, Party node);

struct NodeConfig {
  Party node = Party::alice();
  Topology topology = build_chain(2, 100.0);
  std::string variant;  // protocol variant name
  std::size_t n = 0;
  std::string host = "127.0.0.1";
  std::uint16_t listen_port = 0;
  std::vector<std::pair<Party, std::uint16_t>> peer_ports;
  std::vector<std::pair<Party, LinkKey>> link_keys;
  std::string keys_file;
  std::string output_file;  // endpoints only
  std::string transcript_file;
  std::optional<int> tamper_message;  // test hook: corrupt M<k> after tagging
  int timeout_ms = 20000;

  Config to_config() const;
  static NodeConfig from_config(const Config& config);
  static NodeConfig load(const std::string& path);
};

// Node process exit codes.
constexpr int kExitOk = 0;
constexpr int kExitAbort = 2;
constexpr int kExitConfig = 3;

// Runs one node to completion and returns its exit code. Binds its own
// listening socket; `listen_fd` >= 0 hands over one already bound.
int run_node(const NodeConfig& cfg, int listen_fd = -1);
int run_node_from_file(const std::string& config_path);

struct OrchestrateOptions {
  std::optional<int> tamper_message;
  // Removes the secret's line from the node's key-oracle slice.
  std::optional<std::pair<Party, SecretId>> drop_key;
  // Launches the node with a different variant name.
  std::optional<std::pair<Party, std::string>> misconfigure;
  int timeout_ms = 20000;
};

enum class WireStatus { Ok, Abort, ConfigError };

struct NodeOutcome {
  Party node;
  int exit_code;
  std::optional<AbortReason> reason;  // from the node's own abort line
  std::string detail;
};

struct WireResult {
  WireStatus status = WireStatus::ConfigError;
  std::optional<BitString> key_a;
  std::optional<BitString> key_b;
  std::vector<NodeOutcome> nodes;
  int relay_frames = 0;     // RELAY_MSG frames accepted across all nodes
  std::string transcript;   // all node transcripts, in node order
  std::string report;       // one line per node, then the verdict

  int exit_code() const;
};

// Writes key-oracle slices, node configs and transcripts under `work_dir`,
// runs one process per node on ports base_port + i and collects the
// endpoint outputs. The key store is prepare_store(topo, schedule, n, seed),
// the same one the in-process engine uses.
WireResult orchestrate(const Topology& topo, const ProtocolVariant& variant, std::size_t n,
                       std::uint64_t seed, std::uint16_t base_port, const std::string& work_dir,
                       const OrchestrateOptions& options = {});

}  // namespace tfrelay::wire
