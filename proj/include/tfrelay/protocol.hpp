#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfrelay/secrets.hpp"
#include "tfrelay/topology.hpp"

namespace tfrelay {

enum class VariantKind { RingV1, RingV2, Chain2, ChainM, ReachT, Multipath };

struct ProtocolVariant {
  VariantKind kind = VariantKind::ChainM;
  // Multipath only: forwarding used on every path (ChainM or ReachT).
  VariantKind inner = VariantKind::ChainM;
  // ReachT (and Multipath over ReachT): maximum TF span is t+1 positions.
  int t = 1;

  std::string name() const;
  static ProtocolVariant parse(std::string_view name, const Topology& topo);
  static ProtocolVariant default_for(const Topology& topo);
  // Throws Incompatible when the variant cannot run on `topo`.
  void check_compatible(const Topology& topo) const;

  bool operator==(const ProtocolVariant&) const = default;
};

std::string variant_kind_name(VariantKind kind);

// One hop of the forwarding schedule. The sender XORs, in order: the message
// it received (`input`), its fresh nonce (`nonce`) and every key in `keys`.
struct ScheduledMessage {
  int index;
  Party sender;
  Party receiver;
  std::optional<int> input;
  std::optional<SecretId> nonce;
  std::vector<SecretId> keys;
  int path;  // 0-based path the message travels on
};

// Endpoint output: XOR of own nonces and of each listed received message
// stripped of the listed keys.
struct OutputRecipe {
  std::vector<SecretId> nonces;
  std::vector<std::pair<int, std::vector<SecretId>>> decrypts;
};

struct Schedule {
  ProtocolVariant variant;
  std::vector<ScheduledMessage> messages;
  OutputRecipe alice;
  OutputRecipe bob;
  std::vector<SecretId> nonces;

  // Every key (TF or P2P) the schedule consumes, sorted and unique.
  std::vector<SecretId> keys() const;
  const OutputRecipe& output_of(Party endpoint) const;
};

// Nonce naming override for multipath runs, one entry per path.
using NonceAliases = std::vector<SecretId>;

Schedule build_schedule(const Topology& topo, const ProtocolVariant& variant,
                        const NonceAliases* aliases = nullptr);

struct Message {
  int index;
  Party sender;
  Party receiver;
  BitString bits;
  SymbolicExpr expr;
};

struct ProtocolTrace {
  Topology topology;
  Schedule schedule;
  KeyStore keys;
  std::vector<Message> messages;
  BitString output_a;
  BitString output_b;
  SymbolicExpr output_a_expr;
  SymbolicExpr output_b_expr;

  const ProtocolVariant& variant() const { return schedule.variant; }
  const std::vector<SecretId>& nonces() const { return schedule.nonces; }
  // XOR of all nonces; the key both endpoints should hold.
  SymbolicExpr final_key() const;
  bool outputs_agree() const { return output_a == output_b; }

  std::string to_text() const;
  std::string to_json() const;
};

// Keys from the plan plus one sample per nonce, all drawn from `seed`.
KeyStore prepare_store(const Topology& topo, const Schedule& schedule, std::size_t n,
                       std::uint64_t seed);

// Runs the schedule over `store`, which must hold every key and nonce. Each
// message is checked against its symbolic form as it is emitted.
ProtocolTrace execute(const Topology& topo, const Schedule& schedule, KeyStore store);

ProtocolTrace run_protocol(const Topology& topo, const ProtocolVariant& variant,
                           std::size_t n, std::uint64_t seed);

ProtocolTrace run_ring_v1(const Topology& topo, std::size_t n, std::uint64_t seed);
ProtocolTrace run_ring_v2(const Topology& topo, std::size_t n, std::uint64_t seed);
ProtocolTrace run_chain2(const Topology& topo, std::size_t n, std::uint64_t seed);
ProtocolTrace run_chain_m(const Topology& topo, std::size_t n, std::uint64_t seed);
ProtocolTrace run_reach_t(const Topology& topo, std::size_t n, std::uint64_t seed);
ProtocolTrace run_multipath(const Topology& topo, std::size_t n, std::uint64_t seed,
                            const NonceAliases* aliases = nullptr);

// Chain forwarding with Alice's nonce replaced by the payload `z`.
ProtocolTrace send_message_as_payload(const BitString& z, const Topology& topo,
                                      std::uint64_t seed);

}  // namespace tfrelay
