#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfrelay/protocol.hpp"
#include "tfrelay/secrets.hpp"
#include "tfrelay/topology.hpp"

namespace tfrelay {

struct KeyPlanEntry {
  SecretId secret;
  Mechanism mechanism;
  std::optional<Party> relay;  // TF only
  // P2P: the endpoint that prepares states (Alice/Bob whenever involved).
  // TF: both pair members send; `sender` is the lower-ordered one.
  Party sender;
  Party measurer;  // P2P receiver, or the TF relay
};

struct KeyPlan {
  std::vector<KeyPlanEntry> entries;

  std::vector<SecretId> secrets() const;
};

// Keys exactly as consumed by the variant's schedule, each matched to a
// reachable pair of the topology.
KeyPlan plan_keys(const Topology& topo, const ProtocolVariant& variant);

// One ideal uniform key per plan entry.
KeyStore establish(const KeyPlan& plan, std::size_t n, std::uint64_t seed);

struct NodeHardware {
  bool needs_source = false;
  bool needs_measurement = false;

  bool operator==(const NodeHardware&) const = default;
};

class HardwareReport {
 public:
  // Nodes absent from the plan need nothing.
  NodeHardware at(Party p) const;
  const std::map<Party, NodeHardware>& nodes() const { return nodes_; }
  NodeHardware& operator[](Party p) { return nodes_[p]; }

 private:
  std::map<Party, NodeHardware> nodes_;
};

// Throws Precondition if an endpoint is ever asked to measure.
HardwareReport cm_report(const KeyPlan& plan);

// Key-oracle text: one "SECRET_ID<TAB>hex" line per secret, sorted by id.
std::string format_key_oracle(const KeyStore& store);
// Parses oracle text. With `only_for`, keeps lines whose secret involves
// that node. Unknown ids are rejected; so are ids naming nodes outside
// `topo` when one is given.
KeyStore parse_key_oracle(std::string_view text, std::size_t n,
                          std::optional<Party> only_for = std::nullopt,
                          const Topology* topo = nullptr);

}  // namespace tfrelay
