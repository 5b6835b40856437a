#include "tfrelay/keyplan.hpp"

#include <algorithm>

namespace tfrelay {

std::vector<SecretId> KeyPlan::secrets() const {
  std::vector<SecretId> out;
  for (const auto& e : entries) out.push_back(e.secret);
  return out;
}

KeyPlan plan_keys(const Topology& topo, const ProtocolVariant& variant) {
  variant.check_compatible(topo);
  Schedule schedule = build_schedule(topo, variant);
  auto reachable = qkd_reachable_pairs(topo, std::max(variant.t, 1));

  KeyPlan plan;
  for (const SecretId& key : schedule.keys()) {
    Mechanism wanted = key.kind() == SecretKind::TfKey ? Mechanism::Tf : Mechanism::P2p;
    auto it = std::find_if(reachable.begin(), reachable.end(), [&](const ReachablePair& p) {
      return p.mechanism == wanted && std::min(p.a, p.b) == key.first() &&
             std::max(p.a, p.b) == key.second();
    });
    if (it == reachable.end()) {
      throw Error(ErrorCode::Incompatible,
                  "key " + key.name() + " has no matching QKD link in the topology");
    }
    // Ids order endpoints first, so for P2P the endpoint (if any) is first()
    // and always prepares the states.
    KeyPlanEntry entry{key, wanted, it->relay, key.first(), key.second()};
    if (wanted == Mechanism::Tf) entry.measurer = *it->relay;
    plan.entries.push_back(entry);
  }
  return plan;
}

KeyStore establish(const KeyPlan& plan, std::size_t n, std::uint64_t seed) {
  KeyStore store(n);
  for (const auto& entry : plan.entries) sample_secret(store, entry.secret, seed);
  return store;
}

NodeHardware HardwareReport::at(Party p) const {
  auto it = nodes_.find(p);
  return it == nodes_.end() ? NodeHardware{} : it->second;
}

HardwareReport cm_report(const KeyPlan& plan) {
  HardwareReport report;
  for (const auto& e : plan.entries) {
    if (e.measurer.is_endpoint()) {
      throw Error(ErrorCode::Precondition, "plan entry " + e.secret.name() + " makes endpoint " +
                                               e.measurer.label() +
                                               " perform measurements");
    }
    if (e.mechanism == Mechanism::Tf) {
      if (e.relay && e.secret.involves(*e.relay)) {
        throw Error(ErrorCode::Precondition,
                    "TF relay for " + e.secret.name() + " is one of the key holders");
      }
      report[e.secret.first()].needs_source = true;
      report[e.secret.second()].needs_source = true;
    } else {
      report[e.sender].needs_source = true;
    }
    report[e.measurer].needs_measurement = true;
  }
  return report;
}

std::string format_key_oracle(const KeyStore& store) {
  std::string out;
  for (const auto& [id, value] : store.entries()) {
    out += id.name() + "\t" + value.to_hex() + "\n";
  }
  return out;
}

KeyStore parse_key_oracle(std::string_view text, std::size_t n, std::optional<Party> only_for,
                          const Topology* topo) {
  KeyStore store(n);
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorCode::Parse, "key oracle line " + std::to_string(line_no) +
                                        ": expected SECRET_ID<TAB>hex");
    }
    SecretId id = SecretId::parse(line.substr(0, tab));
    if (topo && (!topo->contains(id.first()) || !topo->contains(id.second()))) {
      throw Error(ErrorCode::Parse, "key oracle line " + std::to_string(line_no) + ": " +
                                        id.name() + " names a node outside the topology");
    }
    if (only_for && !id.involves(*only_for)) continue;
    store.insert(id, BitString::from_hex(line.substr(tab + 1), n));
  }
  return store;
}

}  // namespace tfrelay
