#include "tfrelay/protocol.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "tfrelay/keyplan.hpp"

namespace tfrelay {

std::string variant_kind_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::RingV1: return "ring-v1";
    case VariantKind::RingV2: return "ring-v2";
    case VariantKind::Chain2: return "chain2";
    case VariantKind::ChainM: return "chain-m";
    case VariantKind::ReachT: return "reach-t";
    case VariantKind::Multipath: return "multipath";
  }
  return {};
}

std::string ProtocolVariant::name() const { return variant_kind_name(kind); }

ProtocolVariant ProtocolVariant::parse(std::string_view name, const Topology& topo) {
  ProtocolVariant v;
  v.t = topo.reach();
  v.inner = topo.reach() > 1 ? VariantKind::ReachT : VariantKind::ChainM;
  if (name == "ring-v1") {
    v.kind = VariantKind::RingV1;
  } else if (name == "ring-v2") {
    v.kind = VariantKind::RingV2;
  } else if (name == "chain2") {
    v.kind = VariantKind::Chain2;
  } else if (name == "chain-m") {
    v.kind = VariantKind::ChainM;
  } else if (name == "reach-t") {
    v.kind = VariantKind::ReachT;
  } else if (name == "multipath") {
    v.kind = VariantKind::Multipath;
  } else {
    throw Error(ErrorCode::Parse, "unknown protocol variant '" + std::string(name) + "'");
  }
  return v;
}

ProtocolVariant ProtocolVariant::default_for(const Topology& topo) {
  switch (topo.shape()) {
    case Shape::Ring6: return parse("ring-v2", topo);
    case Shape::Chain: return parse("chain-m", topo);
    case Shape::ReachT: return parse("reach-t", topo);
    case Shape::Multipath: return parse("multipath", topo);
  }
  return {};
}

void ProtocolVariant::check_compatible(const Topology& topo) const {
  auto reject = [&](const std::string& why) {
    throw Error(ErrorCode::Incompatible, "variant " + name() + " cannot run on shape " +
                                             shape_name(topo.shape()) + ": " + why);
  };
  switch (kind) {
    case VariantKind::RingV1:
    case VariantKind::RingV2:
      if (topo.shape() != Shape::Ring6) reject("needs the six-node ring");
      break;
    case VariantKind::Chain2:
      if (topo.shape() != Shape::Chain || topo.m() != 2) reject("needs a chain with m = 2");
      break;
    case VariantKind::ChainM:
      if (topo.shape() != Shape::Chain) reject("needs a chain");
      break;
    case VariantKind::ReachT:
      if (topo.shape() != Shape::ReachT) reject("needs a t-reach chain");
      if (t < 2 || t != topo.reach()) reject("t must match the topology and be >= 2");
      break;
    case VariantKind::Multipath:
      if (topo.shape() != Shape::Multipath) reject("needs disjoint paths");
      if (inner != VariantKind::ChainM && inner != VariantKind::ReachT) {
        reject("per-path forwarding must be chain-m or reach-t");
      }
      if (inner == VariantKind::ReachT) {
        if (t < 2 || t != topo.reach()) reject("t must match the topology and be >= 2");
        if (topo.path_count() > 1) {
          for (int m : topo.path_lengths()) {
            if (m <= t) reject("paths with m <= t would share one A-B key across paths");
          }
        }
      }
      break;
  }
}

namespace {

// Keys held by the node at `pos` on `path` (positions 0 and last are the
// endpoints): TF keys with every node 2..max_distance positions away, plus
// the point-to-point keys on the two endpoint links.
std::vector<SecretId> node_keys(const std::vector<Party>& path, int pos, int max_distance,
                                bool with_p2p) {
  const int last = static_cast<int>(path.size()) - 1;
  std::vector<SecretId> keys;
  for (int other = std::max(0, pos - max_distance); other <= std::min(last, pos + max_distance);
       ++other) {
    if (std::abs(other - pos) >= 2) keys.push_back(SecretId::tf_key(path[pos], path[other]));
  }
  if (with_p2p) {
    if (pos <= 1) keys.push_back(SecretId::p2p_key(path[0], path[1]));
    if (pos >= last - 1) keys.push_back(SecretId::p2p_key(path[last - 1], path[last]));
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// Appends M_k..M_{k+m} carrying `nonce` from path.front() to path.back(),
// each node XOR-ing its whole key set. Returns the sink's decryption keys.
std::vector<SecretId> forward(const std::vector<Party>& path, const SecretId& nonce,
                              int max_distance, bool with_p2p, int path_no,
                              std::vector<ScheduledMessage>& messages) {
  const int last = static_cast<int>(path.size()) - 1;
  for (int pos = 0; pos < last; ++pos) {
    ScheduledMessage msg{static_cast<int>(messages.size()),
                         path[pos],
                         path[pos + 1],
                         std::nullopt,
                         std::nullopt,
                         node_keys(path, pos, max_distance, with_p2p),
                         path_no};
    if (pos == 0) {
      msg.nonce = nonce;
    } else {
      msg.input = msg.index - 1;
    }
    messages.push_back(std::move(msg));
  }
  return node_keys(path, last, max_distance, with_p2p);
}

}  // namespace

std::vector<SecretId> Schedule::keys() const {
  std::vector<SecretId> out;
  for (const auto& msg : messages) out.insert(out.end(), msg.keys.begin(), msg.keys.end());
  for (const OutputRecipe* r : {&alice, &bob}) {
    for (const auto& [index, keys] : r->decrypts) out.insert(out.end(), keys.begin(), keys.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const OutputRecipe& Schedule::output_of(Party endpoint) const {
  if (endpoint.is_alice()) return alice;
  if (endpoint.is_bob()) return bob;
  throw Error(ErrorCode::InvalidArgument, endpoint.label() + " is not an endpoint");
}

Schedule build_schedule(const Topology& topo, const ProtocolVariant& variant,
                        const NonceAliases* aliases) {
  variant.check_compatible(topo);
  Schedule s;
  s.variant = variant;
  const SecretId xa = SecretId::nonce(Party::alice());
  const SecretId xb = SecretId::nonce(Party::bob());

  switch (variant.kind) {
    case VariantKind::RingV1:
    case VariantKind::RingV2: {
      const bool p2p = variant.kind == VariantKind::RingV2;
      const auto& upper = topo.paths()[0];
      std::vector<Party> lower(topo.paths()[1].rbegin(), topo.paths()[1].rend());
      auto bob_keys = forward(upper, xa, 2, p2p, 0, s.messages);
      const int upper_last = static_cast<int>(s.messages.size()) - 1;
      auto alice_keys = forward(lower, xb, 2, p2p, 1, s.messages);
      s.bob = {{xb}, {{upper_last, bob_keys}}};
      s.alice = {{xa}, {{static_cast<int>(s.messages.size()) - 1, alice_keys}}};
      s.nonces = {xa, xb};
      break;
    }
    case VariantKind::Chain2:
    case VariantKind::ChainM:
    case VariantKind::ReachT: {
      const int reach = variant.kind == VariantKind::ReachT ? variant.t + 1 : 2;
      auto bob_keys = forward(topo.paths()[0], xa, reach, true, 0, s.messages);
      s.alice = {{xa}, {}};
      s.bob = {{}, {{static_cast<int>(s.messages.size()) - 1, bob_keys}}};
      s.nonces = {xa};
      break;
    }
    case VariantKind::Multipath: {
      const int reach = variant.inner == VariantKind::ReachT ? variant.t + 1 : 2;
      if (aliases && aliases->size() != topo.path_count()) {
        throw Error(ErrorCode::InvalidArgument, "one nonce alias per path is required");
      }
      for (std::size_t p = 0; p < topo.path_count(); ++p) {
        SecretId nonce = aliases ? (*aliases)[p]
                                 : SecretId::nonce(Party::alice(), static_cast<int>(p) + 1);
        if (nonce.kind() != SecretKind::Nonce) {
          throw Error(ErrorCode::InvalidArgument, "nonce alias " + nonce.name() + " is a key");
        }
        auto bob_keys = forward(topo.paths()[p], nonce, reach, true, static_cast<int>(p),
                                s.messages);
        s.alice.nonces.push_back(nonce);
        s.bob.decrypts.emplace_back(static_cast<int>(s.messages.size()) - 1, bob_keys);
        s.nonces.push_back(nonce);
      }
      break;
    }
  }
  return s;
}

SymbolicExpr ProtocolTrace::final_key() const {
  SymbolicExpr key;
  for (const auto& x : nonces()) key += x;
  return key;
}

KeyStore prepare_store(const Topology& topo, const Schedule& schedule, std::size_t n,
                       std::uint64_t seed) {
  KeyStore store = establish(plan_keys(topo, schedule.variant), n, seed);
  for (const auto& x : schedule.nonces) sample_secret(store, x, seed);
  return store;
}

namespace {

void evaluate_output(const OutputRecipe& recipe, const std::vector<Message>& messages,
                     const KeyStore& store, BitString& bits, SymbolicExpr& expr) {
  bits = BitString::zeros(store.bit_length());
  expr = SymbolicExpr{};
  for (const auto& x : recipe.nonces) {
    bits ^= store.at(x);
    expr += x;
  }
  for (const auto& [index, keys] : recipe.decrypts) {
    bits ^= messages.at(static_cast<std::size_t>(index)).bits;
    expr += messages.at(static_cast<std::size_t>(index)).expr;
    for (const auto& k : keys) {
      bits ^= store.at(k);
      expr += k;
    }
  }
}

}  // namespace

ProtocolTrace execute(const Topology& topo, const Schedule& schedule, KeyStore store) {
  std::vector<Message> messages;
  messages.reserve(schedule.messages.size());
  for (const auto& step : schedule.messages) {
    if (!topo.adjacent(step.sender, step.receiver)) {
      throw Error(ErrorCode::Incompatible, "message M" + std::to_string(step.index) + " from " +
                                               step.sender.label() + " to " +
                                               step.receiver.label() + " crosses no link");
    }
    BitString bits = BitString::zeros(store.bit_length());
    SymbolicExpr expr;
    if (step.input) {
      const Message& in = messages.at(static_cast<std::size_t>(*step.input));
      if (in.receiver != step.sender) {
        throw Error(ErrorCode::Incompatible, "M" + std::to_string(step.index) +
                                                 " forwards a message its sender never got");
      }
      bits ^= in.bits;
      expr += in.expr;
    }
    if (step.nonce) {
      bits ^= store.at(*step.nonce);
      expr += *step.nonce;
    }
    for (const auto& k : step.keys) {
      bits ^= store.at(k);
      expr += k;
    }
    if (eval(expr, store) != bits) {
      throw std::logic_error("M" + std::to_string(step.index) +
                             " disagrees with its symbolic form");
    }
    messages.push_back({step.index, step.sender, step.receiver, std::move(bits), std::move(expr)});
  }

  ProtocolTrace trace{topo, schedule, std::move(store), std::move(messages), {}, {}, {}, {}};
  evaluate_output(schedule.alice, trace.messages, trace.keys, trace.output_a,
                  trace.output_a_expr);
  evaluate_output(schedule.bob, trace.messages, trace.keys, trace.output_b, trace.output_b_expr);
  return trace;
}

ProtocolTrace run_protocol(const Topology& topo, const ProtocolVariant& variant, std::size_t n,
                           std::uint64_t seed) {
  Schedule schedule = build_schedule(topo, variant);
  KeyStore store = prepare_store(topo, schedule, n, seed);
  return execute(topo, schedule, std::move(store));
}

namespace {

ProtocolTrace run_kind(VariantKind kind, const Topology& topo, std::size_t n,
                       std::uint64_t seed) {
  return run_protocol(topo, ProtocolVariant::parse(variant_kind_name(kind), topo), n, seed);
}

}  // namespace

ProtocolTrace run_ring_v1(const Topology& topo, std::size_t n, std::uint64_t seed) {
  return run_kind(VariantKind::RingV1, topo, n, seed);
}
ProtocolTrace run_ring_v2(const Topology& topo, std::size_t n, std::uint64_t seed) {
  return run_kind(VariantKind::RingV2, topo, n, seed);
}
ProtocolTrace run_chain2(const Topology& topo, std::size_t n, std::uint64_t seed) {
  return run_kind(VariantKind::Chain2, topo, n, seed);
}
ProtocolTrace run_chain_m(const Topology& topo, std::size_t n, std::uint64_t seed) {
  return run_kind(VariantKind::ChainM, topo, n, seed);
}
ProtocolTrace run_reach_t(const Topology& topo, std::size_t n, std::uint64_t seed) {
  return run_kind(VariantKind::ReachT, topo, n, seed);
}

ProtocolTrace run_multipath(const Topology& topo, std::size_t n, std::uint64_t seed,
                            const NonceAliases* aliases) {
  auto variant = ProtocolVariant::parse("multipath", topo);
  Schedule schedule = build_schedule(topo, variant, aliases);
  KeyStore store = prepare_store(topo, schedule, n, seed);
  return execute(topo, schedule, std::move(store));
}

ProtocolTrace send_message_as_payload(const BitString& z, const Topology& topo,
                                      std::uint64_t seed) {
  auto variant = ProtocolVariant::parse("chain-m", topo);
  Schedule schedule = build_schedule(topo, variant);
  KeyStore store = establish(plan_keys(topo, variant), z.size(), seed);
  store.insert(SecretId::nonce(Party::alice()), z);
  return execute(topo, schedule, std::move(store));
}

std::string ProtocolTrace::to_text() const {
  std::string out = "# variant=" + variant().name() + " shape=" + shape_name(topology.shape()) +
                    " n=" + std::to_string(keys.bit_length()) + "\n";
  for (const auto& msg : messages) {
    out += "M" + std::to_string(msg.index) + " " + msg.sender.label() + "->" +
           msg.receiver.label() + " bits=" + msg.bits.to_hex() + " expr=" + msg.expr.to_string() +
           "\n";
  }
  out += "K(A) " + output_a.to_hex() + " expr=" + output_a_expr.to_string() + "\n";
  out += "K(B) " + output_b.to_hex() + " expr=" + output_b_expr.to_string() + "\n";
  return out;
}

std::string ProtocolTrace::to_json() const {
  nlohmann::ordered_json doc;
  doc["variant"] = variant().name();
  nlohmann::ordered_json topo = nlohmann::ordered_json::object();
  const Config shape = topology.to_config();
  for (const auto& [k, v] : shape.entries()) topo[k] = v;
  doc["topology"] = topo;
  doc["n"] = keys.bit_length();
  doc["messages"] = nlohmann::ordered_json::array();
  for (const auto& msg : messages) {
    doc["messages"].push_back({{"index", msg.index},
                               {"sender", msg.sender.label()},
                               {"receiver", msg.receiver.label()},
                               {"bits", msg.bits.to_hex()},
                               {"expr", msg.expr.to_string()}});
  }
  doc["key_expr"] = final_key().to_string();
  doc["output_a"] = output_a.to_hex();
  doc["output_b"] = output_b.to_hex();
  return doc.dump(2) + "\n";
}

}  // namespace tfrelay
