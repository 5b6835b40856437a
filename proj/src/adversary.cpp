#include "tfrelay/adversary.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <unordered_map>

#include "tfrelay/gf2.hpp"

namespace tfrelay {

bool Coalition::has_endpoint() const {
  for (const auto& p : members) {
    if (p.is_endpoint()) return true;
  }
  return false;
}

std::string Coalition::to_string() const {
  std::string out = "{";
  for (const auto& p : members) {
    if (out.size() > 1) out += ",";
    out += p.label();
  }
  return out + "}";
}

Coalition Coalition::parse(std::string_view members, bool collaborating) {
  Coalition c;
  c.collaborating = collaborating;
  while (!members.empty()) {
    auto comma = members.find(',');
    auto token = members.substr(0, comma);
    if (!token.empty()) c.members.insert(Party::parse(token));
    if (comma == std::string_view::npos) break;
    members.remove_prefix(comma + 1);
  }
  return c;
}

AdversaryView view_of(const ProtocolTrace& trace, const Coalition& c) {
  for (const auto& p : c.members) {
    if (!trace.topology.contains(p)) {
      throw Error(ErrorCode::InvalidArgument,
                  "coalition member " + p.label() + " is not in the topology");
    }
  }
  AdversaryView view;
  for (const auto& msg : trace.messages) view.observed.push_back(msg.expr);
  for (const auto& [id, value] : trace.keys.entries()) {
    for (const auto& p : c.members) {
      if (id.involves(p)) view.known_secrets.insert(id);
    }
  }
  return view;
}

SecrecyVerdict is_recoverable(const AdversaryView& view, const SymbolicExpr& target) {
  std::map<SecretId, std::size_t> column;
  auto index_terms = [&](const SymbolicExpr& e) {
    for (const auto& id : e.terms()) column.emplace(id, 0);
  };
  for (const auto& e : view.observed) index_terms(e);
  for (const auto& id : view.known_secrets) column.emplace(id, 0);
  index_terms(target);
  std::size_t next = 0;
  for (auto& [id, col] : column) col = next++;

  auto to_vector = [&](const SymbolicExpr& e) {
    gf2::BitVector v(column.size());
    for (const auto& id : e.terms()) v.set(column.at(id));
    return v;
  };

  std::vector<SecretId> known(view.known_secrets.begin(), view.known_secrets.end());
  gf2::SpanTracker span(column.size(), view.observed.size() + known.size());
  for (const auto& e : view.observed) span.add(to_vector(e));
  for (const auto& id : known) span.add(to_vector(SymbolicExpr::of(id)));

  SecrecyVerdict verdict;
  verdict.target = target;
  auto combo = span.express(to_vector(target));
  if (!combo) return verdict;

  verdict.status = Secrecy::Broken;
  Recovery recovery;
  for (std::size_t g = 0; g < view.observed.size(); ++g) {
    if (combo->test(g)) recovery.messages.push_back(static_cast<int>(g));
  }
  for (std::size_t g = 0; g < known.size(); ++g) {
    if (combo->test(view.observed.size() + g)) recovery.known_secrets.push_back(known[g]);
  }
  verdict.recovery = std::move(recovery);
  return verdict;
}

SecrecyVerdict assess(const ProtocolTrace& trace, const Coalition& c,
                      const SymbolicExpr& target) {
  SecrecyVerdict verdict;
  if (c.collaborating || c.members.size() <= 1) {
    verdict = is_recoverable(view_of(trace, c), target);
  } else {
    verdict.target = target;
    for (const auto& p : c.members) {
      auto alone = is_recoverable(view_of(trace, Coalition{{p}, true}), target);
      if (alone.broken()) {
        verdict = std::move(alone);
        break;
      }
    }
  }
  verdict.degenerate = c.has_endpoint();
  return verdict;
}

BitString replay_recovery(const ProtocolTrace& trace, const Recovery& recovery) {
  BitString out = BitString::zeros(trace.keys.bit_length());
  for (int index : recovery.messages) out ^= trace.messages.at(static_cast<std::size_t>(index)).bits;
  for (const auto& id : recovery.known_secrets) out ^= trace.keys.at(id);
  return out;
}

namespace {

std::vector<Party> checked_intermediaries(const ProtocolTrace& trace, std::size_t limit) {
  auto nodes = trace.topology.intermediaries();
  if (nodes.size() > limit) {
    throw Error(ErrorCode::LimitExceeded,
                "coalition enumeration over " + std::to_string(nodes.size()) +
                    " intermediaries exceeds the cap of " + std::to_string(limit) +
                    "; analyze chosen coalitions with --coalition instead");
  }
  return nodes;
}

Coalition coalition_from_mask(const std::vector<Party>& nodes, std::uint32_t mask) {
  Coalition c;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (mask >> i & 1u) c.members.insert(nodes[i]);
  }
  return c;
}

// Masks ordered by popcount, then numerically.
std::vector<std::uint32_t> masks_by_size(std::size_t k) {
  std::vector<std::uint32_t> masks(std::size_t{1} << k);
  for (std::uint32_t m = 0; m < masks.size(); ++m) masks[m] = m;
  std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    return std::popcount(a) < std::popcount(b);
  });
  return masks;
}

}  // namespace

std::vector<Coalition> min_breaking_coalitions(const ProtocolTrace& trace,
                                               const SymbolicExpr& target,
                                               std::size_t max_intermediaries) {
  auto nodes = checked_intermediaries(trace, max_intermediaries);
  std::vector<std::uint32_t> minimal;
  for (std::uint32_t mask : masks_by_size(nodes.size())) {
    bool covered = false;
    for (std::uint32_t f : minimal) {
      if ((mask & f) == f) {
        covered = true;
        break;
      }
    }
    if (covered) continue;
    if (is_recoverable(view_of(trace, coalition_from_mask(nodes, mask)), target).broken()) {
      minimal.push_back(mask);
    }
  }
  std::vector<Coalition> out;
  for (std::uint32_t mask : minimal) out.push_back(coalition_from_mask(nodes, mask));
  return out;
}

std::vector<CoalitionVerdict> all_intermediary_verdicts(const ProtocolTrace& trace,
                                                        const SymbolicExpr& target,
                                                        std::size_t max_intermediaries) {
  auto nodes = checked_intermediaries(trace, max_intermediaries);
  std::vector<CoalitionVerdict> out;
  for (std::uint32_t mask : masks_by_size(nodes.size())) {
    Coalition c = coalition_from_mask(nodes, mask);
    auto status = is_recoverable(view_of(trace, c), target).status;
    out.push_back({std::move(c), status});
  }
  return out;
}

std::string coalition_report_csv(const ProtocolTrace& trace,
                                 const std::vector<CoalitionVerdict>& verdicts) {
  std::string params;
  const Config shape = trace.topology.to_config();
  for (const auto& [k, v] : shape.entries()) {
    if (!params.empty()) params += ";";
    params += k + "=" + v;
  }
  if (params.find(',') != std::string::npos) params = "\"" + params + "\"";
  std::string out = "variant,topology,coalition,status\n";
  for (const auto& v : verdicts) {
    std::string members;
    for (const auto& p : v.coalition.members) {
      if (!members.empty()) members += " ";
      members += p.label();
    }
    out += trace.variant().name() + "," + params + "," + (members.empty() ? "-" : members) + "," +
           (v.status == Secrecy::Broken ? "BROKEN" : "SECURE") + "\n";
  }
  return out;
}

OracleVerdict brute_force_secrecy(const ProtocolTrace& trace, const Coalition& c,
                                  const SymbolicExpr& target) {
  if (trace.keys.bit_length() != 1) {
    throw Error(ErrorCode::Precondition, "the exhaustive oracle runs on n = 1 traces");
  }
  std::vector<SecretId> secrets;
  std::map<SecretId, std::size_t> bit_of;
  for (const auto& [id, value] : trace.keys.entries()) {
    bit_of.emplace(id, secrets.size());
    secrets.push_back(id);
  }
  if (secrets.size() > kMaxOracleSecrets) {
    throw Error(ErrorCode::LimitExceeded, std::to_string(secrets.size()) +
                                              " secrets exceed the oracle cap of " +
                                              std::to_string(kMaxOracleSecrets));
  }

  // The oracle replays the schedule bit by bit rather than trusting the
  // symbolic message forms.
  const auto& steps = trace.schedule.messages;
  std::vector<std::uint32_t> own_mask(steps.size(), 0);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].nonce) own_mask[k] ^= 1u << bit_of.at(*steps[k].nonce);
    for (const auto& key : steps[k].keys) own_mask[k] ^= 1u << bit_of.at(key);
  }
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < secrets.size(); ++i) {
    for (const auto& p : c.members) {
      if (secrets[i].involves(p)) {
        known.push_back(i);
        break;
      }
    }
  }
  if (steps.size() + known.size() > 64) {
    throw Error(ErrorCode::LimitExceeded, "adversary view wider than 64 bits");
  }
  std::uint32_t target_mask = 0;
  for (const auto& id : target.terms()) {
    auto it = bit_of.find(id);
    if (it == bit_of.end()) {
      throw Error(ErrorCode::InvalidArgument, "target term " + id.name() + " is not in the run");
    }
    target_mask |= 1u << it->second;
  }

  std::unordered_map<std::uint64_t, std::array<std::uint32_t, 2>> counts;
  std::vector<std::uint8_t> msg_bit(steps.size());
  const std::uint64_t total = std::uint64_t{1} << secrets.size();
  for (std::uint64_t a = 0; a < total; ++a) {
    const auto assignment = static_cast<std::uint32_t>(a);
    std::uint64_t view = 0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      std::uint8_t bit = std::popcount(own_mask[k] & assignment) & 1;
      if (steps[k].input) bit ^= msg_bit[static_cast<std::size_t>(*steps[k].input)];
      msg_bit[k] = bit;
      view |= std::uint64_t{bit} << k;
    }
    for (std::size_t j = 0; j < known.size(); ++j) {
      view |= std::uint64_t{(assignment >> known[j]) & 1u} << (steps.size() + j);
    }
    int t = std::popcount(target_mask & assignment) & 1;
    ++counts[view][static_cast<std::size_t>(t)];
  }

  bool determined = true;
  bool uniform = true;
  for (const auto& [view, c01] : counts) {
    if (c01[0] != 0 && c01[1] != 0) determined = false;
    if (c01[0] != c01[1]) uniform = false;
  }
  if (determined) return OracleVerdict::Broken;
  if (uniform) return OracleVerdict::Secure;
  return OracleVerdict::Partial;
}

namespace {

double entropy_bits(const std::map<std::uint32_t, int>& counts, int total) {
  double h = 0;
  for (const auto& [value, count] : counts) {
    double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

double active_attack_leakage(const ActiveStrategy& f) {
  std::map<std::uint32_t, int> x_counts, view_counts, joint_counts;
  int total = 0;
  for (std::uint32_t a = 0; a < 32; ++a) {
    const bool x = a & 1, k_a2 = a >> 1 & 1, p_a1 = a >> 2 & 1, k_b1 = a >> 3 & 1,
               p_b2 = a >> 4 & 1;
    const bool m0 = x ^ k_a2 ^ p_a1;
    const bool y = f(m0);
    const bool z = y ^ k_b1 ^ p_a1;
    const std::uint32_t view = std::uint32_t{m0} | std::uint32_t{z} << 1 |
                               std::uint32_t{k_a2} << 2 | std::uint32_t{p_b2} << 3;
    ++x_counts[x];
    ++view_counts[view];
    ++joint_counts[view << 1 | std::uint32_t{x}];
    ++total;
  }
  return entropy_bits(x_counts, total) + entropy_bits(view_counts, total) -
         entropy_bits(joint_counts, total);
}

double active_attack_check() {
  const std::array<ActiveStrategy, 4> strategies{
      [](bool) { return false; },
      [](bool) { return true; },
      [](bool m0) { return m0; },
      [](bool m0) { return !m0; },
  };
  double worst = 0;
  for (const auto& f : strategies) worst = std::max(worst, active_attack_leakage(f));
  return worst;
}

}  // namespace tfrelay
