#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tfrelay/protocol.hpp"

namespace tfrelay {

struct Coalition {
  std::set<Party> members;
  // false: every member is corrupt but works alone.
  bool collaborating = true;

  bool has_endpoint() const;
  std::string to_string() const;  // "{N1,N2}"
  static Coalition parse(std::string_view members, bool collaborating = true);
};

struct AdversaryView {
  std::vector<SymbolicExpr> observed;  // every classical message, by index
  std::set<SecretId> known_secrets;    // keys and nonces held by a member
};

enum class Secrecy { Secure, Broken };

struct Recovery {
  std::vector<int> messages;           // indices into the trace
  std::vector<SecretId> known_secrets; // unit vectors used
};

struct SecrecyVerdict {
  SymbolicExpr target;
  Secrecy status = Secrecy::Secure;
  std::optional<Recovery> recovery;
  bool degenerate = false;  // the coalition contains an endpoint

  bool broken() const { return status == Secrecy::Broken; }
};

// All messages are public. TF relays learn nothing from relaying, so only
// keys a member holds as an endpoint enter `known_secrets`.
AdversaryView view_of(const ProtocolTrace& trace, const Coalition& c);

SecrecyVerdict is_recoverable(const AdversaryView& view, const SymbolicExpr& target);

// Honors Coalition::collaborating: a non-collaborating coalition breaks the
// target only if one of its members does so alone.
SecrecyVerdict assess(const ProtocolTrace& trace, const Coalition& c, const SymbolicExpr& target);

// XOR of the recovery over the concrete trace values.
BitString replay_recovery(const ProtocolTrace& trace, const Recovery& recovery);

constexpr std::size_t kMaxEnumeratedIntermediaries = 20;

// Inclusion-minimal intermediary coalitions that recover `target`, ordered by
// size then members.
std::vector<Coalition> min_breaking_coalitions(
    const ProtocolTrace& trace, const SymbolicExpr& target,
    std::size_t max_intermediaries = kMaxEnumeratedIntermediaries);

// Every intermediary subset with its verdict, for coalition reports.
struct CoalitionVerdict {
  Coalition coalition;
  Secrecy status;
};
std::vector<CoalitionVerdict> all_intermediary_verdicts(
    const ProtocolTrace& trace, const SymbolicExpr& target,
    std::size_t max_intermediaries = kMaxEnumeratedIntermediaries);

// CSV: variant,topology,coalition,status
std::string coalition_report_csv(const ProtocolTrace& trace,
                                 const std::vector<CoalitionVerdict>& verdicts);

// Exhaustive oracle at n = 1: enumerates every assignment of every secret and
// checks whether the coalition's view pins the target bit (Broken), leaves it
// exactly uniform (Secure), or neither (Partial).
enum class OracleVerdict { Secure, Broken, Partial };
constexpr std::size_t kMaxOracleSecrets = 24;
OracleVerdict brute_force_secrecy(const ProtocolTrace& trace, const Coalition& c,
                                  const SymbolicExpr& target);

// Active N2 in the two-intermediary chain at n = 1: N2 sees M0, forwards
// Y = f(M0) to N1 and receives Z = Y + K[B,N1] + P[A,N1]. Returns the mutual
// information in bits between X[A] and N2's view (M0, Z and its own keys).
using ActiveStrategy = std::function<bool(bool)>;
double active_attack_leakage(const ActiveStrategy& f);
// Maximum over the four functions {0,1} -> {0,1}.
double active_attack_check();

}  // namespace tfrelay
