#include <gtest/gtest.h>

#include <bitset>
#include <map>
#include <random>

#include "tfrelay/adversary.hpp"

using namespace tfrelay;

namespace {

SymbolicExpr E(const char* text) { return SymbolicExpr::parse(text); }

std::set<std::string> names(const std::set<SecretId>& ids) {
  std::set<std::string> out;
  for (const auto& id : ids) out.insert(id.name());
  return out;
}

ProtocolTrace trace_for(const Topology& topo, const char* variant, std::size_t n = 8,
                        std::uint64_t seed = 1) {
  return run_protocol(topo, ProtocolVariant::parse(variant, topo), n, seed);
}

// Independent recoverability check: target is in the span of the view iff
// appending it does not raise the GF(2) rank.
bool rank_oracle(const ProtocolTrace& trace, const Coalition& c, const SymbolicExpr& target) {
  std::map<SecretId, std::size_t> column;
  for (const auto& [id, v] : trace.keys.entries()) column.emplace(id, column.size());
  auto vec = [&](const SymbolicExpr& e) {
    std::bitset<64> b;
    for (const auto& id : e.terms()) b.set(column.at(id));
    return b;
  };
  std::vector<std::bitset<64>> rows;
  for (const auto& m : trace.messages) rows.push_back(vec(m.expr));
  for (const auto& [id, v] : trace.keys.entries()) {
    for (const auto& p : c.members) {
      if (id.involves(p)) rows.push_back(vec(SymbolicExpr{id}));
    }
  }
  auto rank = [](std::vector<std::bitset<64>> m) {
    std::size_t r = 0;
    for (std::size_t col = 0; col < 64 && r < m.size(); ++col) {
      std::size_t pivot = r;
      while (pivot < m.size() && !m[pivot].test(col)) ++pivot;
      if (pivot == m.size()) continue;
      std::swap(m[r], m[pivot]);
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (i != r && m[i].test(col)) m[i] ^= m[r];
      }
      ++r;
    }
    return r;
  };
  const auto base = rank(rows);
  rows.push_back(vec(target));
  return rank(rows) == base;
}

std::vector<Coalition> all_subsets(const Topology& topo) {
  auto inter = topo.intermediaries();
  std::vector<Coalition> out;
  for (std::uint32_t mask = 0; mask < (1u << inter.size()); ++mask) {
    Coalition c;
    for (std::size_t i = 0; i < inter.size(); ++i) {
      if (mask >> i & 1u) c.members.insert(inter[i]);
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(ViewTest, Examples) {
  auto ring = build_ring6(100);
  auto v2 = trace_for(ring, "ring-v2");
  auto empty = view_of(v2, Coalition{});
  EXPECT_EQ(empty.observed.size(), 6u);
  EXPECT_TRUE(empty.known_secrets.empty());
  EXPECT_EQ(names(view_of(v2, Coalition::parse("N1")).known_secrets),
            (std::set<std::string>{"K[B,N1]", "P[A,N1]"}));

  auto reach = run_protocol(build_reach_t(3, 2, 100),
                            ProtocolVariant::default_for(build_reach_t(3, 2, 100)), 8, 1);
  EXPECT_EQ(names(view_of(reach, Coalition::parse("N2")).known_secrets),
            (std::set<std::string>{"K[A,N2]", "K[B,N2]"}));
  EXPECT_THROW(view_of(v2, Coalition::parse("N7")), Error);
}

TEST(RecoverTest, RingV1Eavesdropper) {
  auto trace = trace_for(build_ring6(100), "ring-v1", 32, 3);
  auto verdict = is_recoverable(view_of(trace, Coalition{}), E("X[A]"));
  ASSERT_TRUE(verdict.broken());
  ASSERT_TRUE(verdict.recovery.has_value());
  EXPECT_EQ(verdict.recovery->messages, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(replay_recovery(trace, *verdict.recovery),
            trace.keys.at(SecretId::nonce(Party::alice())));
}

TEST(RecoverTest, RingV2Thresholds) {
  auto trace = trace_for(build_ring6(100), "ring-v2");
  const auto key = E("X[A]+X[B]");
  EXPECT_FALSE(assess(trace, Coalition::parse("N2,N3,N4"), key).broken());
  EXPECT_TRUE(assess(trace, Coalition::parse("N1,N2,N3,N4"), key).broken());
}

TEST(RecoverTest, EndpointCoalitionIsDegenerate) {
  auto trace = trace_for(build_ring6(100), "ring-v2");
  auto verdict = assess(trace, Coalition::parse("A,B"), trace.final_key());
  EXPECT_TRUE(verdict.broken());
  EXPECT_TRUE(verdict.degenerate);
}

TEST(RecoverTest, NonCollaboratingCoalitionIsSecure) {
  auto trace = trace_for(build_ring6(100), "ring-v2");
  auto all = Coalition::parse("N1,N2,N3,N4", false);
  EXPECT_FALSE(assess(trace, all, trace.final_key()).broken());
}

TEST(MinCoalitionsTest, ChainFourMinimalPairs) {
  // Every adjacent pair breaks, and so does {N1,N4}: M2 = X[A]+K[N1,N3]+K[N2,N4]
  // carries one key from each of them.
  auto trace = trace_for(build_chain(4, 100), "chain-m");
  auto mins = min_breaking_coalitions(trace, trace.final_key());
  std::set<std::string> got;
  for (const auto& c : mins) {
    got.insert(c.to_string());
    EXPECT_EQ(c.members.size(), 2u);
  }
  EXPECT_EQ(got, (std::set<std::string>{"{N1,N2}", "{N2,N3}", "{N3,N4}", "{N1,N4}"}));

  auto verdict = assess(trace, Coalition::parse("N1,N4"), trace.final_key());
  ASSERT_TRUE(verdict.broken());
  EXPECT_EQ(verdict.recovery->messages, (std::vector<int>{2}));
  EXPECT_EQ(replay_recovery(trace, *verdict.recovery), trace.output_b);
}

TEST(MinCoalitionsTest, ChainPairsBreakAtOddDistance) {
  // An odd run M_i + ... + M_j telescopes to X[A] + K[N_{i-1},N_{i+1}] + K[N_{j-1},N_{j+1}].
  for (int m = 2; m <= 8; ++m) {
    auto trace = trace_for(build_chain(m, 100), "chain-m");
    auto bits = trace_for(build_chain(m, 100), "chain-m", 1);
    for (int i = 1; i <= m; ++i) {
      for (int j = i + 1; j <= m; ++j) {
        Coalition c;
        c.members = {Party::relay(i), Party::relay(j)};
        const bool odd = (j - i) % 2 == 1;
        EXPECT_EQ(assess(trace, c, trace.final_key()).broken(), odd) << m << " " << c.to_string();
        EXPECT_EQ(brute_force_secrecy(bits, c, bits.final_key()),
                  odd ? OracleVerdict::Broken : OracleVerdict::Secure)
            << m << " " << c.to_string();
      }
    }
  }
}

TEST(MinCoalitionsTest, MultipathTwoByTwo) {
  auto topo = build_multipath({2, 2}, 100);
  auto trace = run_protocol(topo, ProtocolVariant::default_for(topo), 8, 1);
  auto mins = min_breaking_coalitions(trace, trace.final_key());
  ASSERT_FALSE(mins.empty());
  EXPECT_EQ(mins.front().members.size(), 4u);
}

TEST(MinCoalitionsTest, ReachHonestThirdNodeSuffices) {
  auto topo = build_reach_t(3, 2, 100);
  auto trace = run_protocol(topo, ProtocolVariant::default_for(topo), 8, 1);
  EXPECT_FALSE(assess(trace, Coalition::parse("N1,N2"), trace.final_key()).broken());
}

TEST(MinCoalitionsTest, RingV2NeedsEveryone) {
  auto trace = trace_for(build_ring6(100), "ring-v2");
  auto mins = min_breaking_coalitions(trace, trace.final_key());
  ASSERT_EQ(mins.size(), 1u);
  EXPECT_EQ(mins[0].to_string(), "{N1,N2,N3,N4}");
}

TEST(MinCoalitionsTest, SizeCapRejected) {
  auto trace = trace_for(build_chain(6, 100), "chain-m");
  try {
    min_breaking_coalitions(trace, trace.final_key(), 5);
    FAIL() << "cap not enforced";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LimitExceeded);
  }
}

TEST(OracleTest, Examples) {
  auto v1 = trace_for(build_ring6(100), "ring-v1", 1);
  EXPECT_EQ(brute_force_secrecy(v1, Coalition{}, v1.final_key()), OracleVerdict::Broken);
  auto v2 = trace_for(build_ring6(100), "ring-v2", 1);
  for (int k = 1; k <= 4; ++k) {
    Coalition c;
    c.members.insert(Party::relay(k));
    EXPECT_EQ(brute_force_secrecy(v2, c, v2.final_key()), OracleVerdict::Secure);
  }
  EXPECT_EQ(brute_force_secrecy(v2, Coalition::parse("A,B"), v2.final_key()),
            OracleVerdict::Broken);
  EXPECT_THROW(brute_force_secrecy(trace_for(build_ring6(100), "ring-v2", 8), Coalition{},
                                   v2.final_key()),
               Error);
}

TEST(ActiveAttackTest, NoLeakage) {
  EXPECT_EQ(active_attack_leakage([](bool x) { return x; }), 0.0);
  EXPECT_EQ(active_attack_leakage([](bool) { return false; }), 0.0);
  EXPECT_EQ(active_attack_check(), 0.0);
}

TEST(AdversaryProperty, AnalyzerMatchesOracles) {
  std::vector<ProtocolTrace> traces = {
      trace_for(build_ring6(100), "ring-v1", 1),
      trace_for(build_ring6(100), "ring-v2", 1),
      trace_for(build_chain(2, 100), "chain2", 1),
  };
  for (int m = 2; m <= 4; ++m) traces.push_back(trace_for(build_chain(m, 100), "chain-m", 1));
  {
    auto topo = build_reach_t(3, 2, 100);
    traces.push_back(run_protocol(topo, ProtocolVariant::default_for(topo), 1, 1));
  }
  std::size_t checks = 0;
  for (const auto& trace : traces) {
    std::vector<SymbolicExpr> targets = {trace.final_key()};
    for (const auto& x : trace.nonces()) targets.push_back(SymbolicExpr{x});
    for (const auto& c : all_subsets(trace.topology)) {
      for (const auto& target : targets) {
        const bool broken = is_recoverable(view_of(trace, c), target).broken();
        EXPECT_EQ(broken, rank_oracle(trace, c, target)) << c.to_string();
        EXPECT_EQ(broken ? OracleVerdict::Broken : OracleVerdict::Secure,
                  brute_force_secrecy(trace, c, target))
            << trace.variant().name() << " " << c.to_string() << " " << target.to_string();
        ++checks;
      }
    }
  }
  EXPECT_GE(checks, 100u);
}

TEST(AdversaryProperty, MonotoneUnderSupersets) {
  for (const auto& trace : {trace_for(build_chain(5, 100), "chain-m"),
                            trace_for(build_ring6(100), "ring-v2")}) {
    auto subsets = all_subsets(trace.topology);
    for (const auto& c : subsets) {
      if (!assess(trace, c, trace.final_key()).broken()) continue;
      for (const auto& d : subsets) {
        if (std::includes(d.members.begin(), d.members.end(), c.members.begin(), c.members.end())) {
          EXPECT_TRUE(assess(trace, d, trace.final_key()).broken()) << d.to_string();
        }
      }
    }
  }
}

TEST(AdversaryProperty, RecoveryReplaysTarget) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto topo = build_chain(2 + static_cast<int>(rng() % 5), 100);
    auto trace = run_protocol(topo, ProtocolVariant::default_for(topo), 1 + rng() % 128, rng());
    for (const auto& c : all_subsets(topo)) {
      auto verdict = is_recoverable(view_of(trace, c), trace.final_key());
      if (!verdict.broken()) continue;
      EXPECT_EQ(replay_recovery(trace, *verdict.recovery), trace.output_a);
    }
  }
}

TEST(AdversaryProperty, VerdictIndependentOfLength) {
  auto ring = build_ring6(100);
  for (const char* variant : {"ring-v1", "ring-v2"}) {
    auto t1 = trace_for(ring, variant, 1);
    auto t8 = trace_for(ring, variant, 8);
    auto t64 = trace_for(ring, variant, 64);
    for (const auto& c : all_subsets(ring)) {
      const bool b1 = assess(t1, c, t1.final_key()).broken();
      EXPECT_EQ(b1, assess(t8, c, t8.final_key()).broken());
      EXPECT_EQ(b1, assess(t64, c, t64.final_key()).broken());
    }
  }
}

TEST(ReportTest, CsvHeaderAndRows) {
  auto trace = trace_for(build_chain(2, 100), "chain2");
  auto csv = coalition_report_csv(trace, all_intermediary_verdicts(trace, trace.final_key()));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,topology,coalition,status");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
