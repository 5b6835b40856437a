// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tfrelay/adversary.hpp"
#include "tfrelay/ratemodel.hpp"
#include "tfrelay/wire.hpp"

using namespace tfrelay;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string summary;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 10) failures.push_back(what);
    }
  }
};

SymbolicExpr E(const char* text) { return SymbolicExpr::parse(text); }

Party N(int k) { return Party::relay(k); }

struct Case {
  std::string label;
  Topology topo;
  ProtocolVariant variant;
};

Case make(const std::string& label, const Topology& topo, const char* variant = nullptr) {
  return {label, topo,
          variant ? ProtocolVariant::parse(variant, topo) : ProtocolVariant::default_for(topo)};
}

std::vector<Case> correctness_cases() {
  std::vector<Case> out;
  out.push_back(make("ring-v1", build_ring6(100), "ring-v1"));
  out.push_back(make("ring-v2", build_ring6(100), "ring-v2"));
  out.push_back(make("chain2", build_chain(2, 100), "chain2"));
  for (int m = 2; m <= 6; ++m) {
    out.push_back(make("chain-m m=" + std::to_string(m), build_chain(m, 100), "chain-m"));
  }
  out.push_back(make("reach-t t=2 m=3", build_reach_t(3, 2, 100)));
  for (int paths = 1; paths <= 3; ++paths) {
    out.push_back(make("multipath M=" + std::to_string(paths),
                       build_multipath(std::vector<int>(paths, 2), 100)));
  }
  return out;
}

BitString xor_of_nonces(const ProtocolTrace& trace) {
  BitString acc = BitString::zeros(trace.keys.bit_length());
  for (const auto& [id, value] : trace.keys.entries()) {
    if (id.kind() == SecretKind::Nonce) acc ^= value;
  }
  return acc;
}

Outcome criterion1() {
  Outcome o;
  const auto start = Clock::now();
  std::size_t runs = 0;
  for (const auto& c : correctness_cases()) {
    for (std::size_t n : {1, 8, 64}) {
      for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto trace = run_protocol(c.topo, c.variant, n, seed);
        const auto expected = xor_of_nonces(trace);
        o.require(trace.output_a == trace.output_b && trace.output_a == expected,
                  c.label + " n=" + std::to_string(n) + " seed=" + std::to_string(seed));
        ++runs;
      }
    }
  }
  const double secs = seconds_since(start);
  o.require(secs < 5.0, "took " + std::to_string(secs) + " s");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu runs, K(A)=K(B)=XOR of nonces, %.2f s", runs, secs);
  o.summary = buf;
  return o;
}

std::vector<SymbolicExpr> exprs(const ProtocolTrace& trace) {
  std::vector<SymbolicExpr> out;
  for (const auto& m : trace.messages) out.push_back(m.expr);
  return out;
}

Outcome criterion2() {
  Outcome o;
  const std::vector<SymbolicExpr> ring_v1 = {
      E("X[A]+K[A,N2]"),        E("X[A]+K[A,N2]+K[B,N1]"), E("X[A]+K[B,N1]"),
      E("X[B]+K[B,N3]"),        E("X[B]+K[B,N3]+K[A,N4]"), E("X[B]+K[A,N4]"),
  };
  const std::vector<SymbolicExpr> ring_v2 = {
      E("X[A]+K[A,N2]+P[A,N1]"), E("X[A]+K[B,N1]+K[A,N2]"), E("X[A]+K[B,N1]+P[B,N2]"),
      E("X[B]+K[B,N3]+P[B,N4]"), E("X[B]+K[A,N4]+K[B,N3]"), E("X[B]+K[A,N4]+P[A,N3]"),
  };
  const std::vector<SymbolicExpr> reach = {
      E("X[A]+P[A,N1]+K[A,N2]+K[A,N3]"),
      E("X[A]+K[A,N2]+K[A,N3]+K[N1,N3]+K[B,N1]"),
      E("X[A]+K[A,N3]+K[N1,N3]+K[B,N1]+K[B,N2]"),
      E("X[A]+K[B,N1]+K[B,N2]+P[B,N3]"),
  };
  const std::vector<std::pair<Party, Party>> reach_hops = {
      {Party::alice(), N(1)}, {N(1), N(2)}, {N(2), N(3)}, {N(3), Party::bob()}};

  auto ring = build_ring6(100);
  o.require(exprs(run_ring_v1(ring, 16, 1)) == ring_v1, "ring-v1 messages");
  o.require(exprs(run_ring_v2(ring, 16, 1)) == ring_v2, "ring-v2 messages");
  auto t = run_reach_t(build_reach_t(3, 2, 100), 16, 1);
  o.require(exprs(t) == reach, "t=2 m=3 messages");
  for (std::size_t i = 0; i < t.messages.size() && i < reach_hops.size(); ++i) {
    o.require(t.messages[i].sender == reach_hops[i].first &&
                  t.messages[i].receiver == reach_hops[i].second,
              "t=2 m=3 row " + std::to_string(i) + " endpoints");
  }
  o.summary = "ring-v1 6/6, ring-v2 6/6, t=2 m=3 table 4/4 rows";
  return o;
}

Outcome criterion3() {
  Outcome o;
  auto ring = build_ring6(100);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto trace = run_ring_v1(ring, 128, seed);
    const auto view = view_of(trace, Coalition{});
    const auto s = std::to_string(seed);
    for (auto [target, msgs] : {std::pair{"X[A]", std::vector<int>{0, 1, 2}},
                                std::pair{"X[B]", std::vector<int>{3, 4, 5}}}) {
      auto verdict = is_recoverable(view, E(target));
      o.require(verdict.broken() && verdict.recovery, std::string(target) + " secure, seed " + s);
      if (!verdict.recovery) continue;
      o.require(verdict.recovery->messages == msgs && verdict.recovery->known_secrets.empty(),
                std::string(target) + " recovery set, seed " + s);
      o.require(replay_recovery(trace, *verdict.recovery) == trace.keys.at(SecretId::parse(target)),
                std::string(target) + " bits, seed " + s);
    }
    // M0 + M1 exposes K[B,N1]
    o.require((trace.messages[0].bits ^ trace.messages[1].bits) ==
                  trace.keys.at(SecretId::tf_key(Party::bob(), N(1))),
              "M0+M1 != K[B,N1], seed " + s);
    auto key = is_recoverable(view, trace.final_key());
    o.require(key.broken() && replay_recovery(trace, *key.recovery) == trace.output_a,
              "final key, seed " + s);
  }
  o.summary = "X[A] <- {M0,M1,M2}, X[B] <- {M3,M4,M5}, bit-exact on 20 seeds";
  return o;
}

std::vector<std::string> minimal_sets(const ProtocolTrace& trace) {
  std::vector<std::string> out;
  for (const auto& c : min_breaking_coalitions(trace, trace.final_key())) out.push_back(c.to_string());
  return out;
}

Outcome criterion4() {
  Outcome o;
  const auto start = Clock::now();
  auto ring = run_protocol(build_ring6(100), ProtocolVariant::parse("ring-v2", build_ring6(100)), 1, 1);
  o.require(minimal_sets(ring) == std::vector<std::string>{"{N1,N2,N3,N4}"}, "ring-v2");

  auto c2 = build_chain(2, 100);
  o.require(minimal_sets(run_protocol(c2, ProtocolVariant::parse("chain2", c2), 1, 1)) ==
                std::vector<std::string>{"{N1,N2}"},
            "chain2");

  for (int m = 2; m <= 8; ++m) {
    auto topo = build_chain(m, 100);
    std::vector<std::string> pairs;
    for (int i = 1; i < m; ++i) {
      pairs.push_back("{N" + std::to_string(i) + ",N" + std::to_string(i + 1) + "}");
    }
    const auto got = minimal_sets(run_protocol(topo, ProtocolVariant::parse("chain-m", topo), 1, 1));
    std::string extra;
    for (const auto& c : got) {
      if (std::find(pairs.begin(), pairs.end(), c) == pairs.end()) extra += " " + c;
    }
    o.require(got == pairs, "chain-m m=" + std::to_string(m) + ": minimal sets beyond the adjacent pairs:" +
                                (extra.empty() ? std::string(" none (order or missing pair)") : extra));
  }

  const std::vector<std::vector<int>> multipaths = {{2}, {2, 2}, {2, 2, 2}, {2, 3}, {3, 2, 4}};
  for (const auto& lengths : multipaths) {
    auto topo = build_multipath(lengths, 100);
    auto trace = run_protocol(topo, ProtocolVariant::default_for(topo), 1, 1);
    auto mins = min_breaking_coalitions(trace, trace.final_key());
    const std::size_t expected = 2 * lengths.size();
    o.require(!mins.empty() && mins.front().members.size() == expected,
              "multipath " + join_ints(lengths) + " minimum size");
  }

  auto reach_topo = build_reach_t(3, 2, 100);
  auto reach = run_protocol(reach_topo, ProtocolVariant::default_for(reach_topo), 1, 1);
  o.require(!assess(reach, Coalition::parse("N1,N2"), reach.final_key()).broken(),
            "reach-t {N1,N2} breaks");

  const double secs = seconds_since(start);
  o.require(secs < 10.0, "took " + std::to_string(secs) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "ring-v2 4, chain 2, multipath 2M for M=1..3, reach {N1,N2} secure, %.2f s", secs);
  o.summary = buf;
  return o;
}

Outcome criterion5() {
  Outcome o;
  std::vector<Case> cases;
  cases.push_back(make("ring-v2", build_ring6(100), "ring-v2"));
  cases.push_back(make("chain2", build_chain(2, 100), "chain2"));
  for (int m = 2; m <= 8; ++m) cases.push_back(make("chain-m", build_chain(m, 100), "chain-m"));
  for (int paths = 1; paths <= 3; ++paths) {
    cases.push_back(make("multipath", build_multipath(std::vector<int>(paths, 2), 100)));
  }
  cases.push_back(make("reach-t", build_reach_t(3, 2, 100)));

  std::size_t checks = 0, disagreements = 0;
  for (const auto& c : cases) {
    auto trace = run_protocol(c.topo, c.variant, 1, 1);
    std::vector<SymbolicExpr> targets = {trace.final_key()};
    if (trace.nonces().size() > 1) {
      for (const auto& x : trace.nonces()) targets.push_back(SymbolicExpr{x});
    }
    const auto inter = c.topo.intermediaries();
    for (std::uint32_t mask = 0; mask < (1u << inter.size()); ++mask) {
      Coalition coalition;
      for (std::size_t i = 0; i < inter.size(); ++i) {
        if (mask >> i & 1u) coalition.members.insert(inter[i]);
      }
      for (const auto& target : targets) {
        const bool broken = is_recoverable(view_of(trace, coalition), target).broken();
        const auto oracle = brute_force_secrecy(trace, coalition, target);
        const bool agree = oracle == (broken ? OracleVerdict::Broken : OracleVerdict::Secure);
        if (!agree) {
          ++disagreements;
          o.require(false, c.variant.name() + " " + coalition.to_string() + " " + target.to_string());
        }
        ++checks;
      }
    }
  }
  o.require(checks >= 500, "only " + std::to_string(checks) + " checks");
  o.summary = std::to_string(checks) + " coalition checks, " + std::to_string(disagreements) +
              " disagreements";
  return o;
}

Outcome criterion6() {
  Outcome o;
  const double bits = active_attack_check();
  o.require(bits == 0.0, "leakage " + std::to_string(bits));
  char buf[96];
  std::snprintf(buf, sizeof buf, "max leakage over 4 strategies = %g bits", bits);
  o.summary = buf;
  return o;
}

Outcome criterion7() {
  Outcome o;
  RateParams p;
  p.c_tf = calibrate_c_tf(300, 1000, p);
  auto within = [](double value, double quoted, double factor) {
    return value <= quoted * factor && value >= quoted / factor;
  };
  const double tf300 = rate_tf(300, p);
  const double tf500 = rate_tf(500, p);
  const double s600 = rate_scheme(600, 2, 1, p);
  const double s400 = rate_scheme(400, 2, 1, p);
  const double tf600 = rate_tf(600, p);
  o.require(std::abs(tf300 - 1000.0) <= 1e-12 * 1000.0, "tf@300 calibration");
  o.require(within(tf500, 6, 2.5), "tf@500 = " + std::to_string(tf500) + " vs ~6");
  o.require(within(s600, 100, 2.5), "scheme@600 = " + std::to_string(s600) + " vs ~100");
  o.require(within(s400, 1000, 2.5), "scheme@400 = " + std::to_string(s400) + " vs ~1000");
  o.require(virtually_null(tf600, p), "tf@600 = " + format_double(tf600) +
                                          " bps is not below the " +
                                          format_double(p.threshold_bps) + " bps threshold");

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> length(1e-3, 1000.0);
  double worst_identity = 0;
  for (int i = 0; i < 100; ++i) {
    const double L = length(rng);
    const double rel = std::abs(rate_scheme(3 * L, 2, 1, p) - rate_tf(2 * L, p)) / rate_tf(2 * L, p);
    worst_identity = std::max(worst_identity, rel);
  }
  o.require(worst_identity <= 1e-12, "identity error " + std::to_string(worst_identity));
  double worst_factor = 0;
  for (int m = 2; m <= 12; ++m) {
    const double ratio = max_range(m, p) / max_range_tf(p);
    worst_factor = std::max(worst_factor, std::abs(ratio - (m + 1) / 2.0) / ((m + 1) / 2.0));
  }
  o.require(worst_factor <= 1e-9, "range factor error " + std::to_string(worst_factor));

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "tf@300=%g tf@500=%.3g scheme@600=%.4g scheme@400=%.4g tf@600=%g (thr %g); "
                "identity err %.1e, range err %.1e",
                tf300, tf500, s600, s400, tf600, p.threshold_bps, worst_identity, worst_factor);
  o.summary = buf;
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto start = Clock::now();
  const auto root = fs::temp_directory_path() / "tfrelay_acceptance_wire";
  fs::remove_all(root);
  std::uint16_t port = 26000;
  std::size_t runs = 0;
  for (const auto& c : {make("ring-v2", build_ring6(100), "ring-v2"),
                        make("chain-m", build_chain(3, 100), "chain-m")}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto dir = (root / (c.label + "_" + std::to_string(seed))).string();
      auto result = wire::orchestrate(c.topo, c.variant, 128, seed, port, dir);
      port = static_cast<std::uint16_t>(port + 10);
      auto engine = run_protocol(c.topo, c.variant, 128, seed);
      const bool ok = result.status == wire::WireStatus::Ok && result.key_a && result.key_b &&
                      result.key_a->bytes() == engine.output_a.bytes() &&
                      result.key_b->bytes() == engine.output_b.bytes();
      o.require(ok, c.label + " seed " + std::to_string(seed) + ": " + result.report);
      ++runs;
    }
  }
  {
    auto topo = build_chain(3, 100);
    const auto dir = root / "tamper";
    wire::OrchestrateOptions opts;
    opts.tamper_message = 2;
    auto result = wire::orchestrate(topo, ProtocolVariant::parse("chain-m", topo), 128, 1, port,
                                    dir.string(), opts);
    o.require(result.status == wire::WireStatus::Abort && !result.key_a && !result.key_b &&
                  !fs::exists(dir / "key_A.txt") && !fs::exists(dir / "key_B.txt"),
              "tampered run: " + result.report);
  }
  const double secs = seconds_since(start);
  o.require(secs < 30.0, "took " + std::to_string(secs) + " s");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu runs byte-identical to engine, tamper aborted keyless, %.2f s",
                runs, secs);
  o.summary = buf;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"correctness suite", criterion1},
      {"golden message tables", criterion2},
      {"ring-v1 eavesdropping attack", criterion3},
      {"minimal colluding coalitions", criterion4},
      {"analyzer / brute-force oracle agreement", criterion5},
      {"active adversary leakage", criterion6},
      {"rate anchors", criterion7},
      {"wire / engine equivalence", criterion8},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    std::printf("criterion %zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.summary.c_str());
    for (const auto& f : o.failures) std::printf("    - %s\n", f.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
