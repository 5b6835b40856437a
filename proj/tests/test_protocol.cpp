#include <gtest/gtest.h>

#include <random>

#include "tfrelay/keyplan.hpp"
#include "tfrelay/protocol.hpp"

using namespace tfrelay;

namespace {

SymbolicExpr E(const char* text) { return SymbolicExpr::parse(text); }

std::vector<SymbolicExpr> exprs(const ProtocolTrace& trace) {
  std::vector<SymbolicExpr> out;
  for (const auto& m : trace.messages) out.push_back(m.expr);
  return out;
}

// XOR of the run's nonces, computed straight from the store.
BitString nonce_xor(const ProtocolTrace& trace) {
  BitString acc = BitString::zeros(trace.keys.bit_length());
  for (const auto& [id, value] : trace.keys.entries()) {
    if (id.kind() == SecretKind::Nonce) acc ^= value;
  }
  return acc;
}

}  // namespace

TEST(RingV1Test, GoldenMessages) {
  auto trace = run_ring_v1(build_ring6(100), 16, 1);
  EXPECT_EQ(exprs(trace), (std::vector<SymbolicExpr>{
                              E("X[A]+K[A,N2]"),
                              E("X[A]+K[A,N2]+K[B,N1]"),
                              E("X[A]+K[B,N1]"),
                              E("X[B]+K[B,N3]"),
                              E("X[B]+K[B,N3]+K[A,N4]"),
                              E("X[B]+K[A,N4]"),
                          }));
  EXPECT_TRUE(trace.outputs_agree());
  EXPECT_EQ(trace.output_a, nonce_xor(trace));
}

TEST(RingV1Test, ZeroSecretsGiveZeroMessages) {
  auto topo = build_ring6(100);
  auto schedule = build_schedule(topo, ProtocolVariant::parse("ring-v1", topo));
  KeyStore store(8);
  for (const auto& id : schedule.keys()) store.insert(id, BitString::zeros(8));
  for (const auto& id : schedule.nonces) store.insert(id, BitString::zeros(8));
  auto trace = execute(topo, schedule, store);
  for (const auto& m : trace.messages) EXPECT_TRUE(m.bits.is_zero());
}

TEST(RingV2Test, GoldenMessages) {
  auto trace = run_ring_v2(build_ring6(100), 16, 1);
  EXPECT_EQ(exprs(trace), (std::vector<SymbolicExpr>{
                              E("X[A]+K[A,N2]+P[A,N1]"),
                              E("X[A]+K[B,N1]+K[A,N2]"),
                              E("X[A]+K[B,N1]+P[B,N2]"),
                              E("X[B]+K[B,N3]+P[B,N4]"),
                              E("X[B]+K[B,N3]+K[A,N4]"),
                              E("X[B]+K[A,N4]+P[A,N3]"),
                          }));
  EXPECT_TRUE(trace.outputs_agree());
}

TEST(RingV2Test, WrongShapeRejected) {
  EXPECT_THROW(run_ring_v2(build_chain(2, 100), 8, 1), Error);
}

TEST(Chain2Test, GoldenMessages) {
  auto trace = run_chain2(build_chain(2, 100), 16, 3);
  ASSERT_EQ(trace.messages.size(), 3u);
  EXPECT_EQ(trace.messages[0].expr, E("X[A]+K[A,N2]+P[A,N1]"));
  EXPECT_EQ(trace.messages[2].expr, E("X[A]+K[B,N1]+P[B,N2]"));
  EXPECT_EQ(trace.output_b, trace.keys.at(SecretId::nonce(Party::alice())));
  EXPECT_THROW(run_chain2(build_chain(3, 100), 8, 1), Error);
}

TEST(ChainMTest, ThreeIntermediaries) {
  auto trace = run_chain_m(build_chain(3, 100), 16, 3);
  ASSERT_EQ(trace.messages.size(), 4u);
  EXPECT_EQ(trace.messages[0].expr, E("X[A]+P[A,N1]+K[A,N2]"));
  EXPECT_EQ(trace.messages[3].expr, E("X[A]+K[B,N2]+P[B,N3]"));
}

TEST(ChainMTest, TwoIntermediariesMatchesChain2) {
  auto topo = build_chain(2, 100);
  auto a = run_chain_m(topo, 16, 9);
  auto b = run_chain2(topo, 16, 9);
  EXPECT_EQ(exprs(a), exprs(b));
  EXPECT_EQ(a.output_b, b.output_b);
}

TEST(ReachTTest, TableRows) {
  auto trace = run_reach_t(build_reach_t(3, 2, 100), 16, 5);
  ASSERT_EQ(trace.messages.size(), 4u);
  const std::vector<std::pair<std::string, std::string>> hops = {
      {"A", "N1"}, {"N1", "N2"}, {"N2", "N3"}, {"N3", "B"}};
  for (std::size_t i = 0; i < hops.size(); ++i) {
    EXPECT_EQ(trace.messages[i].sender.label(), hops[i].first);
    EXPECT_EQ(trace.messages[i].receiver.label(), hops[i].second);
  }
  EXPECT_EQ(exprs(trace), (std::vector<SymbolicExpr>{
                              E("X[A]+P[A,N1]+K[A,N2]+K[A,N3]"),
                              E("X[A]+K[A,N2]+K[A,N3]+K[N1,N3]+K[B,N1]"),
                              E("X[A]+K[A,N3]+K[N1,N3]+K[B,N1]+K[B,N2]"),
                              E("X[A]+K[B,N1]+K[B,N2]+P[B,N3]"),
                          }));
  EXPECT_EQ(trace.output_b, trace.keys.at(SecretId::nonce(Party::alice())));
}

TEST(MultipathTest, SinglePathOutputsItsNonce) {
  auto trace = run_multipath(build_multipath({3}, 100), 16, 2);
  ASSERT_EQ(trace.nonces().size(), 1u);
  EXPECT_EQ(trace.output_a, trace.keys.at(trace.nonces()[0]));
  EXPECT_TRUE(trace.outputs_agree());
}

TEST(MultipathTest, ThreePathsNineMessages) {
  auto trace = run_multipath(build_multipath({2, 2, 2}, 100), 16, 2);
  EXPECT_EQ(trace.messages.size(), 9u);
  EXPECT_EQ(trace.final_key(), E("X[1]+X[2]+X[3]"));
  EXPECT_EQ(trace.output_a, nonce_xor(trace));
  EXPECT_TRUE(trace.outputs_agree());
}

TEST(MultipathTest, RingAsTwoPathsMatchesRingV2) {
  const NonceAliases aliases = {SecretId::nonce(Party::alice()), SecretId::nonce(Party::bob())};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto mp = run_multipath(build_multipath({2, 2}, 100), 32, seed, &aliases);
    auto ring = run_ring_v2(build_ring6(100), 32, seed);
    EXPECT_EQ(mp.output_a, ring.output_a);
    EXPECT_EQ(mp.output_b, ring.output_b);
  }
}

TEST(PayloadTest, DeliversPayload) {
  auto topo = build_chain(3, 100);
  auto zero = send_message_as_payload(BitString::zeros(16), topo, 4);
  EXPECT_TRUE(zero.output_b.is_zero());

  auto z = BitString::from_bits("1011001110001111");
  auto trace = send_message_as_payload(z, topo, 4);
  EXPECT_EQ(trace.output_b, z);
  EXPECT_EQ(exprs(trace), exprs(run_chain_m(topo, 16, 4)));
}

TEST(ProtocolTest, ZeroLengthRejected) {
  EXPECT_THROW(run_chain_m(build_chain(3, 100), 0, 1), Error);
}

TEST(ProtocolTest, DeterministicTrace) {
  auto topo = build_reach_t(4, 2, 50);
  auto v = ProtocolVariant::default_for(topo);
  EXPECT_EQ(run_protocol(topo, v, 64, 17).to_text(), run_protocol(topo, v, 64, 17).to_text());
  EXPECT_EQ(run_protocol(topo, v, 64, 17).to_json(), run_protocol(topo, v, 64, 17).to_json());
}

TEST(ProtocolProperty, MessagesMatchSymbolicFormsAndNeighbours) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 2 + static_cast<int>(rng() % 5);
    std::vector<Topology> shapes = {build_chain(m, 100), build_ring6(100),
                                    build_multipath({m, 2}, 100)};
    if (m >= 3) shapes.push_back(build_reach_t(m, 2, 100));
    for (const auto& topo : shapes) {
      auto trace = run_protocol(topo, ProtocolVariant::default_for(topo), 1 + rng() % 64, rng());
      for (const auto& msg : trace.messages) {
        EXPECT_EQ(eval(msg.expr, trace.keys), msg.bits);
        EXPECT_TRUE(topo.adjacent(msg.sender, msg.receiver));
      }
      EXPECT_TRUE(trace.outputs_agree());
      EXPECT_EQ(trace.output_a, nonce_xor(trace));
    }
  }
}

TEST(ProtocolProperty, FinalKeyBitIsUniform) {
  auto topo = build_ring6(100);
  auto v = ProtocolVariant::parse("ring-v2", topo);
  int zeros = 0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    zeros += !run_protocol(topo, v, 1, static_cast<std::uint64_t>(s)).output_a.get(0);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / trials, 0.5, 0.05);
}

TEST(VariantTest, NamesRoundTrip) {
  auto ring = build_ring6(100);
  auto chain = build_chain(2, 100);
  auto reach = build_reach_t(3, 2, 100);
  auto mp = build_multipath({2, 3}, 100);
  EXPECT_EQ(ProtocolVariant::parse("ring-v1", ring).name(), "ring-v1");
  EXPECT_EQ(ProtocolVariant::parse("ring-v2", ring).name(), "ring-v2");
  EXPECT_EQ(ProtocolVariant::parse("chain2", chain).name(), "chain2");
  EXPECT_EQ(ProtocolVariant::parse("chain-m", chain).name(), "chain-m");
  EXPECT_EQ(ProtocolVariant::default_for(reach).name(), "reach-t");
  EXPECT_EQ(ProtocolVariant::default_for(mp).name(), "multipath");
  EXPECT_THROW(ProtocolVariant::parse("ring-v3", ring), Error);
}
