#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "tfrelay/keyplan.hpp"

using namespace tfrelay;

namespace {

const Party A = Party::alice();
const Party B = Party::bob();
Party N(int k) { return Party::relay(k); }

std::set<std::string> names(const std::vector<SecretId>& ids) {
  std::set<std::string> out;
  for (const auto& id : ids) out.insert(id.name());
  return out;
}

struct Case {
  Topology topo;
  ProtocolVariant variant;
};

std::vector<Case> every_variant() {
  std::vector<Case> out;
  auto ring = build_ring6(100);
  out.push_back({ring, ProtocolVariant::parse("ring-v1", ring)});
  out.push_back({ring, ProtocolVariant::parse("ring-v2", ring)});
  auto c2 = build_chain(2, 100);
  out.push_back({c2, ProtocolVariant::parse("chain2", c2)});
  for (int m = 2; m <= 7; ++m) {
    auto c = build_chain(m, 100);
    out.push_back({c, ProtocolVariant::parse("chain-m", c)});
  }
  for (int m = 3; m <= 6; ++m) {
    for (int t = 2; t <= 3; ++t) {
      auto r = build_reach_t(m, t, 100);
      out.push_back({r, ProtocolVariant::default_for(r)});
    }
  }
  for (const auto& lengths : std::vector<std::vector<int>>{{2}, {2, 2}, {2, 3, 4}}) {
    auto mp = build_multipath(lengths, 100);
    out.push_back({mp, ProtocolVariant::default_for(mp)});
  }
  return out;
}

}  // namespace

TEST(PlanKeysTest, RingV2) {
  auto ring = build_ring6(100);
  auto plan = plan_keys(ring, ProtocolVariant::parse("ring-v2", ring));
  EXPECT_EQ(names(plan.secrets()),
            (std::set<std::string>{"K[A,N2]", "K[A,N4]", "K[B,N1]", "K[B,N3]", "P[A,N1]",
                                   "P[A,N3]", "P[B,N2]", "P[B,N4]"}));
}

TEST(PlanKeysTest, RingV1HasOnlyTfKeys) {
  auto ring = build_ring6(100);
  auto plan = plan_keys(ring, ProtocolVariant::parse("ring-v1", ring));
  EXPECT_EQ(names(plan.secrets()),
            (std::set<std::string>{"K[A,N2]", "K[A,N4]", "K[B,N1]", "K[B,N3]"}));
  for (const auto& e : plan.entries) EXPECT_EQ(e.mechanism, Mechanism::Tf);
}

TEST(PlanKeysTest, ReachTwoChainThree) {
  auto topo = build_reach_t(3, 2, 100);
  auto plan = plan_keys(topo, ProtocolVariant::default_for(topo));
  EXPECT_EQ(names(plan.secrets()),
            (std::set<std::string>{"P[A,N1]", "K[A,N2]", "K[A,N3]", "K[N1,N3]", "K[B,N1]",
                                   "K[B,N2]", "P[B,N3]"}));
}

TEST(PlanKeysTest, ChainFiveCount) {
  // m TF keys K[i,i+2] for i = 0..m-1 plus the two endpoint P2P keys
  auto topo = build_chain(5, 100);
  auto plan = plan_keys(topo, ProtocolVariant::parse("chain-m", topo));
  EXPECT_EQ(plan.entries.size(), 7u);
  EXPECT_EQ(names(plan.secrets()),
            (std::set<std::string>{"K[A,N2]", "K[N1,N3]", "K[N2,N4]", "K[N3,N5]", "K[B,N4]",
                                   "P[A,N1]", "P[B,N5]"}));
}

TEST(PlanKeysTest, IncompatibleVariantRejected) {
  auto chain = build_chain(3, 100);
  auto ring = build_ring6(100);
  EXPECT_THROW(plan_keys(chain, ProtocolVariant::parse("ring-v2", ring)), Error);
}

TEST(EstablishTest, CountsAndDeterminism) {
  auto ring = build_ring6(100);
  auto plan = plan_keys(ring, ProtocolVariant::parse("ring-v2", ring));
  auto store = establish(plan, 16, 4);
  EXPECT_EQ(store.size(), 8u);
  for (const auto& [id, value] : store.entries()) EXPECT_EQ(value.size(), 16u);
  EXPECT_EQ(store, establish(plan, 16, 4));
}

TEST(CmReportTest, RingV2Roles) {
  auto ring = build_ring6(100);
  auto report = cm_report(plan_keys(ring, ProtocolVariant::parse("ring-v2", ring)));
  EXPECT_EQ(report.at(A), (NodeHardware{true, false}));
  EXPECT_EQ(report.at(B), (NodeHardware{true, false}));
  EXPECT_EQ(report.at(N(1)), (NodeHardware{true, true}));
}

TEST(CmReportTest, EmptyPlan) {
  auto report = cm_report(KeyPlan{});
  EXPECT_EQ(report.at(A), NodeHardware{});
  EXPECT_EQ(report.at(N(1)), NodeHardware{});
}

TEST(CmReportTest, EndpointMeasuringRejected) {
  KeyPlan plan;
  plan.entries.push_back(
      {SecretId::p2p_key(A, N(1)), Mechanism::P2p, std::nullopt, N(1), A});
  EXPECT_THROW(cm_report(plan), Error);
}

TEST(KeyOracleTest, RoundTripAndSlice) {
  auto topo = build_chain(3, 100);
  auto plan = plan_keys(topo, ProtocolVariant::parse("chain-m", topo));
  auto store = establish(plan, 24, 8);
  auto text = format_key_oracle(store);
  EXPECT_EQ(parse_key_oracle(text, 24), store);

  auto slice = parse_key_oracle(text, 24, N(2), &topo);
  EXPECT_EQ(names([&] {
              std::vector<SecretId> ids;
              for (const auto& [id, v] : slice.entries()) ids.push_back(id);
              return ids;
            }()),
            (std::set<std::string>{"K[A,N2]", "K[B,N2]"}));
}

TEST(KeyOracleTest, RejectsUnknownIds) {
  auto topo = build_chain(2, 100);
  EXPECT_THROW(parse_key_oracle("Z[A,N1]\tff\n", 8), Error);
  EXPECT_THROW(parse_key_oracle("K[A,N7]\tff\n", 8, std::nullopt, &topo), Error);
  EXPECT_THROW(parse_key_oracle("K[A,N2]\tfff\n", 8), Error);
}

TEST(KeyPlanProperty, PlanMatchesScheduleAndSenderRule) {
  for (const auto& c : every_variant()) {
    SCOPED_TRACE(c.variant.name() + " " + c.topo.to_config().emit());
    auto plan = plan_keys(c.topo, c.variant);
    auto schedule = build_schedule(c.topo, c.variant);
    EXPECT_EQ(names(plan.secrets()), names(schedule.keys()));
    EXPECT_EQ(plan.secrets().size(), schedule.keys().size());

    for (const auto& e : plan.entries) {
      EXPECT_FALSE(e.measurer.is_endpoint());
      if (e.mechanism == Mechanism::Tf) {
        ASSERT_TRUE(e.relay.has_value());
        EXPECT_EQ(e.measurer, *e.relay);
        EXPECT_FALSE(e.secret.involves(*e.relay));
      }
    }
    auto report = cm_report(plan);
    EXPECT_FALSE(report.at(A).needs_measurement);
    EXPECT_FALSE(report.at(B).needs_measurement);
  }
}
