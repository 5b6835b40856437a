#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tfrelay/config.hpp"
#include "tfrelay/secrets.hpp"

namespace tfrelay {

enum class Shape { Ring6, Chain, Multipath, ReachT };

std::string shape_name(Shape shape);
Shape parse_shape(std::string_view name);

enum class Role { EndpointA, EndpointB, Intermediary };

struct NodeId {
  Party party;
  Role role;
  int chain_position;  // 0 = Alice, m+1 = Bob within its path
  int path_index;      // 0 for single-path shapes, 1-based otherwise

  std::string label() const { return party.label(); }
};

struct Link {
  Party a;
  Party b;
  double length_km;
};

enum class Mechanism { P2p, Tf };

struct ReachablePair {
  Party a;  // lower chain position
  Party b;
  Mechanism mechanism;
  std::optional<Party> relay;  // set for TF pairs
  int path_index;

  bool operator==(const ReachablePair&) const = default;
};

// One of the four network shapes. Every shape is a set of chains from Alice
// to Bob that share nothing but the endpoints; the ring is two chains of two.
class Topology {
 public:
  Shape shape() const { return shape_; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  double link_length_km() const { return link_km_; }
  int reach() const { return reach_; }

  // Each path lists its nodes from Alice (position 0) to Bob.
  const std::vector<std::vector<Party>>& paths() const { return paths_; }
  std::size_t path_count() const { return paths_.size(); }
  std::vector<int> path_lengths() const;
  // Intermediaries on the first path; the `m` of single-path shapes.
  int m() const { return static_cast<int>(paths_.front().size()) - 2; }

  bool contains(Party p) const;
  const NodeId& node(Party p) const;
  std::vector<Party> intermediaries() const;
  std::vector<Party> neighbors(Party p) const;
  bool adjacent(Party a, Party b) const;

  // Canonical key=value description; parse(emit(t)) reproduces t.
  Config to_config() const;
  static Topology from_config(const Config& config);

 private:
  friend Topology build_ring6(double);
  friend Topology build_chain(int, double);
  friend Topology build_multipath(const std::vector<int>&, double);
  friend Topology build_reach_t(int, int, double);
  friend Topology build_multipath_reach(const std::vector<int>&, int, double);

  static Topology from_paths(Shape shape, const std::vector<int>& lengths, int reach,
                             double link_km);

  Shape shape_ = Shape::Chain;
  std::vector<NodeId> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<Party>> paths_;
  double link_km_ = 0;
  int reach_ = 1;
};

Topology build_ring6(double link_length_km);
Topology build_chain(int m, double link_length_km);
Topology build_multipath(const std::vector<int>& path_lengths, double link_length_km);
Topology build_reach_t(int m, int t, double link_length_km);
// Multipath whose per-path forwarding uses t-reach key sets.
Topology build_multipath_reach(const std::vector<int>& path_lengths, int t,
                               double link_length_km);

// Key-establishment opportunities. P2P for every link touching an endpoint;
// TF between same-path nodes at chain distance 2..t+1 (clamped to the path)
// for t-reach shapes, exactly 2 otherwise. TF relay is the midpoint node,
// lower position on ties.
std::vector<ReachablePair> qkd_reachable_pairs(const Topology& topo, int t);
std::vector<ReachablePair> qkd_reachable_pairs(const Topology& topo);

}  // namespace tfrelay
