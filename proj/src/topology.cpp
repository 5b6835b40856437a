#include "tfrelay/topology.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tfrelay {

std::string shape_name(Shape shape) {
  switch (shape) {
    case Shape::Ring6: return "ring6";
    case Shape::Chain: return "chain";
    case Shape::Multipath: return "multipath";
    case Shape::ReachT: return "reach_t";
  }
  return {};
}

Shape parse_shape(std::string_view name) {
  if (name == "ring6") return Shape::Ring6;
  if (name == "chain") return Shape::Chain;
  if (name == "multipath") return Shape::Multipath;
  if (name == "reach_t" || name == "reach-t") return Shape::ReachT;
  throw Error(ErrorCode::Parse, "unknown shape '" + std::string(name) + "'");
}

Topology Topology::from_paths(Shape shape, const std::vector<int>& lengths, int reach,
                              double link_km) {
  if (!(link_km > 0) || !std::isfinite(link_km)) {
    throw Error(ErrorCode::Precondition, "link length must be a positive number of km");
  }
  if (lengths.empty()) throw Error(ErrorCode::Precondition, "at least one path is required");
  for (int m : lengths) {
    if (m < 2) {
      throw Error(ErrorCode::Precondition,
                  "every path needs at least 2 intermediaries (got " + std::to_string(m) + ")");
    }
  }

  Topology topo;
  topo.shape_ = shape;
  topo.link_km_ = link_km;
  topo.reach_ = reach;
  const bool multi = lengths.size() > 1 || shape == Shape::Multipath;

  topo.nodes_.push_back({Party::alice(), Role::EndpointA, 0, 0});
  topo.nodes_.push_back({Party::bob(), Role::EndpointB, lengths.front() + 1, 0});
  int next_relay = 1;
  for (std::size_t p = 0; p < lengths.size(); ++p) {
    int path_index = multi ? static_cast<int>(p) + 1 : 0;
    std::vector<Party> path{Party::alice()};
    for (int pos = 1; pos <= lengths[p]; ++pos) {
      Party relay = Party::relay(next_relay++);
      topo.nodes_.push_back({relay, Role::Intermediary, pos, path_index});
      path.push_back(relay);
    }
    path.push_back(Party::bob());
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      topo.links_.push_back({path[i], path[i + 1], link_km});
    }
    topo.paths_.push_back(std::move(path));
  }
  return topo;
}

Topology build_ring6(double link_length_km) {
  return Topology::from_paths(Shape::Ring6, {2, 2}, 1, link_length_km);
}

Topology build_chain(int m, double link_length_km) {
  return Topology::from_paths(Shape::Chain, {m}, 1, link_length_km);
}

Topology build_multipath(const std::vector<int>& path_lengths, double link_length_km) {
  return Topology::from_paths(Shape::Multipath, path_lengths, 1, link_length_km);
}

Topology build_reach_t(int m, int t, double link_length_km) {
  if (t < 2) throw Error(ErrorCode::Precondition, "t-reach requires t >= 2");
  return Topology::from_paths(Shape::ReachT, {m}, t, link_length_km);
}

Topology build_multipath_reach(const std::vector<int>& path_lengths, int t,
                               double link_length_km) {
  if (t < 1) throw Error(ErrorCode::Precondition, "reach t must be >= 1");
  return Topology::from_paths(Shape::Multipath, path_lengths, t, link_length_km);
}

std::vector<int> Topology::path_lengths() const {
  std::vector<int> out;
  for (const auto& path : paths_) out.push_back(static_cast<int>(path.size()) - 2);
  return out;
}

bool Topology::contains(Party p) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const NodeId& n) { return n.party == p; });
}

const NodeId& Topology::node(Party p) const {
  for (const auto& n : nodes_) {
    if (n.party == p) return n;
  }
  throw Error(ErrorCode::InvalidArgument, "node " + p.label() + " is not in the topology");
}

std::vector<Party> Topology::intermediaries() const {
  std::vector<Party> out;
  for (const auto& n : nodes_) {
    if (n.role == Role::Intermediary) out.push_back(n.party);
  }
  return out;
}

std::vector<Party> Topology::neighbors(Party p) const {
  std::vector<Party> out;
  for (const auto& link : links_) {
    if (link.a == p) out.push_back(link.b);
    if (link.b == p) out.push_back(link.a);
  }
  return out;
}

bool Topology::adjacent(Party a, Party b) const {
  return std::any_of(links_.begin(), links_.end(), [&](const Link& l) {
    return (l.a == a && l.b == b) || (l.a == b && l.b == a);
  });
}

Config Topology::to_config() const {
  Config config;
  config.set("shape", shape_name(shape_));
  switch (shape_) {
    case Shape::Ring6:
      break;
    case Shape::Chain:
      config.set("m", std::to_string(m()));
      break;
    case Shape::ReachT:
      config.set("m", std::to_string(m()));
      config.set("t", std::to_string(reach_));
      break;
    case Shape::Multipath:
      config.set("paths", join_ints(path_lengths()));
      if (reach_ > 1) config.set("t", std::to_string(reach_));
      break;
  }
  config.set("link_length_km", format_double(link_km_));
  return config;
}

Topology Topology::from_config(const Config& config) {
  Shape shape = parse_shape(config.require("shape"));
  double link_km = config.get_double("link_length_km").value_or(100.0);
  auto require_int = [&](std::string_view key) {
    auto v = config.get_int(key);
    if (!v) {
      throw Error(ErrorCode::Parse,
                  "shape " + shape_name(shape) + " requires '" + std::string(key) + "'");
    }
    return static_cast<int>(*v);
  };
  switch (shape) {
    case Shape::Ring6:
      return build_ring6(link_km);
    case Shape::Chain:
      return build_chain(require_int("m"), link_km);
    case Shape::ReachT:
      return build_reach_t(require_int("m"), require_int("t"), link_km);
    case Shape::Multipath: {
      auto paths = config.get_int_list("paths");
      if (!paths) throw Error(ErrorCode::Parse, "shape multipath requires 'paths'");
      int t = static_cast<int>(config.get_int("t").value_or(1));
      return build_multipath_reach(*paths, t, link_km);
    }
  }
  throw Error(ErrorCode::Parse, "unhandled shape");
}

std::vector<ReachablePair> qkd_reachable_pairs(const Topology& topo, int t) {
  if (t < 1) throw Error(ErrorCode::Precondition, "reach t must be >= 1");
  const bool extended = topo.shape() == Shape::ReachT || topo.shape() == Shape::Multipath;
  const int max_distance = extended ? t + 1 : 2;

  std::vector<ReachablePair> out;
  std::set<std::pair<Party, Party>> seen;
  for (std::size_t p = 0; p < topo.paths().size(); ++p) {
    const auto& path = topo.paths()[p];
    const int last = static_cast<int>(path.size()) - 1;
    const int path_index = topo.node(path[1]).path_index;
    for (int i = 0; i <= last; ++i) {
      for (int j = i + 1; j <= last; ++j) {
        const int d = j - i;
        std::optional<ReachablePair> pair;
        if (d == 1 && (i == 0 || j == last)) {
          pair = ReachablePair{path[i], path[j], Mechanism::P2p, std::nullopt, path_index};
        } else if (d >= 2 && d <= max_distance) {
          pair = ReachablePair{path[i], path[j], Mechanism::Tf, path[(i + j) / 2], path_index};
        }
        if (pair && seen.insert({std::min(pair->a, pair->b), std::max(pair->a, pair->b)}).second) {
          out.push_back(*pair);
        }
      }
    }
  }
  return out;
}

std::vector<ReachablePair> qkd_reachable_pairs(const Topology& topo) {
  return qkd_reachable_pairs(topo, topo.reach());
}

}  // namespace tfrelay
