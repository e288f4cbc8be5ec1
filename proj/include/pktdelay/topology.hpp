#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pktdelay/error.hpp"
#include "pktdelay/maxflow.hpp"
#include "pktdelay/numeric.hpp"

namespace pktdelay {

/// Erasure probabilities within this distance of the maximum count as joint worst links.
inline constexpr double kWorstLinkTolerance = 1e-9;
inline constexpr double kWeightSumTolerance = 1e-12;
inline constexpr double kGroupMemberTolerance = 1e-9;

enum class TopologyKind { Line, ParallelPaths, General };

inline const char* to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::Line:
      return "line";
    case TopologyKind::ParallelPaths:
      return "parallel-paths";
    case TopologyKind::General:
      return "general";
  }
  return "general";
}

struct Link {
  std::string id;
  std::size_t src = 0;
  std::size_t dst = 0;
  double p = 0.0;
  Rational p_exact;

  double capacity() const { return 1.0 - p; }
};

/// Links of which at most one succeeds per slot. With probability 1 - base_p
/// exactly one member succeeds, member i being chosen with probability weights[i].
struct CorrelationGroup {
  std::vector<std::size_t> members;
  double base_p = 0.0;
  Rational base_p_exact;
  std::vector<double> weights;
  std::vector<Rational> weights_exact;
};

// Unvalidated topology as read from a file or assembled by a constructor.
// Exact values are optional; when absent the decimal reading of the double is used.
struct TopologySpec {
  struct LinkSpec {
    std::string id;
    std::string src;
    std::string dst;
    double p = 0.0;
    std::optional<Rational> p_exact;
  };
  struct GroupSpec {
    double base_p = 0.0;
    std::optional<Rational> base_p_exact;
    std::vector<std::string> members;
    std::vector<double> weights;
    std::vector<Rational> weights_exact;  // empty, or one per member
  };

  std::vector<std::string> nodes;
  std::vector<LinkSpec> links;
  std::vector<GroupSpec> groups;
  std::string source;
  std::string sink;
};

/// Validated, immutable erasure network.
class Topology {
 public:
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<CorrelationGroup>& groups() const { return groups_; }
  std::size_t source() const { return source_; }
  std::size_t sink() const { return sink_; }
  TopologyKind kind() const { return kind_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }

  /// Link chains source -> sink, one per path (line and parallel-paths kinds only).
  const std::vector<std::vector<std::size_t>>& paths() const { return paths_; }

  /// Group index of a link, if it belongs to one.
  std::optional<std::size_t> group_of(std::size_t link) const { return link_group_[link]; }

  std::size_t node_index(const std::string& id) const {
    auto it = node_lookup_.find(id);
    if (it == node_lookup_.end()) throw ConfigError("unknown node '" + id + "'");
    return it->second;
  }
  std::size_t link_index(const std::string& id) const {
    auto it = link_lookup_.find(id);
    if (it == link_lookup_.end()) throw ConfigError("unknown link '" + id + "'");
    return it->second;
  }

  bool is_path_kind() const { return kind_ != TopologyKind::General; }

 private:
  friend Topology validate_topology(const TopologySpec& spec);

  std::vector<std::string> nodes_;
  std::vector<Link> links_;
  std::vector<CorrelationGroup> groups_;
  std::vector<std::optional<std::size_t>> link_group_;
  std::map<std::string, std::size_t> node_lookup_;
  std::map<std::string, std::size_t> link_lookup_;
  std::size_t source_ = 0;
  std::size_t sink_ = 0;
  TopologyKind kind_ = TopologyKind::General;
  std::vector<std::vector<std::size_t>> paths_;
};

namespace detail {

inline void check_probability(double p, const std::string& what) {
  if (p == 1.0) throw ConfigError(what + ": link fails with probability 1");
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError(what + ": erasure probability must lie in [0, 1)");
}

// Follows chains out of the source; succeeds only if the whole graph is a
// union of node-disjoint source->sink chains.
inline std::optional<std::vector<std::vector<std::size_t>>> find_parallel_paths(
    std::size_t node_count, const std::vector<Link>& links, std::size_t source, std::size_t sink) {
  std::vector<std::vector<std::size_t>> out_links(node_count);
  std::vector<std::size_t> in_degree(node_count, 0);
  for (std::size_t l = 0; l < links.size(); ++l) {
    out_links[links[l].src].push_back(l);
    ++in_degree[links[l].dst];
  }
  if (in_degree[source] != 0 || !out_links[sink].empty()) return std::nullopt;
  for (std::size_t v = 0; v < node_count; ++v) {
    if (v == source || v == sink) continue;
    if (in_degree[v] != 1 || out_links[v].size() != 1) return std::nullopt;
  }
  std::vector<std::vector<std::size_t>> paths;
  std::vector<bool> link_used(links.size(), false);
  std::vector<bool> node_used(node_count, false);
  node_used[source] = node_used[sink] = true;
  for (std::size_t first : out_links[source]) {
    std::vector<std::size_t> chain;
    std::size_t l = first;
    while (true) {
      if (link_used[l]) return std::nullopt;
      link_used[l] = true;
      chain.push_back(l);
      const std::size_t v = links[l].dst;
      if (v == sink) break;
      if (node_used[v]) return std::nullopt;
      node_used[v] = true;
      l = out_links[v].front();
    }
    paths.push_back(std::move(chain));
  }
  if (paths.empty()) return std::nullopt;
  if (!std::all_of(link_used.begin(), link_used.end(), [](bool b) { return b; })) return std::nullopt;
  if (!std::all_of(node_used.begin(), node_used.end(), [](bool b) { return b; })) return std::nullopt;
  return paths;
}

}  // namespace detail

/// Checks every structural and probabilistic invariant and infers the kind tag.
inline Topology validate_topology(const TopologySpec& spec) {
  Topology t;
  if (spec.nodes.empty()) throw ConfigError("topology has no nodes");
  for (const auto& id : spec.nodes) {
    if (id.empty()) throw ConfigError("empty node id");
    if (!t.node_lookup_.emplace(id, t.nodes_.size()).second)
      throw ConfigError("duplicate node id '" + id + "'");
    t.nodes_.push_back(id);
  }
  auto node_of = [&](const std::string& id, const std::string& context) {
    auto it = t.node_lookup_.find(id);
    if (it == t.node_lookup_.end()) throw ConfigError(context + ": unknown node '" + id + "'");
    return it->second;
  };
  t.source_ = node_of(spec.source, "source");
  t.sink_ = node_of(spec.sink, "sink");
  if (t.source_ == t.sink_) throw ConfigError("source and sink must differ");

  for (const auto& ls : spec.links) {
    if (ls.id.empty()) throw ConfigError("empty link id");
    Link link;
    link.id = ls.id;
    link.src = node_of(ls.src, "link '" + ls.id + "'");
    link.dst = node_of(ls.dst, "link '" + ls.id + "'");
    if (link.src == link.dst) throw ConfigError("link '" + ls.id + "' is a self-loop");
    detail::check_probability(ls.p, "link '" + ls.id + "'");
    link.p = ls.p;
    link.p_exact = ls.p_exact ? *ls.p_exact : decimal_rational(ls.p);
    if (!t.link_lookup_.emplace(ls.id, t.links_.size()).second)
      throw ConfigError("duplicate link id '" + ls.id + "'");
    t.links_.push_back(std::move(link));
  }
  if (t.links_.empty()) throw ConfigError("topology has no links");

  t.link_group_.assign(t.links_.size(), std::nullopt);
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& gs = spec.groups[g];
    const std::string context = "group " + std::to_string(g);
    if (gs.members.empty()) throw ConfigError(context + ": no members");
    if (gs.weights.size() != gs.members.size())
      throw ConfigError(context + ": one weight per member required");
    if (!gs.weights_exact.empty() && gs.weights_exact.size() != gs.members.size())
      throw ConfigError(context + ": one exact weight per member required");
    detail::check_probability(gs.base_p, context + " base_p");
    CorrelationGroup group;
    group.base_p = gs.base_p;
    group.base_p_exact = gs.base_p_exact ? *gs.base_p_exact : decimal_rational(gs.base_p);
    double sum = 0.0;
    for (double w : gs.weights) {
      if (!(w > 0.0)) throw ConfigError(context + ": weights must be positive");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > kWeightSumTolerance) throw ConfigError(context + ": weights must sum to 1");
    for (std::size_t m = 0; m < gs.members.size(); ++m) {
      auto it = t.link_lookup_.find(gs.members[m]);
      if (it == t.link_lookup_.end())
        throw ConfigError(context + ": unknown link '" + gs.members[m] + "'");
      const std::size_t l = it->second;
      if (t.link_group_[l]) throw ConfigError("link '" + gs.members[m] + "' belongs to more than one group");
      t.link_group_[l] = g;
      const double expected = 1.0 - gs.weights[m] * (1.0 - gs.base_p);
      if (std::fabs(t.links_[l].p - expected) > kGroupMemberTolerance)
        throw ConfigError("link '" + gs.members[m] +
                          "': erasure probability inconsistent with its group's base_p and weight");
      group.members.push_back(l);
      group.weights.push_back(gs.weights[m]);
      group.weights_exact.push_back(gs.weights_exact.empty() ? decimal_rational(gs.weights[m])
                                                             : gs.weights_exact[m]);
    }
    t.groups_.push_back(std::move(group));
  }

  // Reachability of the sink.
  std::vector<std::vector<std::size_t>> out(t.nodes_.size());
  for (const auto& l : t.links_) out[l.src].push_back(l.dst);
  std::vector<bool> seen(t.nodes_.size(), false);
  std::vector<std::size_t> stack{t.source_};
  seen[t.source_] = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : out[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  if (!seen[t.sink_]) throw ConfigError("sink unreachable from source");

  if (auto paths = detail::find_parallel_paths(t.nodes_.size(), t.links_, t.source_, t.sink_)) {
    t.kind_ = paths->size() == 1 ? TopologyKind::Line : TopologyKind::ParallelPaths;
    t.paths_ = std::move(*paths);
  } else {
    t.kind_ = TopologyKind::General;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Constructors

/// Chain S -> N1 -> ... -> T with links L1..Lℓ.
inline TopologySpec line_spec(const std::vector<double>& p) {
  TopologySpec spec;
  spec.source = "S";
  spec.sink = "T";
  spec.nodes.push_back("S");
  for (std::size_t i = 1; i < p.size(); ++i) spec.nodes.push_back("N" + std::to_string(i));
  spec.nodes.push_back("T");
  for (std::size_t i = 0; i < p.size(); ++i) {
    spec.links.push_back({"L" + std::to_string(i + 1), spec.nodes[i], spec.nodes[i + 1], p[i], std::nullopt});
  }
  return spec;
}

inline Topology make_line(const std::vector<double>& p) { return validate_topology(line_spec(p)); }

/// k node-disjoint chains; path i hop j is link "L{i}_{j}" (1-based).
inline TopologySpec parallel_paths_spec(const std::vector<std::vector<double>>& paths) {
  TopologySpec spec;
  spec.source = "S";
  spec.sink = "T";
  spec.nodes = {"S", "T"};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::string prev = "S";
    for (std::size_t j = 0; j < paths[i].size(); ++j) {
      const bool last = j + 1 == paths[i].size();
      std::string next = last ? "T" : "N" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
      if (!last) spec.nodes.push_back(next);
      spec.links.push_back({"L" + std::to_string(i + 1) + "_" + std::to_string(j + 1), prev, next,
                            paths[i][j], std::nullopt});
      prev = next;
    }
  }
  return spec;
}

inline Topology make_parallel_paths(const std::vector<std::vector<double>>& paths) {
  return validate_topology(parallel_paths_spec(paths));
}

// ---------------------------------------------------------------------------
// Min cut

struct PathWorstLink {
  double worst_p = 0.0;
  std::size_t multiplicity = 0;
  bool unique() const { return multiplicity == 1; }
};

struct CutReport {
  Rational exact;
  double capacity = 0.0;
  /// One entry per path for line and parallel-paths topologies.
  std::vector<PathWorstLink> paths;
};

inline PathWorstLink worst_link(const std::vector<double>& p) {
  PathWorstLink out;
  if (p.empty()) return out;
  out.worst_p = *std::max_element(p.begin(), p.end());
  out.multiplicity = static_cast<std::size_t>(std::count_if(
      p.begin(), p.end(), [&](double x) { return out.worst_p - x <= kWorstLinkTolerance; }));
  return out;
}

inline CutReport min_cut_capacity(const Topology& t) {
  FlowNetwork<Rational> net(t.node_count());
  for (const auto& l : t.links()) net.add_edge(l.src, l.dst, Rational(1 - l.p_exact));
  CutReport report;
  report.exact = net.max_flow(t.source(), t.sink());
  report.capacity = to_double(report.exact);
  for (const auto& path : t.paths()) {
    std::vector<double> p;
    for (std::size_t l : path) p.push_back(t.links()[l].p);
    report.paths.push_back(worst_link(p));
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON file format

inline TopologySpec parse_topology_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("topology must be a JSON object");
    TopologySpec spec;
    for (const auto& n : j.at("nodes")) spec.nodes.push_back(n.get<std::string>());
    for (const auto& l : j.at("links")) {
      TopologySpec::LinkSpec ls;
      ls.id = l.at("id").get<std::string>();
      ls.src = l.at("src").get<std::string>();
      ls.dst = l.at("dst").get<std::string>();
      ls.p = l.at("p").get<double>();
      spec.links.push_back(std::move(ls));
    }
    if (j.contains("groups")) {
      for (const auto& g : j.at("groups")) {
        TopologySpec::GroupSpec gs;
        gs.base_p = g.at("base_p").get<double>();
        for (const auto& m : g.at("members")) gs.members.push_back(m.get<std::string>());
        for (const auto& w : g.at("weights")) gs.weights.push_back(w.get<double>());
        spec.groups.push_back(std::move(gs));
      }
    }
    spec.source = j.at("source").get<std::string>();
    spec.sink = j.at("sink").get<std::string>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed topology: ") + e.what());
  }
}

inline nlohmann::json to_json(const Topology& t) {
  nlohmann::json j;
  j["nodes"] = t.nodes();
  j["links"] = nlohmann::json::array();
  for (const auto& l : t.links()) {
    j["links"].push_back({{"id", l.id}, {"src", t.nodes()[l.src]}, {"dst", t.nodes()[l.dst]}, {"p", l.p}});
  }
  j["groups"] = nlohmann::json::array();
  for (const auto& g : t.groups()) {
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t l : g.members) members.push_back(t.links()[l].id);
    j["groups"].push_back({{"base_p", g.base_p}, {"members", members}, {"weights", g.weights}});
  }
  j["source"] = t.nodes()[t.source()];
  j["sink"] = t.nodes()[t.sink()];
  return j;
}

inline Topology parse_topology(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed topology: ") + e.what());
  }
  return validate_topology(parse_topology_json(j));
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_topology(buffer.str());
}

}  // namespace pktdelay
