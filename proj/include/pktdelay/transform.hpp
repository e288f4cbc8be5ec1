#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pktdelay/error.hpp"
#include "pktdelay/maxflow.hpp"
#include "pktdelay/numeric.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/trace.hpp"

namespace pktdelay {

enum class BottleneckStatus {
  Single,    // exhaustive cut enumeration found exactly one min cut
  Asserted,  // caller asserted a single min cut
  Multiple,  // several min cuts exist
  Unknown,   // too large to enumerate and no assertion given
};

inline const char* to_string(BottleneckStatus s) {
  switch (s) {
    case BottleneckStatus::Single:
      return "single";
    case BottleneckStatus::Asserted:
      return "asserted";
    case BottleneckStatus::Multiple:
      return "multiple";
    case BottleneckStatus::Unknown:
      return "unknown";
  }
  return "?";
}

struct FlowPath {
  Rational rate_exact;
  double rate = 0.0;
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> links;
};

struct FlowDecomposition {
  std::vector<FlowPath> flows;
  /// Flow indices per link (F_e) and per node (K_v).
  std::vector<std::vector<std::size_t>> edge_flows;
  std::vector<std::vector<std::size_t>> node_flows;
  Rational capacity_exact;
  double capacity = 0.0;
  BottleneckStatus bottleneck = BottleneckStatus::Unknown;
  /// Links of the min cut used for refinement; empty if not refined.
  std::vector<std::size_t> min_cut_links;
  /// True when non-cut links were left strictly unsaturated.
  bool refined = false;
};

struct DecomposeOptions {
  /// Used when the graph is too large to enumerate cuts.
  std::optional<bool> assume_single_bottleneck;
  std::size_t enumeration_link_limit = 20;
};

namespace detail {

inline std::vector<Rational> link_capacities(const Topology& t) {
  std::vector<Rational> c;
  for (const auto& l : t.links()) c.push_back(1 - l.p_exact);
  return c;
}

// Distinct link sets of minimum source-sink cuts, by trying every node
// partition. Capacities are scaled to a common integer denominator.
inline std::set<std::uint64_t> enumerate_min_cuts(const Topology& t, const std::vector<Rational>& cap,
                                                  const Rational& value) {
  BigInt lcm = 1;
  for (const auto& c : cap) mpz_lcm(lcm.get_mpz_t(), lcm.get_mpz_t(), c.get_den_mpz_t());
  std::vector<BigInt> scaled;
  for (const auto& c : cap) scaled.push_back(c.get_num() * (lcm / c.get_den()));
  const BigInt target_big = value.get_num() * (lcm / value.get_den());
  BigInt total = 0;
  for (const auto& s : scaled) total += s;
  const bool small = total.fits_slong_p();

  std::vector<std::size_t> inner;
  for (std::size_t v = 0; v < t.node_count(); ++v)
    if (v != t.source() && v != t.sink()) inner.push_back(v);
  std::set<std::uint64_t> cuts;
  std::vector<bool> side(t.node_count(), false);
  const std::uint64_t masks = std::uint64_t{1} << inner.size();
  for (std::uint64_t mask = 0; mask < masks; ++mask) {
    std::fill(side.begin(), side.end(), false);
    side[t.source()] = true;
    for (std::size_t b = 0; b < inner.size(); ++b) side[inner[b]] = (mask >> b) & 1;
    std::uint64_t edges = 0;
    long acc_small = 0;
    BigInt acc_big = 0;
    for (std::size_t l = 0; l < t.link_count(); ++l) {
      const auto& link = t.links()[l];
      if (side[link.src] && !side[link.dst]) {
        edges |= std::uint64_t{1} << l;
        if (small) {
          acc_small += scaled[l].get_si();
        } else {
          acc_big += scaled[l];
        }
      }
    }
    const bool is_min = small ? acc_small == target_big.get_si() : acc_big == target_big;
    if (is_min) cuts.insert(edges);
  }
  return cuts;
}

inline std::vector<Rational> solve_flow(const Topology& t, const std::vector<Rational>& cap, Rational& value) {
  FlowNetwork<Rational> net(t.node_count());
  for (std::size_t l = 0; l < t.link_count(); ++l) net.add_edge(t.links()[l].src, t.links()[l].dst, cap[l]);
  value = net.max_flow(t.source(), t.sink());
  std::vector<Rational> f;
  for (std::size_t l = 0; l < t.link_count(); ++l) f.push_back(net.flow(l));
  return f;
}

// Removes flow around directed cycles of the positive-flow subgraph.
inline void cancel_cycles(const Topology& t, std::vector<Rational>& flow) {
  while (true) {
    std::vector<int> color(t.node_count(), 0);
    std::vector<std::size_t> via(t.node_count(), 0);
    std::vector<std::size_t> cycle;
    std::vector<std::vector<std::size_t>> out(t.node_count());
    for (std::size_t l = 0; l < t.link_count(); ++l)
      if (flow[l] > 0) out[t.links()[l].src].push_back(l);
    // Iterative DFS; on a back edge, walk parents to recover the cycle.
    for (std::size_t root = 0; root < t.node_count() && cycle.empty(); ++root) {
      if (color[root]) continue;
      std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
      color[root] = 1;
      while (!stack.empty() && cycle.empty()) {
        auto& [u, next] = stack.back();
        if (next == out[u].size()) {
          color[u] = 2;
          stack.pop_back();
          continue;
        }
        const std::size_t l = out[u][next++];
        const std::size_t v = t.links()[l].dst;
        if (color[v] == 0) {
          color[v] = 1;
          via[v] = l;
          stack.push_back({v, 0});
        } else if (color[v] == 1) {
          cycle.push_back(l);
          for (std::size_t w = u; w != v; w = t.links()[via[w]].src) cycle.push_back(via[w]);
        }
      }
    }
    if (cycle.empty()) return;
    Rational least = flow[cycle[0]];
    for (std::size_t l : cycle) least = std::min(least, flow[l]);
    for (std::size_t l : cycle) flow[l] -= least;
  }
}

struct Candidate {
  Rational width;
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> links;
};

// Widest source-sink path of the positive-flow subgraph; ties broken by the
// lexicographic sequence of node ids, then link ids.
inline std::optional<Candidate> widest_path(const Topology& t, const std::vector<Rational>& flow) {
  std::vector<std::vector<std::size_t>> out(t.node_count());
  for (std::size_t l = 0; l < t.link_count(); ++l)
    if (flow[l] > 0) out[t.links()[l].src].push_back(l);
  std::optional<Candidate> best;
  auto names = [&](const Candidate& c) {
    std::vector<std::string> n;
    for (std::size_t v : c.nodes) n.push_back(t.nodes()[v]);
    return n;
  };
  auto link_names = [&](const Candidate& c) {
    std::vector<std::string> n;
    for (std::size_t l : c.links) n.push_back(t.links()[l].id);
    return n;
  };
  auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.width != b.width) return a.width > b.width;
    const auto na = names(a), nb = names(b);
    if (na != nb) return na < nb;
    return link_names(a) < link_names(b);
  };
  std::vector<bool> on_path(t.node_count(), false);
  Candidate cur;
  cur.nodes.push_back(t.source());
  on_path[t.source()] = true;
  auto dfs = [&](auto&& self, std::size_t u) -> void {
    if (u == t.sink()) {
      Candidate c = cur;
      c.width = flow[c.links[0]];
      for (std::size_t l : c.links) c.width = std::min(c.width, flow[l]);
      if (!best || better(c, *best)) best = std::move(c);
      return;
    }
    for (std::size_t l : out[u]) {
      const std::size_t v = t.links()[l].dst;
      if (on_path[v]) continue;
      on_path[v] = true;
      cur.nodes.push_back(v);
      cur.links.push_back(l);
      self(self, v);
      cur.nodes.pop_back();
      cur.links.pop_back();
      on_path[v] = false;
    }
  };
  dfs(dfs, t.source());
  return best;
}

}  // namespace detail

/// Max flow on capacities 1 - p_e, split into source-sink paths. For a
/// single-bottleneck network the flow is first recomputed with every non-cut
/// link scaled by (1 - η), halving η until the full capacity still passes, so
/// that only min-cut links are saturated and each path's worst split link
/// lies on the cut.
inline FlowDecomposition decompose_max_flow(const Topology& t, const DecomposeOptions& options = {}) {
  const auto cap = detail::link_capacities(t);
  FlowDecomposition d;
  std::vector<Rational> flow = detail::solve_flow(t, cap, d.capacity_exact);
  if (d.capacity_exact == 0) throw ConfigError("zero capacity");
  d.capacity = to_double(d.capacity_exact);

  std::optional<std::uint64_t> cut;
  if (t.link_count() <= std::min<std::size_t>(options.enumeration_link_limit, 63) && t.node_count() <= 24) {
    const auto cuts = detail::enumerate_min_cuts(t, cap, d.capacity_exact);
    if (cuts.size() == 1) {
      d.bottleneck = BottleneckStatus::Single;
      cut = *cuts.begin();
    } else {
      d.bottleneck = BottleneckStatus::Multiple;
    }
  } else if (options.assume_single_bottleneck) {
    d.bottleneck = *options.assume_single_bottleneck ? BottleneckStatus::Asserted : BottleneckStatus::Multiple;
    if (*options.assume_single_bottleneck) {
      FlowNetwork<Rational> net(t.node_count());
      for (std::size_t l = 0; l < t.link_count(); ++l) net.add_edge(t.links()[l].src, t.links()[l].dst, cap[l]);
      net.max_flow(t.source(), t.sink());
      const auto reach = net.residual_reachable(t.source());
      std::uint64_t edges = 0;
      for (std::size_t l = 0; l < t.link_count() && l < 64; ++l)
        if (reach[t.links()[l].src] && !reach[t.links()[l].dst]) edges |= std::uint64_t{1} << l;
      if (t.link_count() <= 64) cut = edges;
    }
  }

  if (cut) {
    std::vector<bool> in_cut(t.link_count(), false);
    for (std::size_t l = 0; l < t.link_count(); ++l) {
      if ((*cut >> l) & 1) {
        in_cut[l] = true;
        d.min_cut_links.push_back(l);
      }
    }
    Rational eta(1, 2);
    for (int attempt = 0; attempt < 64 && !d.refined; ++attempt, eta /= 2) {
      std::vector<Rational> scaled = cap;
      for (std::size_t l = 0; l < t.link_count(); ++l)
        if (!in_cut[l]) scaled[l] *= 1 - eta;
      Rational value;
      auto f = detail::solve_flow(t, scaled, value);
      if (value == d.capacity_exact) {
        flow = std::move(f);
        d.refined = true;
      }
    }
    if (!d.refined) d.min_cut_links.clear();
  }

  detail::cancel_cycles(t, flow);
  while (auto path = detail::widest_path(t, flow)) {
    for (std::size_t l : path->links) flow[l] -= path->width;
    FlowPath fp;
    fp.rate_exact = path->width;
    fp.rate = to_double(path->width);
    fp.nodes = std::move(path->nodes);
    fp.links = std::move(path->links);
    d.flows.push_back(std::move(fp));
  }

  d.edge_flows.assign(t.link_count(), {});
  d.node_flows.assign(t.node_count(), {});
  for (std::size_t f = 0; f < d.flows.size(); ++f) {
    for (std::size_t l : d.flows[f].links) d.edge_flows[l].push_back(f);
    for (std::size_t v : d.flows[f].nodes) d.node_flows[v].push_back(f);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Parallel-path network with correlated split links

struct GhatNetwork {
  Topology topology;
  /// For every link of the new network: the original link and the flow it serves.
  std::vector<std::size_t> origin_link;
  std::vector<std::size_t> flow_index;
  /// Original link -> its split links, in flow order.
  std::vector<std::vector<std::size_t>> splits;
};

inline std::string copy_id(const std::string& id, std::size_t flow) { return id + "@f" + std::to_string(flow + 1); }

/// One chain per flow. Every node on a flow gets its own copy (source and
/// sink are shared); every link e on flow f becomes a split link with
/// p = 1 - (λ_f / Σ_{w ∈ F_e} λ_w)(1 - p_e). The split links of one
/// original link form a correlation group with base_p = p_e.
inline GhatNetwork build_ghat(const Topology& t, const FlowDecomposition& d) {
  if (d.flows.empty()) throw ConfigError("decomposition has no flows");
  TopologySpec spec;
  const std::string& src = t.nodes()[t.source()];
  const std::string& dst = t.nodes()[t.sink()];
  spec.source = src;
  spec.sink = dst;
  spec.nodes = {src, dst};
  auto node_name = [&](std::size_t v, std::size_t f) {
    if (v == t.source()) return src;
    if (v == t.sink()) return dst;
    return copy_id(t.nodes()[v], f);
  };

  std::vector<Rational> load(t.link_count(), 0);
  for (const auto& fp : d.flows)
    for (std::size_t l : fp.links) load[l] += fp.rate_exact;

  GhatNetwork g;
  g.splits.assign(t.link_count(), {});
  std::vector<std::vector<Rational>> split_weights(t.link_count());
  for (std::size_t f = 0; f < d.flows.size(); ++f) {
    const auto& fp = d.flows[f];
    for (std::size_t k = 1; k + 1 < fp.nodes.size(); ++k) spec.nodes.push_back(node_name(fp.nodes[k], f));
    for (std::size_t k = 0; k < fp.links.size(); ++k) {
      const std::size_t l = fp.links[k];
      const auto& link = t.links()[l];
      const Rational h = fp.rate_exact / load[l];
      const Rational p_hat = 1 - h * (1 - link.p_exact);
      TopologySpec::LinkSpec ls;
      ls.id = copy_id(link.id, f);
      ls.src = node_name(fp.nodes[k], f);
      ls.dst = node_name(fp.nodes[k + 1], f);
      ls.p = to_double(p_hat);
      ls.p_exact = p_hat;
      g.splits[l].push_back(spec.links.size());
      split_weights[l].push_back(h);
      g.origin_link.push_back(l);
      g.flow_index.push_back(f);
      spec.links.push_back(std::move(ls));
    }
  }
  for (std::size_t l = 0; l < t.link_count(); ++l) {
    if (g.splits[l].empty()) continue;
    TopologySpec::GroupSpec gs;
    gs.base_p = t.links()[l].p;
    gs.base_p_exact = t.links()[l].p_exact;
    for (std::size_t k = 0; k < g.splits[l].size(); ++k) {
      gs.members.push_back(spec.links[g.splits[l][k]].id);
      gs.weights.push_back(to_double(split_weights[l][k]));
      gs.weights_exact.push_back(split_weights[l][k]);
    }
    spec.groups.push_back(std::move(gs));
  }
  g.topology = validate_topology(spec);
  return g;
}

/// Ĝ outcomes derived from G outcomes: a success of an original link is
/// handed to one of its split links by a categorical draw over the group
/// weights; all other split links fail in that slot.
class CoupledSlotSource final : public SlotSource {
 public:
  CoupledSlotSource(const Topology& original, const GhatNetwork& ghat, std::shared_ptr<const SlotSource> base,
                    TraceProvenance provenance)
      : base_(std::move(base)), provenance_(provenance), links_(ghat.topology.link_count()),
        original_links_(original.link_count()) {
    for (std::size_t l = 0; l < original.link_count(); ++l) {
      if (ghat.splits[l].empty()) continue;
      Split s;
      s.original = l;
      s.key = fnv1a64("couple:" + original.links()[l].id);
      s.members = ghat.splits[l];
      const auto g = ghat.topology.group_of(s.members.front());
      s.weights = ghat.topology.groups()[*g].weights;
      splits_.push_back(std::move(s));
    }
  }

  std::size_t link_count() const override { return links_; }

  void fill(std::uint64_t slot, std::span<std::uint8_t> row) const override {
    std::vector<std::uint8_t> base_row(original_links_);
    base_->fill(slot, base_row);
    std::fill(row.begin(), row.end(), 0);
    for (const auto& s : splits_) {
      if (!base_row[s.original]) continue;
      const double u = counter_uniform(provenance_.master_seed, provenance_.trial, slot, s.key);
      row[s.members[categorical_pick(u, s.weights)]] = 1;
    }
  }

 private:
  struct Split {
    std::size_t original;
    std::uint64_t key;
    std::vector<std::size_t> members;
    std::vector<double> weights;
  };
  std::shared_ptr<const SlotSource> base_;
  TraceProvenance provenance_;
  std::size_t links_;
  std::size_t original_links_;
  std::vector<Split> splits_;
};

inline ErasureTrace couple_trace(const Topology& original, const GhatNetwork& ghat, const ErasureTrace& g_trace) {
  auto source =
      std::make_shared<CoupledSlotSource>(original, ghat, g_trace.slot_source(), g_trace.provenance());
  return ErasureTrace(source, g_trace.provenance(), std::max<std::uint64_t>(g_trace.horizon(), 1));
}

}  // namespace pktdelay
