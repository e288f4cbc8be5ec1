#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pktdelay/error.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/trace.hpp"

namespace pktdelay {

// Slot semantics shared by every engine: all links act on the start-of-slot
// state simultaneously and updates commit at the end of the slot, so a packet
// received in slot t is first transmittable in slot t + 1.

enum class Strategy { CodingQueue, CodingMaxflow, Routing };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::CodingQueue:
      return "coding-queue";
    case Strategy::CodingMaxflow:
      return "coding-maxflow";
    case Strategy::Routing:
      return "routing";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& name) {
  if (name == "coding-queue") return Strategy::CodingQueue;
  if (name == "coding-maxflow") return Strategy::CodingMaxflow;
  if (name == "routing") return Strategy::Routing;
  throw ConfigError("unknown strategy '" + name + "'");
}

inline bool is_coding(Strategy s) { return s != Strategy::Routing; }

/// Per-node counts after each slot; entry 0 is the initial state.
using RankHistory = std::vector<std::vector<std::int64_t>>;

struct SimOutcome {
  std::uint64_t completion_slot = 0;
  Strategy strategy = Strategy::CodingQueue;
  std::optional<RankHistory> history;
  /// Largest intermediate buffer seen (routing only; diagnostic).
  std::int64_t peak_buffer = 0;
};

inline constexpr std::uint64_t kMaxSimulatedSlots = 1ULL << 32;

namespace detail {

inline void require_path_kind(const Topology& t, const char* what) {
  if (!t.is_path_kind()) throw ConfigError(std::string(what) + " requires a line or parallel-paths topology");
}

inline void require_packets(std::int64_t n) {
  if (n < 0) throw ConfigError("packet count must be non-negative");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Queue-rank coding engine

/// Innovative-packet ranks along every path of a line or parallel-paths
/// network. Along a chain the subspace of each node contains that of its
/// successor, so a successful link u -> v is innovative iff rank(u) > rank(v).
/// At the sink, path i contributes its own delivered count d_i and the sink
/// rank is the sum of those, which stays exact until it reaches the block size.
class PathRankState {
 public:
  PathRankState(const Topology& t, std::int64_t source_rank)
      : paths_(t.paths()), source_rank_(source_rank), node_of_(t.paths().size()) {
    detail::require_path_kind(t, "queue-rank engine");
    for (std::size_t i = 0; i < paths_.size(); ++i) {
      ranks_.emplace_back(paths_[i].size() + 1, 0);
      ranks_[i][0] = source_rank;
      for (std::size_t l : paths_[i]) node_of_[i].push_back(t.links()[l].dst);
    }
    node_count_ = t.node_count();
    source_ = t.source();
    sink_ = t.sink();
  }

  void step(std::span<const std::uint8_t> row) {
    for (std::size_t i = 0; i < paths_.size(); ++i) {
      auto& r = ranks_[i];
      // Descending hop order reads every upstream rank before it can change.
      for (std::size_t j = paths_[i].size(); j >= 1; --j) {
        if (row[paths_[i][j - 1]] && r[j - 1] > r[j]) ++r[j];
      }
    }
  }

  /// Ranks along path `i`: entry 0 is the source, the last entry is the
  /// count delivered to the sink over this path. Must be non-increasing.
  const std::vector<std::int64_t>& ranks(std::size_t i) const { return ranks_[i]; }

  void set_ranks(std::size_t i, std::vector<std::int64_t> r) {
    if (r.size() != ranks_[i].size()) throw ConfigError("rank vector has wrong length");
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] < 0 || (j > 0 && r[j] > r[j - 1])) throw ConfigError("ranks must be non-negative and non-increasing");
    }
    ranks_[i] = std::move(r);
  }

  std::int64_t sink_rank() const {
    std::int64_t s = 0;
    for (const auto& r : ranks_) s += r.back();
    return s;
  }

  /// Rank per node id; the sink entry is the summed delivered rank.
  std::vector<std::int64_t> node_ranks() const {
    std::vector<std::int64_t> out(node_count_, 0);
    out[source_] = source_rank_;
    for (std::size_t i = 0; i < paths_.size(); ++i) {
      for (std::size_t j = 0; j + 1 < paths_[i].size(); ++j) out[node_of_[i][j]] = ranks_[i][j + 1];
    }
    out[sink_] = sink_rank();
    return out;
  }

  /// Rank differences along path `i`: packets at each node innovative for its successor.
  std::vector<std::int64_t> rank_differences(std::size_t i) const {
    std::vector<std::int64_t> out;
    for (std::size_t j = 1; j + 1 < ranks_[i].size(); ++j) out.push_back(ranks_[i][j] - ranks_[i][j + 1]);
    return out;
  }

 private:
  std::vector<std::vector<std::size_t>> paths_;
  std::int64_t source_rank_;
  std::vector<std::vector<std::size_t>> node_of_;
  std::vector<std::vector<std::int64_t>> ranks_;
  std::size_t node_count_ = 0;
  std::size_t source_ = 0;
  std::size_t sink_ = 0;
};

inline SimOutcome simulate_coding_queue(const Topology& t, std::int64_t n, ErasureTrace& trace,
                                        bool record_history = false) {
  detail::require_packets(n);
  detail::require_path_kind(t, "simulate_coding_queue");
  SimOutcome out;
  out.strategy = Strategy::CodingQueue;
  PathRankState state(t, n);
  if (record_history) out.history = RankHistory{state.node_ranks()};
  if (n == 0) return out;
  for (std::uint64_t slot = 1; slot < kMaxSimulatedSlots; ++slot) {
    state.step(trace.row(slot));
    if (record_history) out.history->push_back(state.node_ranks());
    if (state.sink_rank() >= n) {
      out.completion_slot = slot;
      return out;
    }
  }
  throw RuntimeError("simulation did not complete");
}

/// Sink rank after `slots` slots when the source holds `source_rank` packets.
inline std::int64_t queue_sink_rank_after(const Topology& t, ErasureTrace& trace, std::uint64_t slots,
                                          std::int64_t source_rank) {
  PathRankState state(t, source_rank);
  for (std::uint64_t slot = 1; slot <= slots; ++slot) state.step(trace.row(slot));
  return std::min(state.sink_rank(), source_rank);
}

// ---------------------------------------------------------------------------
// Time-expanded max-flow coding engine

/// Incremental max flow from (source, 0) to (sink, t) in the time-expanded
/// graph. Each call to advance() appends one slot layer: memory arcs
/// (v, t) -> (v, t+1) of capacity `cap` for every node and unit transmission
/// arcs (u, t) -> (v, t+1) for every link that succeeds in slot t+1. The flow
/// found so far is carried over to the new sink copy and augmented with unit
/// capacity paths. The residual reachability set is maintained across slots
/// and only recomputed after an augmentation.
class TimeExpandedFlow {
 public:
  TimeExpandedFlow(const Topology& t, std::int64_t cap)
      : nodes_(t.node_count()), source_(t.source()), sink_(t.sink()), cap_(cap) {
    for (const auto& l : t.links()) endpoints_.push_back({l.src, l.dst});
    add_layer_nodes();
    reach_[source_] = 1;
  }

  std::int64_t value() const { return value_; }
  std::uint64_t slots() const { return layer_; }

  std::int64_t advance(std::span<const std::uint8_t> row) {
    ++layer_;
    add_layer_nodes();
    const std::size_t prev = (layer_ - 1) * nodes_;
    const std::size_t cur = layer_ * nodes_;
    const std::size_t first_new_arc = arcs_.size();
    std::size_t sink_memory = 0;
    for (std::size_t v = 0; v < nodes_; ++v) {
      const std::size_t a = add_arc(prev + v, cur + v, cap_);
      if (v == sink_) sink_memory = a;
    }
    for (std::size_t l = 0; l < endpoints_.size(); ++l) {
      if (row[l]) add_arc(prev + endpoints_[l].first, cur + endpoints_[l].second, 1);
    }
    arcs_[sink_memory].flow = value_;

    const std::size_t target = cur + sink_;
    for (std::size_t a = first_new_arc; a < arcs_.size(); a += 2) {
      const std::size_t from = arcs_[a + 1].to;
      const std::size_t to = arcs_[a].to;
      if (reach_[from] && !reach_[to] && residual(a) > 0) {
        reach_[to] = 1;
        parent_[to] = a;
      }
    }
    while (reach_[target] && value_ < cap_) {
      std::int64_t bottleneck = cap_ - value_;
      for (std::size_t v = target; v != source_; v = arcs_[parent_[v] ^ 1].to) {
        bottleneck = std::min(bottleneck, residual(parent_[v]));
      }
      for (std::size_t v = target; v != source_; v = arcs_[parent_[v] ^ 1].to) push(parent_[v], bottleneck);
      value_ += bottleneck;
      recompute_reach(target);
    }
    return value_;
  }

 private:
  struct Arc {
    std::size_t to;
    std::int64_t cap;
    std::int64_t flow;
  };

  void add_layer_nodes() {
    adjacency_.resize(adjacency_.size() + nodes_);
    reach_.resize(reach_.size() + nodes_, 0);
    parent_.resize(parent_.size() + nodes_, 0);
  }

  std::size_t add_arc(std::size_t from, std::size_t to, std::int64_t cap) {
    const std::size_t id = arcs_.size();
    arcs_.push_back({to, cap, 0});
    arcs_.push_back({from, 0, 0});
    adjacency_[from].push_back(id);
    adjacency_[to].push_back(id + 1);
    return id;
  }

  std::int64_t residual(std::size_t a) const {
    return a % 2 == 0 ? arcs_[a].cap - arcs_[a].flow : arcs_[a ^ 1].flow;
  }

  void push(std::size_t a, std::int64_t amount) {
    if (a % 2 == 0) {
      arcs_[a].flow += amount;
    } else {
      arcs_[a ^ 1].flow -= amount;
    }
  }

  // BFS from (source, 0); the target is marked but never expanded.
  void recompute_reach(std::size_t target) {
    std::fill(reach_.begin(), reach_.end(), 0);
    std::deque<std::size_t> queue{source_};
    reach_[source_] = 1;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      if (u == target) continue;
      for (std::size_t a : adjacency_[u]) {
        const std::size_t v = arcs_[a].to;
        if (!reach_[v] && residual(a) > 0) {
          reach_[v] = 1;
          parent_[v] = a;
          queue.push_back(v);
        }
      }
    }
  }

  std::size_t nodes_;
  std::size_t source_;
  std::size_t sink_;
  std::int64_t cap_;
  std::vector<std::pair<std::size_t, std::size_t>> endpoints_;
  std::vector<Arc> arcs_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::uint8_t> reach_;
  std::vector<std::size_t> parent_;
  std::int64_t value_ = 0;
  std::uint64_t layer_ = 0;
};

inline SimOutcome simulate_coding_maxflow(const Topology& t, std::int64_t n, ErasureTrace& trace) {
  detail::require_packets(n);
  SimOutcome out;
  out.strategy = Strategy::CodingMaxflow;
  if (n == 0) return out;
  TimeExpandedFlow flow(t, n);
  for (std::uint64_t slot = 1; slot < kMaxSimulatedSlots; ++slot) {
    if (flow.advance(trace.row(slot)) >= n) {
      out.completion_slot = slot;
      return out;
    }
  }
  throw RuntimeError("simulation did not complete");
}

/// R_1 .. R_horizon for a source with effectively unlimited supply.
inline std::vector<std::int64_t> received_rank_profile(const Topology& t, ErasureTrace& trace,
                                                       std::uint64_t horizon) {
  const auto cap = static_cast<std::int64_t>(horizon * t.link_count() + 1);
  TimeExpandedFlow flow(t, cap);
  std::vector<std::int64_t> out;
  out.reserve(horizon);
  for (std::uint64_t slot = 1; slot <= horizon; ++slot) out.push_back(flow.advance(trace.row(slot)));
  return out;
}

// ---------------------------------------------------------------------------
// Hop-by-hop ARQ routing

/// Single-copy FIFO buffers along one chain. queue[j] holds packets at the
/// j-th node of the chain (0 = source) waiting to cross hop j + 1.
struct ChainQueues {
  std::vector<std::int64_t> queue;
  std::int64_t delivered = 0;

  ChainQueues(std::size_t hops, std::int64_t at_source) : queue(hops, 0) {
    if (!queue.empty()) queue[0] = at_source;
  }

  /// Advances one slot; hop j uses links[j]. Returns packets delivered this slot.
  std::int64_t step(std::span<const std::uint8_t> row, std::span<const std::size_t> links) {
    std::int64_t arrived = 0;
    for (std::size_t j = links.size(); j >= 1; --j) {
      const std::size_t hop = j - 1;
      if (row[links[hop]] && queue[hop] > 0) {
        --queue[hop];
        if (j == links.size()) {
          ++delivered;
          ++arrived;
        } else {
          ++queue[hop + 1];
        }
      }
    }
    return arrived;
  }

  std::int64_t peak_intermediate() const {
    std::int64_t m = 0;
    for (std::size_t j = 1; j < queue.size(); ++j) m = std::max(m, queue[j]);
    return m;
  }
};

inline SimOutcome simulate_routing(const Topology& t, std::span<const std::int64_t> allocation,
                                   ErasureTrace& trace) {
  if (t.kind() == TopologyKind::General) throw ConfigError("routing requires a line or parallel-paths topology");
  if (allocation.size() != t.paths().size())
    throw ConfigError("allocation has " + std::to_string(allocation.size()) + " entries but topology has " +
                      std::to_string(t.paths().size()) + " paths");
  std::int64_t n = 0;
  for (std::int64_t a : allocation) {
    if (a < 0) throw ConfigError("allocation entries must be non-negative");
    n += a;
  }
  SimOutcome out;
  out.strategy = Strategy::Routing;
  if (n == 0) return out;
  std::vector<ChainQueues> chains;
  for (std::size_t i = 0; i < t.paths().size(); ++i) chains.emplace_back(t.paths()[i].size(), allocation[i]);
  std::int64_t delivered = 0;
  for (std::uint64_t slot = 1; slot < kMaxSimulatedSlots; ++slot) {
    const auto row = trace.row(slot);
    for (std::size_t i = 0; i < chains.size(); ++i) {
      delivered += chains[i].step(row, t.paths()[i]);
      out.peak_buffer = std::max(out.peak_buffer, chains[i].peak_intermediate());
    }
    if (delivered >= n) {
      out.completion_slot = slot;
      return out;
    }
  }
  throw RuntimeError("simulation did not complete");
}

}  // namespace pktdelay
