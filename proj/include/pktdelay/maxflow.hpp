#pragma once

#include <cstddef>
#include <deque>
#include <limits>
#include <vector>

namespace pktdelay {

// Edmonds-Karp max flow over an arbitrary ordered field (Rational for the
// exact topology computations). Edge ids are returned by add_edge and stay
// valid; flow(id) reports the flow placed on that edge.
template <typename Cap>
class FlowNetwork {
 public:
  explicit FlowNetwork(std::size_t nodes) : adjacency_(nodes) {}

  std::size_t add_edge(std::size_t from, std::size_t to, const Cap& capacity) {
    const std::size_t id = arcs_.size();
    arcs_.push_back({to, capacity, Cap(0)});
    arcs_.push_back({from, Cap(0), Cap(0)});
    adjacency_[from].push_back(id);
    adjacency_[to].push_back(id + 1);
    return id / 2;
  }

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return arcs_.size() / 2; }

  const Cap& flow(std::size_t edge) const { return arcs_[2 * edge].flow; }
  const Cap& capacity(std::size_t edge) const { return arcs_[2 * edge].capacity; }
  std::size_t head(std::size_t edge) const { return arcs_[2 * edge].to; }
  std::size_t tail(std::size_t edge) const { return arcs_[2 * edge + 1].to; }

  Cap max_flow(std::size_t source, std::size_t sink) {
    Cap total = 0;
    if (source == sink) return total;
    std::vector<std::size_t> parent_arc(adjacency_.size());
    while (true) {
      std::vector<bool> seen(adjacency_.size(), false);
      std::deque<std::size_t> queue{source};
      seen[source] = true;
      while (!queue.empty() && !seen[sink]) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (std::size_t a : adjacency_[u]) {
          const Arc& arc = arcs_[a];
          if (!seen[arc.to] && residual(a) > 0) {
            seen[arc.to] = true;
            parent_arc[arc.to] = a;
            queue.push_back(arc.to);
          }
        }
      }
      if (!seen[sink]) break;
      Cap bottleneck = residual(parent_arc[sink]);
      for (std::size_t v = sink; v != source; v = arcs_[parent_arc[v] ^ 1].to) {
        const Cap r = residual(parent_arc[v]);
        if (r < bottleneck) bottleneck = r;
      }
      for (std::size_t v = sink; v != source; v = arcs_[parent_arc[v] ^ 1].to) {
        push(parent_arc[v], bottleneck);
      }
      total += bottleneck;
    }
    return total;
  }

  /// Nodes reachable from `source` in the residual graph (source side of a min cut).
  std::vector<bool> residual_reachable(std::size_t source) const {
    std::vector<bool> seen(adjacency_.size(), false);
    std::deque<std::size_t> queue{source};
    seen[source] = true;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t a : adjacency_[u]) {
        if (!seen[arcs_[a].to] && residual(a) > 0) {
          seen[arcs_[a].to] = true;
          queue.push_back(arcs_[a].to);
        }
      }
    }
    return seen;
  }

 private:
  struct Arc {
    std::size_t to;
    Cap capacity;
    Cap flow;
  };

  // Reverse arcs have capacity 0 and carry the negated flow of their partner.
  Cap residual(std::size_t a) const {
    if (a % 2 == 0) return arcs_[a].capacity - arcs_[a].flow;
    return arcs_[a ^ 1].flow;
  }

  void push(std::size_t a, const Cap& amount) {
    if (a % 2 == 0) {
      arcs_[a].flow += amount;
    } else {
      arcs_[a ^ 1].flow -= amount;
    }
  }

  std::vector<Arc> arcs_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

}  // namespace pktdelay
